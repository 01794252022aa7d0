//! Ground-truth knowledge distribution: a location-scale Student-t.
//!
//! The degrees of freedom must exceed 2 so the standard deviation is finite;
//! generational turnover rescales the distribution to a target standard
//! deviation and the truncation bounds are expressed in those units.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueDistribution {
    df: f64,
    location: f64,
    scale: f64,
}

impl TrueDistribution {
    pub fn new(df: f64, location: f64, scale: f64) -> Result<Self> {
        if !(df.is_finite() && df > 2.0) {
            return Err(Error::config("df", format!("must be > 2, got {df}")));
        }
        if !location.is_finite() {
            return Err(Error::config("location", "must be finite"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::config("scale", format!("must be > 0, got {scale}")));
        }
        Ok(Self {
            df,
            location,
            scale,
        })
    }

    /// Standard t with the given degrees of freedom, centred at zero.
    pub fn standard(df: f64) -> Result<Self> {
        Self::new(df, 0.0, 1.0)
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    pub fn location(&self) -> f64 {
        self.location
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `scale * sqrt(df / (df - 2))`.
    pub fn std(&self) -> f64 {
        self.scale * (self.df / (self.df - 2.0)).sqrt()
    }

    pub fn variance(&self) -> f64 {
        let s = self.std();
        s * s
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let nu = self.df;
        let z = (x - self.location) / self.scale;
        let log_norm = ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (nu * PI).ln()
            - self.scale.ln();
        (log_norm - (nu + 1.0) / 2.0 * (z * z / nu).ln_1p()).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // df > 2 is guaranteed by construction, so StudentT::new cannot fail.
        let t = StudentT::new(self.df).expect("validated degrees of freedom");
        self.location + self.scale * t.sample(rng)
    }

    /// Same df and location, with the scale chosen so that `std()` equals
    /// `target_std`.
    pub fn rescaled(&self, target_std: f64) -> Result<Self> {
        if !(target_std.is_finite() && target_std > 0.0) {
            return Err(Error::config(
                "target_std",
                format!("must be > 0, got {target_std}"),
            ));
        }
        if target_std == self.std() {
            return Ok(*self);
        }
        let scale = target_std * ((self.df - 2.0) / self.df).sqrt();
        Self::new(self.df, self.location, scale)
    }
}

/// What one unit of `sigma_tr` measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationUnits {
    /// The distribution's standard deviation, `scale * sqrt(df / (df - 2))`.
    #[default]
    Std,
    /// The t scale parameter.
    Scale,
}

/// Central truncation window `location ± sigma_tr * std` (or `* scale`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    sigma_tr: f64,
    units: TruncationUnits,
    lower: f64,
    upper: f64,
}

impl TruncationSpec {
    pub fn new(sigma_tr: f64, dist: &TrueDistribution) -> Result<Self> {
        Self::with_units(sigma_tr, TruncationUnits::Std, dist)
    }

    pub fn with_units(
        sigma_tr: f64,
        units: TruncationUnits,
        dist: &TrueDistribution,
    ) -> Result<Self> {
        if !(sigma_tr.is_finite() && sigma_tr > 0.0) {
            return Err(Error::config(
                "sigma_tr",
                format!("must be > 0, got {sigma_tr}"),
            ));
        }
        let unit = match units {
            TruncationUnits::Std => dist.std(),
            TruncationUnits::Scale => dist.scale(),
        };
        let half = sigma_tr * unit;
        Ok(Self {
            sigma_tr,
            units,
            lower: dist.location() - half,
            upper: dist.location() + half,
        })
    }

    pub fn sigma_tr(&self) -> f64 {
        self.sigma_tr
    }

    pub fn units(&self) -> TruncationUnits {
        self.units
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Bounds for the same `sigma_tr` after `dist` has been rescaled.
    pub fn recompute(&self, dist: &TrueDistribution) -> Self {
        Self::with_units(self.sigma_tr, self.units, dist).expect("sigma_tr already validated")
    }
}

pub fn t_pdf(x: f64, dist: &TrueDistribution) -> f64 {
    dist.pdf(x)
}

pub fn t_sample<R: Rng + ?Sized>(rng: &mut R, dist: &TrueDistribution) -> f64 {
    dist.sample(rng)
}

pub fn dist_std(dist: &TrueDistribution) -> f64 {
    dist.std()
}

pub fn rescale_distribution(dist: &TrueDistribution, target_std: f64) -> Result<TrueDistribution> {
    dist.rescaled(target_std)
}

/// Rejection sampler: draws from `dist` until a value lands inside `trunc`.
pub fn truncated_sample<R: Rng + ?Sized>(
    rng: &mut R,
    dist: &TrueDistribution,
    trunc: &TruncationSpec,
) -> f64 {
    truncated_sample_counted(rng, dist, trunc).0
}

/// Like [`truncated_sample`], also returning the number of proposals drawn.
pub fn truncated_sample_counted<R: Rng + ?Sized>(
    rng: &mut R,
    dist: &TrueDistribution,
    trunc: &TruncationSpec,
) -> (f64, u32) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        let x = dist.sample(rng);
        if trunc.contains(x) {
            return (x, attempts);
        }
    }
}
