//! Knowledge-collapse simulation: agents choosing between full-distribution
//! and centrally truncated (AI-mediated) samples, a kernel-density public
//! record scored by Hellinger distance, generational narrowing of the
//! sampling horizon, plus diversity indices for measured output corpora.

pub mod density;
pub mod distributions;
pub mod diversity;
pub mod error;
pub mod io;
pub mod plot;
pub mod simulation;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};

/// Formats a number with 9 significant digits, `%g` style.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    const DIGITS: i32 = 9;
    let exp = v.abs().log10().floor() as i32;
    // rounding can carry into the next decade (9.999999999 -> 10.0000000)
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let exp = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse::<i32>().ok())
        .unwrap_or(exp);
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        let (mantissa, e) = sci.split_once('e').expect("scientific format");
        format!("{}e{}", trim_zeros(mantissa.to_string()), e)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
