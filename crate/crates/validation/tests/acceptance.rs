//! Acceptance criteria C1-C9, one PASS/FAIL line each.
//!
//! The statistical criteria share one fixed ensemble: every cell runs
//! `REPLICATIONS` seeds derived from `BASE_SEED` by the sweep harness, so a
//! cell reused by several criteria is simulated once.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::time::Instant;

use collapse_core::density::{eval_grid, fit_kde, hellinger, Grid, GriddedPdf, KdeSpec};
use collapse_core::distributions::TrueDistribution;
use collapse_core::diversity::{dbscan, pielou_evenness, shannon_index, FrequencyTable, Metric};
use collapse_core::io::write_run;
use collapse_core::plot::{
    distance_lines_svg, kde_overlay_svg, read_curve, read_distance_series, Labels,
};
use collapse_core::simulation::{run_simulation, SimConfig};
use collapse_core::stats::{mean, welch_greater};
use collapse_core::sweep::{run_sweep, write_sweep, Axes, RunStatus, SweepGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, Normal};

#[path = "../../core/tests/common/mod.rs"]
mod common;
use common::{dbscan_oracle, random_points};

const REPLICATIONS: usize = 100;
const BASE_SEED: u64 = 1;

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Cell {
    delta: f64,
    eta: f64,
    sigma_tr: f64,
    period: Option<usize>,
    df: f64,
}

impl Cell {
    fn base() -> Self {
        let d = SimConfig::default();
        Self {
            delta: d.delta,
            eta: d.eta,
            sigma_tr: d.sigma_tr,
            period: d.generation_period,
            df: d.df,
        }
    }

    fn delta(self, delta: f64) -> Self {
        Self { delta, ..self }
    }

    fn eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    fn sigma_tr(self, sigma_tr: f64) -> Self {
        Self { sigma_tr, ..self }
    }

    fn period(self, period: Option<usize>) -> Self {
        Self { period, ..self }
    }

    fn df(self, df: f64) -> Self {
        Self { df, ..self }
    }

    fn key(&self) -> String {
        format!(
            "{}/{}/{}/{:?}/{}",
            self.delta, self.eta, self.sigma_tr, self.period, self.df
        )
    }
}

struct Ensemble {
    cache: RefCell<BTreeMap<String, Vec<f64>>>,
    failures: RefCell<usize>,
}

impl Ensemble {
    fn new() -> Self {
        Self {
            cache: RefCell::new(BTreeMap::new()),
            failures: RefCell::new(0),
        }
    }

    /// Final Hellinger distances of every replication in `cell`.
    fn finals(&self, cell: Cell) -> Vec<f64> {
        if let Some(v) = self.cache.borrow().get(&cell.key()) {
            return v.clone();
        }
        let grid = SweepGrid {
            name: None,
            axes: Axes {
                delta: vec![cell.delta],
                eta: vec![cell.eta],
                sigma_tr: vec![cell.sigma_tr],
                generation_period: vec![cell.period],
                df: vec![cell.df],
            },
            replications: REPLICATIONS,
            base: SimConfig::default(),
            base_seed: BASE_SEED,
            group_by: None,
            save_final_pdfs: false,
        };
        let result = run_sweep(&grid, 0).expect("valid grid");
        let mut out = Vec::new();
        for r in &result.runs {
            match (&r.status, r.final_hellinger) {
                (RunStatus::Ok, Some(h)) => out.push(h),
                _ => *self.failures.borrow_mut() += 1,
            }
        }
        self.cache.borrow_mut().insert(cell.key(), out.clone());
        out
    }
}

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("{id} {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), pass, detail));
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn c1(e: &Ensemble, r: &mut Report) {
    let start = Instant::now();
    let base = Cell::base();
    let h1 = e.finals(base.delta(1.0));
    let h8 = e.finals(base.delta(0.8));
    let h5 = e.finals(base.delta(0.5));
    let secs = start.elapsed().as_secs_f64();
    let (m1, m8, m5) = (mean(&h1), mean(&h8), mean(&h5));
    let (p18, p85) = (welch_greater(&h8, &h1), welch_greater(&h5, &h8));
    let (r8, r5) = (m8 / m1, m5 / m1);
    let pass = within(m1, 0.09, 0.06)
        && within(m8, 0.22, 0.08)
        && within(m5, 0.40, 0.10)
        && p18 < 0.01
        && p85 < 0.01
        && (1.5..=3.5).contains(&r8)
        && (2.2..=4.5).contains(&r5)
        && secs < 300.0;
    r.check(
        "C1",
        pass,
        format!(
            "H(1.0)={m1:.3} H(0.8)={m8:.3} H(0.5)={m5:.3} ratios {r8:.2} {r5:.2} p {p18:.2e} {p85:.2e} n={} ensemble {secs:.0}s",
            h1.len()
        ),
    );
}

fn c2(e: &Ensemble, r: &mut Report) {
    let half = Cell::base().delta(0.5);
    let (lo, hi) = (e.finals(half.eta(0.001)), e.finals(half.eta(0.1)));
    let p = welch_greater(&lo, &hi);
    let one = Cell::base().delta(1.0);
    let (a, b) = (
        mean(&e.finals(one.eta(0.001))),
        mean(&e.finals(one.eta(0.1))),
    );
    let pass = mean(&lo) > mean(&hi) && p < 0.01 && (a - b).abs() < 0.05;
    r.check(
        "C2",
        pass,
        format!(
            "delta=0.5: eta 0.001 -> {:.3}, eta 0.1 -> {:.3}, p {p:.2e}; delta=1: {a:.3} vs {b:.3} (|diff| {:.3})",
            mean(&lo),
            mean(&hi),
            (a - b).abs()
        ),
    );
}

fn c3(e: &Ensemble, r: &mut Report) {
    let half = Cell::base().delta(0.5);
    let s25 = e.finals(half.sigma_tr(0.25));
    let s75 = e.finals(half.sigma_tr(0.75));
    let s2 = e.finals(half.sigma_tr(2.0));
    let (p1, p2) = (welch_greater(&s25, &s75), welch_greater(&s75, &s2));
    let wide8 = mean(&e.finals(Cell::base().delta(0.8).sigma_tr(2.0)));
    let wide1 = mean(&e.finals(Cell::base().delta(1.0).sigma_tr(2.0)));
    let pass = p1 < 0.01 && p2 < 0.01 && wide8 < 0.15 && wide1 < 0.15;
    r.check(
        "C3",
        pass,
        format!(
            "delta=0.5: sigma_tr 0.25/0.75/2.0 -> {:.3}/{:.3}/{:.3} p {p1:.2e} {p2:.2e}; sigma_tr=2 at delta 0.8/1.0 -> {wide8:.3}/{wide1:.3}",
            mean(&s25),
            mean(&s75),
            mean(&s2)
        ),
    );
}

fn c4(e: &Ensemble, r: &mut Report) {
    let half = Cell::base().delta(0.5);
    let none = e.finals(half.period(None));
    let mut means = Vec::new();
    let mut worst_p: f64 = 0.0;
    for p in [3, 5, 10, 20] {
        let h = e.finals(half.period(Some(p)));
        worst_p = worst_p.max(welch_greater(&h, &none));
        means.push(mean(&h));
    }
    let spread = means.iter().cloned().fold(f64::MIN, f64::max)
        - means.iter().cloned().fold(f64::MAX, f64::min);
    let below = means.iter().all(|&m| mean(&none) < m);
    let pass = below && worst_p < 0.01 && spread < 0.10;
    r.check(
        "C4",
        pass,
        format!(
            "none -> {:.3}; periods 3/5/10/20 -> {:.3}/{:.3}/{:.3}/{:.3}; max p {worst_p:.2e}; spread {spread:.3} (limit 0.10)",
            mean(&none),
            means[0],
            means[1],
            means[2],
            means[3]
        ),
    );
}

fn c5(e: &Ensemble, r: &mut Report) {
    let half = Cell::base().delta(0.5);
    let (d3, d10, d9999) = (
        e.finals(half.df(3.0)),
        e.finals(half.df(10.0)),
        e.finals(half.df(9999.0)),
    );
    let p = welch_greater(&d3, &d10);
    let gap = (mean(&d9999) - mean(&d10)).abs();
    let pass = mean(&d3) > mean(&d10) && p < 0.05 && gap <= 0.08;
    r.check(
        "C5",
        pass,
        format!(
            "delta=0.5: df 3/10/9999 -> {:.3}/{:.3}/{:.3}; p(df3 > df10) {p:.3}; |df9999 - df10| {gap:.3}",
            mean(&d3),
            mean(&d10),
            mean(&d9999)
        ),
    );
}

fn normal_on(grid: Grid, mu: f64) -> GriddedPdf {
    let n = Normal::new(mu, 1.0).unwrap();
    GriddedPdf::from_values(grid, grid.points().map(|x| n.pdf(x)).collect()).unwrap()
}

fn c6(r: &mut Report) {
    let start = Instant::now();
    let grid = Grid::default();
    let h = hellinger(&normal_on(grid, 0.0), &normal_on(grid, 1.0)).unwrap();
    let oracle_ok = (h - 0.342787).abs() <= 1e-4;

    let small = Grid::new(-3.0, 3.0, 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let random_pdf = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<f64> = (0..small.n_points).map(|_| rng.random::<f64>()).collect();
        // Some pdfs get holes so supports differ.
        for x in v.iter_mut() {
            if rng.random::<f64>() < 0.2 {
                *x = 0.0;
            }
        }
        v[0] += 1e-3;
        GriddedPdf::from_values(small, v).unwrap()
    };
    let mut violations = 0;
    for _ in 0..1000 {
        let (p, q, s) = (
            random_pdf(&mut rng),
            random_pdf(&mut rng),
            random_pdf(&mut rng),
        );
        let pq = hellinger(&p, &q).unwrap();
        let ok = hellinger(&p, &p).unwrap() == 0.0
            && pq == hellinger(&q, &p).unwrap()
            && (0.0..=1.0).contains(&pq)
            && pq <= hellinger(&p, &s).unwrap() + hellinger(&s, &q).unwrap() + 1e-12;
        violations += usize::from(!ok);
    }

    let truth = TrueDistribution::standard(10.0).unwrap();
    let xs: Vec<f64> = (0..100_000).map(|_| truth.sample(&mut rng)).collect();
    let spec = KdeSpec::default();
    let kde_h = hellinger(
        &fit_kde(&xs, &spec).unwrap(),
        &eval_grid(&truth, &spec.grid).unwrap(),
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "C6",
        oracle_ok && violations == 0 && kde_h <= 0.03,
        format!("H(N(0,1), N(1,1)) = {h:.6}; metric violations {violations}/1000; KDE(1e5) vs t10 = {kde_h:.4}; {secs:.1}s"),
    );
}

fn c7(r: &mut Report) {
    let j1 = format!("{:.2}", pielou_evenness(4.01, 2693).unwrap());
    let j2 = format!("{:.2}", pielou_evenness(7.02, 2693).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for trial in 0..1000 {
        let r_size = rng.random_range(2..60);
        let labels: Vec<String> = (0..r_size).map(|i| format!("e{i:02}")).collect();
        let counts: BTreeMap<String, u64> = match trial % 3 {
            0 => labels.iter().map(|l| (l.clone(), 7)).collect(),
            1 => [(
                labels[rng.random_range(0..r_size)].clone(),
                rng.random_range(1..500),
            )]
            .into(),
            _ => labels
                .iter()
                .map(|l| (l.clone(), rng.random_range(0..20)))
                .collect(),
        };
        if counts.values().sum::<u64>() == 0 {
            continue;
        }
        let t = FrequencyTable::from_counts(&labels, &counts).unwrap();
        let h = shannon_index(&t).unwrap();
        let j = pielou_evenness(h, r_size).unwrap();
        let ln_r = (r_size as f64).ln();
        let mut ok = (0.0..=ln_r + 1e-12).contains(&h);
        ok &= match trial % 3 {
            0 => (j - 1.0).abs() < 1e-12,
            1 => h == 0.0,
            _ => (0.0..=1.0).contains(&j),
        };
        violations += usize::from(!ok);
    }
    r.check(
        "C7",
        j1 == "0.51" && j2 == "0.89" && violations == 0,
        format!(
            "J'(4.01, 2693) = {j1}; J'(7.02, 2693) = {j2}; property violations {violations}/1000"
        ),
    );
}

fn c8(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=25);
        let dim = rng.random_range(1..=3);
        let set = random_points(&mut rng, n, dim);
        let eps = rng.random_range(0.5..4.0);
        let min_pts = rng.random_range(1..=5);
        let got = dbscan(&set, eps, min_pts, Metric::Euclidean).unwrap();
        mismatches += usize::from(got != dbscan_oracle(&set, eps, min_pts));
    }
    r.check(
        "C8",
        mismatches == 0,
        format!(
            "DBSCAN vs brute-force oracle: {mismatches}/100 mismatches; {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    );
}

fn same_files(a: &[std::path::PathBuf], b: &[std::path::PathBuf]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.file_name() == y.file_name() && std::fs::read(x).unwrap() == std::fs::read(y).unwrap()
        })
}

fn c9(r: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |s: &str| tmp.path().join(s);

    let config = SimConfig {
        seed: 99,
        ..SimConfig::default()
    };
    let ra = write_run(&run_simulation(&config).unwrap(), &dir("run_a"), "t", "0").unwrap();
    let rb = write_run(&run_simulation(&config).unwrap(), &dir("run_b"), "t", "0").unwrap();
    let runs_same = same_files(&ra, &rb);

    let grid = SweepGrid {
        name: Some("determinism".into()),
        axes: Axes {
            delta: vec![1.0, 0.6, 0.2],
            generation_period: vec![None, Some(10)],
            ..Axes::default()
        },
        replications: 4,
        base: SimConfig::default(),
        base_seed: 9,
        group_by: None,
        save_final_pdfs: true,
    };
    let s1 = write_sweep(&run_sweep(&grid, 1).unwrap(), &dir("w1"), "t", "0").unwrap();
    let s8 = write_sweep(&run_sweep(&grid, 8).unwrap(), &dir("w8"), "t", "0").unwrap();
    let sweeps_same = same_files(&s1, &s8);

    let labels = Labels {
        title: "t".into(),
        x: "x".into(),
        y: "y".into(),
    };
    let curves = || {
        s1.iter()
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .filter(|p| p.file_name().unwrap().to_string_lossy().contains("pdf"))
            .map(|p| read_curve(p, p.file_stem().unwrap().to_string_lossy()).unwrap())
            .collect::<Vec<_>>()
    };
    let lines = || {
        read_distance_series(
            &dir("w1/aggregate.csv"),
            "delta",
            Some("generation_period"),
            "mean_hellinger",
        )
        .unwrap()
    };
    let plots_same = kde_overlay_svg(&curves(), &labels).unwrap()
        == kde_overlay_svg(&curves(), &labels).unwrap()
        && distance_lines_svg(&lines(), &labels).unwrap()
            == distance_lines_svg(&lines(), &labels).unwrap();

    r.check(
        "C9",
        runs_same && sweeps_same && plots_same,
        format!(
            "run repeat identical: {runs_same}; sweep workers 1 vs 8 identical ({} files): {sweeps_same}; plots identical: {plots_same}",
            s1.len()
        ),
    );
}

fn main() {
    let mut report = Report { lines: Vec::new() };
    let ensemble = Ensemble::new();
    println!("ensemble: {REPLICATIONS} replications per cell, base seed {BASE_SEED}");
    c1(&ensemble, &mut report);
    c2(&ensemble, &mut report);
    c3(&ensemble, &mut report);
    c4(&ensemble, &mut report);
    c5(&ensemble, &mut report);
    c6(&mut report);
    c7(&mut report);
    c8(&mut report);
    c9(&mut report);
    let failed_runs = *ensemble.failures.borrow();
    if failed_runs > 0 {
        report.check(
            "runs",
            false,
            format!("{failed_runs} simulation runs failed"),
        );
    }
    let failed: Vec<&str> = report
        .lines
        .iter()
        .filter(|l| !l.1)
        .map(|l| l.0.as_str())
        .collect();
    println!(
        "acceptance: {} of {} criteria pass{}",
        report.lines.len() - failed.len(),
        report.lines.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failing: {}", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
