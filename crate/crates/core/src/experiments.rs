//! Seeded experiment harnesses emitting long-format CSV reports.
//!
//! Every harness is deterministic in its configuration: randomness comes
//! from per-job ChaCha substreams, parallel work is collected in job order
//! and floating-point reductions run sequentially. Wall-clock columns are
//! only emitted when `timing` is set.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    run_lpnn, run_shape, LpnnConfig, Variant, DEFAULT_MAX_ITERS, DEFAULT_SHAPE_TOL,
};
use crate::error::{Error, Result};
use crate::oracle::exhaustive_search;
use crate::problem::{BandSpec, BinarySequence, DesignProblem, MetricEvaluator, ScoreKind};
use crate::rounding::{
    beta_ratio, derive_seed, domain, mcdiarmid_bound, quantized_principal_eigenvector, run_design,
    sample_trial, substream,
};
use crate::sdp::{solve_relaxation, ProblemGrams, SdpSolution, SolverConfig};
use crate::spectral::gram;
use crate::VERSION;

/// Length the reference band layouts are laid out for.
pub const REFERENCE_N: usize = 128;
/// Message band of the feasibility and ratio studies, as 0-based
/// `(start, width)` runs at the reference length.
pub const STUDY_MESSAGE: [(usize, usize); 2] = [(24, 6), (39, 6)];
pub const STUDY_INTERFERER: [(usize, usize); 2] = [(9, 6), (49, 6)];
/// Message band of the interferer-width study.
pub const WIDTH_MESSAGE: [(usize, usize); 2] = [(0, 10), (49, 11)];
/// First interferer bin of the interferer-width study.
pub const WIDTH_INTERFERER_START: usize = 19;
pub const HISTOGRAM_BINS: usize = 30;
pub const BASELINE_MESSAGE_WIDTH: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FeasibilityVsAlpha,
    FeasibilityVsWidth,
    RatioHistogram,
    BetaDistribution,
    OracleComparison,
    BaselineComparison,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::FeasibilityVsAlpha,
        ExperimentKind::FeasibilityVsWidth,
        ExperimentKind::RatioHistogram,
        ExperimentKind::BetaDistribution,
        ExperimentKind::OracleComparison,
        ExperimentKind::BaselineComparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FeasibilityVsAlpha => "feasibility_vs_alpha",
            ExperimentKind::FeasibilityVsWidth => "feasibility_vs_width",
            ExperimentKind::RatioHistogram => "ratio_histogram",
            ExperimentKind::BetaDistribution => "beta_distribution",
            ExperimentKind::OracleComparison => "oracle_comparison",
            ExperimentKind::BaselineComparison => "baseline_comparison",
        }
    }
}

/// Parameter grid of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Alpha(Vec<f64>),
    Width(Vec<usize>),
    Trials(Vec<usize>),
    /// `(n, K, R)` cells of the β study.
    Cells(Vec<[usize; 3]>),
    /// A single point.
    None,
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Alpha(_) => "alpha",
            Sweep::Width(_) => "width",
            Sweep::Trials(_) => "trials",
            Sweep::Cells(_) => "cell",
            Sweep::None => "none",
        }
    }

    fn len(&self) -> usize {
        match self {
            Sweep::Alpha(v) => v.len(),
            Sweep::Width(v) => v.len(),
            Sweep::Trials(v) => v.len(),
            Sweep::Cells(v) => v.len(),
            Sweep::None => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub problem: DesignProblem,
    pub sweep: Sweep,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_max_iters")]
    pub shape_max_iters: usize,
    #[serde(default)]
    pub lpnn: LpnnConfig,
    /// Emit wall-clock columns; off by default so reports are reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

/// Rounds half away from zero.
fn scaled(v: usize, n: usize) -> usize {
    (v as f64 * n as f64 / REFERENCE_N as f64).round() as usize
}

/// Maps `(start, width)` runs laid out for the reference length onto length
/// `n`: starts and widths scale by `n / 128`, widths stay at least 1 and
/// bins are clipped to `n`.
pub fn scale_runs(n: usize, runs: &[(usize, usize)]) -> BandSpec {
    let mut bins = Vec::new();
    for &(start, width) in runs {
        let s = scaled(start, n);
        let w = scaled(width, n).max(1);
        bins.extend((s..s + w).filter(|&b| b < n));
    }
    bins.sort_unstable();
    bins.dedup();
    BandSpec::new(bins).expect("sorted and deduplicated")
}

/// The feasibility / ratio study problem at length `n`.
pub fn study_problem(n: usize, alpha: f64, trials: usize, seed: u64) -> Result<DesignProblem> {
    DesignProblem::new(
        n,
        scale_runs(n, &STUDY_MESSAGE),
        scale_runs(n, &STUDY_INTERFERER),
        alpha,
        trials,
        seed,
    )
}

/// Interferer band of the width study: `width` bins from the scaled start.
pub fn width_interferer(n: usize, width: usize) -> BandSpec {
    BandSpec::contiguous(scaled(WIDTH_INTERFERER_START, n), width)
}

pub fn width_problem(
    n: usize,
    width: usize,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<DesignProblem> {
    DesignProblem::new(
        n,
        scale_runs(n, &WIDTH_MESSAGE),
        width_interferer(n, width),
        alpha,
        trials,
        seed,
    )
}

impl ExperimentConfig {
    /// Desk-scale defaults (n = 64), or full-size runs with `full_scale`.
    pub fn defaults(kind: ExperimentKind, full_scale: bool, seed: u64) -> Result<Self> {
        let n = if full_scale { REFERENCE_N } else { 64 };
        let trials = if full_scale { 100_000 } else { 10_000 };
        let repetitions = 20;
        let (problem, sweep, repetitions) = match kind {
            ExperimentKind::FeasibilityVsAlpha => {
                let top = if full_scale { 20 } else { 10 };
                let grid = (1..=top).map(|k| k as f64 * 0.5).collect();
                (study_problem(n, 5.0, trials, seed)?, Sweep::Alpha(grid), 1)
            }
            ExperimentKind::FeasibilityVsWidth => {
                let top = if full_scale { 20 } else { 10 };
                (
                    width_problem(n, 1, 3.0, trials, seed)?,
                    Sweep::Width((1..=top).collect()),
                    1,
                )
            }
            ExperimentKind::RatioHistogram => {
                let trials = if full_scale { 1_000_000 } else { trials };
                (study_problem(n, 5.0, trials, seed)?, Sweep::None, 1)
            }
            ExperimentKind::BetaDistribution => {
                let mut cells = vec![[32, 4, 4], [64, 8, 8]];
                if full_scale {
                    cells.push([128, 12, 12]);
                }
                (study_problem(n, 5.0, 1, seed)?, Sweep::Cells(cells), 1000)
            }
            ExperimentKind::OracleComparison => {
                let p = DesignProblem::new(
                    16,
                    BandSpec::new(vec![0, 1])?,
                    BandSpec::new(vec![2, 3])?,
                    4.0,
                    4096,
                    seed,
                )?;
                let reps = if full_scale { 420 } else { repetitions };
                (p, Sweep::Trials(vec![16, 64, 256, 1024, 4096]), reps)
            }
            ExperimentKind::BaselineComparison => {
                let reps = if full_scale { 100 } else { repetitions };
                let p = DesignProblem::new(
                    n,
                    BandSpec::contiguous(1, BASELINE_MESSAGE_WIDTH),
                    BandSpec::contiguous(20, 1),
                    5.0,
                    trials,
                    seed,
                )?;
                (p, Sweep::Width((1..=10).collect()), reps)
            }
        };
        Ok(Self {
            kind,
            problem,
            sweep,
            repetitions,
            seed,
            solver: SolverConfig::default(),
            shape_max_iters: DEFAULT_MAX_ITERS,
            lpnn: LpnnConfig::default(),
            timing: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.len() == 0 {
            return Err(Error::InvalidConfig("sweep grid is empty".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig(
                "repetitions must be at least 1".into(),
            ));
        }
        let expected = match self.kind {
            ExperimentKind::FeasibilityVsAlpha => "alpha",
            ExperimentKind::FeasibilityVsWidth | ExperimentKind::BaselineComparison => "width",
            ExperimentKind::RatioHistogram => "none",
            ExperimentKind::BetaDistribution => "cell",
            ExperimentKind::OracleComparison => "trials",
        };
        if self.sweep.name() != expected {
            return Err(Error::InvalidConfig(format!(
                "{} expects a '{expected}' sweep, got '{}'",
                self.kind.name(),
                self.sweep.name()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sweep: f64,
    pub series: String,
    pub statistic: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

impl ReportRow {
    fn new(sweep: f64, series: &str, statistic: &str, value: f64, std_error: Option<f64>) -> Self {
        Self {
            sweep,
            series: series.into(),
            statistic: statistic.into(),
            value,
            std_error,
        }
    }

    fn failed(sweep: f64, err: &Error) -> Self {
        Self::new(sweep, "FAILED", &err.to_string(), f64::NAN, None)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub version: &'static str,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct CsvRecord<'a> {
    kind: &'a str,
    seed: u64,
    version: &'a str,
    sweep_name: &'a str,
    sweep: f64,
    series: &'a str,
    statistic: &'a str,
    value: f64,
    std_error: Option<f64>,
    config: &'a str,
}

impl ExperimentReport {
    /// `<kind>_<seed>.csv`.
    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.config.kind.name(), self.config.seed)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.series == "FAILED").count()
    }

    /// Rows matching a series and statistic, in report order.
    pub fn select(&self, series: &str, statistic: &str) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.series == series && r.statistic == statistic)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let config = serde_json::to_string(&self.config)?;
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(CsvRecord {
                kind: self.config.kind.name(),
                seed: self.config.seed,
                version: self.version,
                sweep_name: self.config.sweep.name(),
                sweep: r.sweep,
                series: &r.series,
                statistic: &r.statistic,
                value: r.value,
                std_error: r.std_error,
                config: &config,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let rows = match cfg.kind {
        ExperimentKind::FeasibilityVsAlpha => exp_feasibility_vs_alpha(cfg)?,
        ExperimentKind::FeasibilityVsWidth => exp_feasibility_vs_width(cfg)?,
        ExperimentKind::RatioHistogram => exp_ratio_histogram(cfg)?,
        ExperimentKind::BetaDistribution => exp_beta_distribution(cfg)?,
        ExperimentKind::OracleComparison => exp_oracle_comparison(cfg)?,
        ExperimentKind::BaselineComparison => exp_baseline_comparison(cfg)?,
    };
    Ok(ExperimentReport {
        config: cfg.clone(),
        version: VERSION,
        rows,
    })
}

// Statistics

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || !mean.is_finite() {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some((var / n as f64).sqrt()))
}

/// Rate and its binomial standard error.
pub fn binomial(successes: usize, total: usize) -> (f64, f64) {
    let r = successes as f64 / total as f64;
    (r, (r * (1.0 - r) / total as f64).sqrt())
}

// Sampling helpers

/// Uniform ±1 sequence `index` on a stream separate from the rounding trials.
pub fn uniform_sequence(n: usize, seed: u64, index: usize) -> BinarySequence {
    let mut rng = substream(seed, domain::UNIFORM, index as u64);
    let entries = (0..n)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();
    BinarySequence::new(entries).expect("entries are ±1")
}

/// Interferer power of every rounded candidate, in trial order.
fn rounded_interferer_powers(p: &DesignProblem, sol: &SdpSolution) -> Result<Vec<f64>> {
    let eval = MetricEvaluator::new(p)?;
    (0..p.trials)
        .into_par_iter()
        .map(|l| {
            eval.evaluate(&sample_trial(&sol.factor, p.seed, l))
                .map(|m| m.interferer_power)
        })
        .collect()
}

fn uniform_interferer_powers(p: &DesignProblem) -> Result<Vec<f64>> {
    let eval = MetricEvaluator::new(p)?;
    (0..p.trials)
        .into_par_iter()
        .map(|l| {
            eval.evaluate(&uniform_sequence(p.n, p.seed, l))
                .map(|m| m.interferer_power)
        })
        .collect()
}

// Feasibility

fn feasibility_rows(
    p: &DesignProblem,
    cfg: &ExperimentConfig,
    sweep: f64,
) -> Result<Vec<ReportRow>> {
    let sol = solve_relaxation(p, &cfg.solver)?;
    let rounded = rounded_interferer_powers(p, &sol)?;
    let uniform = uniform_interferer_powers(p)?;
    let beta = beta_ratio(&sol.matrix, &ProblemGrams::new(p)?.interferer);
    let threshold = (beta + 1.0) * p.alpha / PI;
    let l = p.trials;
    let (r_rate, r_se) = binomial(rounded.iter().filter(|&&g| g <= p.alpha).count(), l);
    let (u_rate, u_se) = binomial(uniform.iter().filter(|&&g| g <= p.alpha).count(), l);
    let (e_rate, e_se) = binomial(rounded.iter().filter(|&&g| g >= threshold).count(), l);
    let mut rows = vec![
        ReportRow::new(sweep, "rounded", "feasibility_rate", r_rate, Some(r_se)),
        ReportRow::new(sweep, "uniform", "feasibility_rate", u_rate, Some(u_se)),
        ReportRow::new(sweep, "rounded", "beta", beta, None),
        ReportRow::new(sweep, "rounded", "exceedance_threshold", threshold, None),
        ReportRow::new(sweep, "rounded", "exceedance_rate", e_rate, Some(e_se)),
    ];
    if let Ok(bound) = mcdiarmid_bound(p) {
        rows.push(ReportRow::new(sweep, "bound", "mcdiarmid", bound, None));
    }
    Ok(rows)
}

fn collect_points<T: Sync>(
    points: &[T],
    job: impl Fn(&T) -> (f64, Result<Vec<ReportRow>>) + Sync,
) -> Vec<ReportRow> {
    let per: Vec<Vec<ReportRow>> = points
        .par_iter()
        .map(|pt| match job(pt) {
            (_, Ok(rows)) => rows,
            (sweep, Err(e)) => vec![ReportRow::failed(sweep, &e)],
        })
        .collect();
    per.into_iter().flatten().collect()
}

/// Feasibility rate of rounded and uniform sequences per interferer
/// tolerance, with the concentration bound and the threshold exceedance
/// rate.
pub fn exp_feasibility_vs_alpha(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let Sweep::Alpha(grid) = &cfg.sweep else {
        unreachable!("validated")
    };
    Ok(collect_points(grid, |&alpha| {
        (
            alpha,
            feasibility_rows(&cfg.problem.with_alpha(alpha), cfg, alpha),
        )
    }))
}

/// As [`exp_feasibility_vs_alpha`] over interferer widths; the interferer
/// band is contiguous from the scaled start bin.
pub fn exp_feasibility_vs_width(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let Sweep::Width(grid) = &cfg.sweep else {
        unreachable!("validated")
    };
    let base = &cfg.problem;
    Ok(collect_points(grid, |&w| {
        let p = DesignProblem::new(
            base.n,
            base.message.clone(),
            width_interferer(base.n, w),
            base.alpha,
            base.trials,
            base.seed,
        );
        (
            w as f64,
            p.and_then(|p| feasibility_rows(&p, cfg, w as f64)),
        )
    }))
}

// Approximation ratio

fn histogram(values: &[f64]) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &v in values {
        let k = ((v.max(0.0) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        counts[k] += 1;
    }
    counts
}

fn ratio_rows(series: &str, gammas: &[f64], total: usize) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (k, c) in histogram(gammas).into_iter().enumerate() {
        let center = (k as f64 + 0.5) / HISTOGRAM_BINS as f64;
        rows.push(ReportRow::new(
            center,
            series,
            "histogram_count",
            c as f64,
            None,
        ));
    }
    let (mean, se) = mean_se(gammas);
    let min = gammas.iter().copied().fold(f64::INFINITY, f64::min);
    let max = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rows.push(ReportRow::new(
        0.0,
        series,
        "n_feasible",
        gammas.len() as f64,
        None,
    ));
    rows.push(ReportRow::new(0.0, series, "n_total", total as f64, None));
    rows.push(ReportRow::new(0.0, series, "gamma_min", min, None));
    rows.push(ReportRow::new(0.0, series, "gamma_max", max, None));
    rows.push(ReportRow::new(0.0, series, "gamma_mean", mean, se));
    rows
}

/// Distribution of γ over feasible rounded candidates and feasible uniform
/// sequences (both against the relaxation objective), with the γ of the
/// quantized principal eigenvector.
pub fn exp_ratio_histogram(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let p = &cfg.problem;
    let sol = solve_relaxation(p, &cfg.solver)?;
    if sol.objective <= crate::rounding::OBJECTIVE_FLOOR {
        return Err(Error::DegenerateObjective(sol.objective));
    }
    let eval = MetricEvaluator::new(p)?;
    let feasible_gammas = |seqs: Vec<Result<crate::problem::MetricBundle>>| -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for m in seqs {
            let m = m?;
            if m.feasible {
                out.push(m.message_power / sol.objective);
            }
        }
        Ok(out)
    };
    let rounded = feasible_gammas(
        (0..p.trials)
            .into_par_iter()
            .map(|l| eval.evaluate(&sample_trial(&sol.factor, p.seed, l)))
            .collect(),
    )?;
    let uniform = feasible_gammas(
        (0..p.trials)
            .into_par_iter()
            .map(|l| eval.evaluate(&uniform_sequence(p.n, p.seed, l)))
            .collect(),
    )?;
    let mut rows = ratio_rows("rounded", &rounded, p.trials);
    rows.extend(ratio_rows("uniform", &uniform, p.trials));
    let eig = quantized_principal_eigenvector(p, &sol)?;
    rows.push(ReportRow::new(
        0.0,
        "eigenvector",
        "gamma",
        eig.gamma.unwrap_or(f64::NAN),
        None,
    ));
    rows.push(ReportRow::new(
        0.0,
        "eigenvector",
        "feasible",
        f64::from(u8::from(eig.metrics.feasible)),
        None,
    ));
    rows.push(ReportRow::new(
        0.0,
        "bound",
        "pi_over_2_minus_1",
        PI / 2.0 - 1.0,
        None,
    ));
    Ok(rows)
}

// β distribution

/// Random unit-diagonal PSD matrix of rank at most `rank`: `G G^T` for an
/// `n x rank` standard-normal `G`, congruence-scaled to unit diagonal.
pub fn random_correlation(n: usize, rank: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let raw = &g * g.transpose();
    let d: Vec<f64> = (0..n).map(|i| 1.0 / raw[(i, i)].sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| raw[(i, j)] * d[i] * d[j]);
    for i in 0..n {
        s[(i, i)] = 1.0;
    }
    s
}

pub const BETA_CDF_GRID: [f64; 9] = [1.0, 1.25, 1.5, 1.75, 2.0, PI - 1.0, 2.25, 2.5, 3.0];

/// β of one random draw for a cell: a random correlation matrix against a
/// random contiguous band of width `k`.
pub fn beta_draw(n: usize, k: usize, rank: usize, seed: u64, draw: usize) -> Result<f64> {
    let mut rng = substream(seed, domain::BETA, draw as u64);
    let s = random_correlation(n, rank, &mut rng);
    let start = rng.random_range(0..=n - k);
    let basis = crate::spectral::build_partial_dft(n, &BandSpec::contiguous(start, k))?;
    Ok(beta_ratio(&s, &gram(&basis)))
}

/// Empirical CDF of β per `(n, K, R)` cell and the fraction below `π - 1`.
pub fn exp_beta_distribution(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let Sweep::Cells(cells) = &cfg.sweep else {
        unreachable!("validated")
    };
    let indexed: Vec<(usize, [usize; 3])> = cells.iter().copied().enumerate().collect();
    Ok(collect_points(&indexed, |&(i, [n, k, r])| {
        let sweep = i as f64;
        if k == 0 || k > n || r == 0 {
            return (
                sweep,
                Err(Error::InvalidConfig(format!(
                    "invalid beta cell ({n}, {k}, {r})"
                ))),
            );
        }
        let seed = derive_seed(cfg.seed, domain::BETA_CELL, i as u64);
        let betas: Result<Vec<f64>> = (0..cfg.repetitions)
            .map(|d| beta_draw(n, k, r, seed, d))
            .collect();
        let rows = betas.map(|betas| {
            let series = format!("n={n},K={k},R={r}");
            let total = betas.len();
            let mut rows = Vec::new();
            for x in BETA_CDF_GRID {
                let (rate, se) = binomial(betas.iter().filter(|&&b| b <= x).count(), total);
                rows.push(ReportRow::new(
                    sweep,
                    &series,
                    &format!("cdf_at_{x:.4}"),
                    rate,
                    Some(se),
                ));
            }
            let (below, se) = binomial(betas.iter().filter(|&&b| b < PI - 1.0).count(), total);
            rows.push(ReportRow::new(
                sweep,
                &series,
                "fraction_below_pi_minus_1",
                below,
                Some(se),
            ));
            let finite: Vec<f64> = betas.iter().copied().filter(|b| b.is_finite()).collect();
            let (mean, se) = mean_se(&finite);
            rows.push(ReportRow::new(sweep, &series, "mean_beta", mean, se));
            rows.push(ReportRow::new(sweep, &series, "draws", total as f64, None));
            rows
        });
        (sweep, rows)
    }))
}

// Oracle comparison

/// Every pair of message bins and disjoint pair of interferer bins drawn
/// from bins `0..8` of a length-16 sequence (the other half of the spectrum
/// mirrors these): 28 x 15 = 420 configurations.
pub fn oracle_configurations() -> Vec<(BandSpec, BandSpec)> {
    let pairs = |pool: &[usize]| -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        for (i, &a) in pool.iter().enumerate() {
            for &b in &pool[i + 1..] {
                out.push([a, b]);
            }
        }
        out
    };
    let all: Vec<usize> = (0..8).collect();
    let mut out = Vec::new();
    for m in pairs(&all) {
        let rest: Vec<usize> = all.iter().copied().filter(|b| !m.contains(b)).collect();
        for i in pairs(&rest) {
            out.push((
                BandSpec::new(m.to_vec()).unwrap(),
                BandSpec::new(i.to_vec()).unwrap(),
            ));
        }
    }
    out
}

/// `count` configurations chosen by a seeded shuffle.
pub fn sample_oracle_configurations(count: usize, seed: u64) -> Vec<(BandSpec, BandSpec)> {
    let mut all = oracle_configurations();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    all.truncate(count);
    all
}

fn metric_ratio(alg: f64, oracle: f64) -> f64 {
    if oracle.is_infinite() {
        return if alg.is_infinite() { 1.0 } else { 0.0 };
    }
    if oracle == 0.0 {
        return if alg == 0.0 { 1.0 } else { f64::INFINITY };
    }
    alg / oracle
}

/// Whether two metric values agree up to rounding.
pub fn same_value(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Per trial count, for each score: the rounded design's metric over the
/// oracle optimum of that metric (`None` when rounding found no
/// feasible candidate).
pub type OracleRatios = Vec<[Option<f64>; 3]>;

/// Runs one oracle configuration across the trial grid.
pub fn oracle_ratios(
    p: &DesignProblem,
    trials: &[usize],
    solver: &SolverConfig,
) -> Result<OracleRatios> {
    let oracle = exhaustive_search(p)?;
    let sol = solve_relaxation(p, solver)?;
    let mut out = Vec::new();
    for &l in trials {
        let mut row = [None; 3];
        for (k, score) in ScoreKind::ALL.iter().enumerate() {
            let r = run_design(&p.with_trials(l), &sol, *score)?;
            row[k] = r.best.map(|b| {
                metric_ratio(
                    score.score(&b.metrics),
                    score.score(&oracle.best(*score).metrics),
                )
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Mean rounded-design over oracle metric ratio per trial count, each
/// metric selected by its own score, with the exact-match fraction.
pub fn exp_oracle_comparison(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let Sweep::Trials(grid) = &cfg.sweep else {
        unreachable!("validated")
    };
    let base = &cfg.problem;
    let configs = sample_oracle_configurations(cfg.repetitions, cfg.seed);
    let results: Vec<Result<OracleRatios>> = configs
        .par_iter()
        .map(|(m, i)| {
            let p = DesignProblem::new(
                base.n,
                m.clone(),
                i.clone(),
                base.alpha,
                base.trials,
                base.seed,
            )?;
            oracle_ratios(&p, grid, &cfg.solver)
        })
        .collect();
    let mut rows = Vec::new();
    let mut ok = Vec::new();
    let mut skipped = 0usize;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::NoFeasible) => skipped += 1,
            Err(e) => rows.push(ReportRow::failed(f64::NAN, &e)),
        }
    }
    let names = [
        "message_power",
        "rejection_ratio",
        "reciprocal_dynamic_range",
    ];
    for (g, &l) in grid.iter().enumerate() {
        for (k, name) in names.iter().enumerate() {
            let vals: Vec<Option<f64>> = ok.iter().map(|v| v[g][k]).collect();
            let found: Vec<f64> = vals.iter().flatten().copied().collect();
            let (mean, se) = mean_se(&found);
            rows.push(ReportRow::new(l as f64, name, "mean_ratio", mean, se));
            let exact = vals
                .iter()
                .filter(|v| v.is_some_and(|r| same_value(r, 1.0)))
                .count();
            rows.push(ReportRow::new(
                l as f64,
                name,
                "exact_match_fraction",
                exact as f64 / ok.len().max(1) as f64,
                None,
            ));
            rows.push(ReportRow::new(
                l as f64,
                name,
                "no_feasible_candidate",
                (vals.len() - found.len()) as f64,
                None,
            ));
        }
    }
    rows.push(ReportRow::new(
        f64::NAN,
        "oracle",
        "configurations",
        ok.len() as f64,
        None,
    ));
    rows.push(ReportRow::new(
        f64::NAN,
        "oracle",
        "skipped_infeasible",
        skipped as f64,
        None,
    ));
    Ok(rows)
}

// Baseline comparison

pub const BASELINE_METHODS: [&str; 6] = [
    "sdp_rounding",
    "shape_unimodular",
    "shape_binary",
    "lpnn_unimodular",
    "lpnn_binary",
    "quantized_eigenvector",
];

/// Random message band of `message_width` bins and disjoint interferer band
/// of `width` bins, drawn from the non-mirrored bins `1..n/2`.
pub fn baseline_configuration(
    n: usize,
    message_width: usize,
    width: usize,
    seed: u64,
) -> Result<(BandSpec, BandSpec)> {
    let pool: Vec<usize> = (1..n / 2).collect();
    if message_width + width > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "{message_width} + {width} bins do not fit in length {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = index::sample(&mut rng, pool.len(), message_width + width)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let mut m = picked[..message_width].to_vec();
    let mut i = picked[message_width..].to_vec();
    m.sort_unstable();
    i.sort_unstable();
    Ok((BandSpec::new(m)?, BandSpec::new(i)?))
}

/// Problem of job `repetition` at interferer width `width`; its seed also
/// drives the baselines of that job.
pub fn baseline_problem(
    cfg: &ExperimentConfig,
    width: usize,
    repetition: usize,
) -> Result<DesignProblem> {
    let base = &cfg.problem;
    let seed = derive_seed(
        cfg.seed,
        domain::BASELINE_JOB,
        ((width as u64) << 32) | repetition as u64,
    );
    let (m, i) = baseline_configuration(base.n, base.message.len(), width, seed)?;
    DesignProblem::new(base.n, m, i, base.alpha, base.trials, seed)
}

/// ρ and seconds per method for one configuration; `None` marks a failed
/// run (no feasible candidate, divergence, ...).
pub type MethodOutcome = [Option<(f64, f64)>; 6];

pub fn baseline_run(p: &DesignProblem, cfg: &ExperimentConfig, seed: u64) -> MethodOutcome {
    let timed = |f: &dyn Fn() -> Result<f64>| -> Option<(f64, f64)> {
        let t = Instant::now();
        let rho = f().ok()?;
        Some((rho, t.elapsed().as_secs_f64()))
    };
    let sol = solve_relaxation(p, &cfg.solver);
    let rounding = timed(&|| {
        // The relaxation is shared with the eigenvector baseline but timed here.
        let sol = sol.as_ref().map_err(clone_error)?;
        let r = run_design(p, sol, ScoreKind::RejectionRatio)?;
        r.best
            .map(|b| b.metrics.rejection_ratio)
            .ok_or(Error::NoFeasible)
    });
    let shape = |v| {
        timed(&|| {
            Ok(
                run_shape(p, v, cfg.shape_max_iters, DEFAULT_SHAPE_TOL, seed)?
                    .metrics
                    .rejection_ratio,
            )
        })
    };
    let lpnn = |v| timed(&|| Ok(run_lpnn(p, v, &cfg.lpnn, seed)?.metrics.rejection_ratio));
    let eigen = timed(&|| {
        let sol = sol.as_ref().map_err(clone_error)?;
        Ok(quantized_principal_eigenvector(p, sol)?
            .metrics
            .rejection_ratio)
    });
    [
        rounding,
        shape(Variant::Unimodular),
        shape(Variant::Binary),
        lpnn(Variant::Unimodular),
        lpnn(Variant::Binary),
        eigen,
    ]
}

fn clone_error(e: &Error) -> Error {
    Error::InvalidConfig(format!("relaxation failed: {e}"))
}

/// Mean ρ per method and interferer width over random configurations.
pub fn exp_baseline_comparison(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    let Sweep::Width(grid) = &cfg.sweep else {
        unreachable!("validated")
    };
    let jobs: Vec<(usize, usize)> = grid
        .iter()
        .flat_map(|&w| (0..cfg.repetitions).map(move |r| (w, r)))
        .collect();
    let outcomes: Vec<Result<MethodOutcome>> = jobs
        .par_iter()
        .map(|&(w, r)| {
            let p = baseline_problem(cfg, w, r)?;
            Ok(baseline_run(&p, cfg, p.seed))
        })
        .collect();
    let mut rows = Vec::new();
    for (g, &w) in grid.iter().enumerate() {
        let chunk = &outcomes[g * cfg.repetitions..(g + 1) * cfg.repetitions];
        let mut runs = Vec::new();
        for o in chunk {
            match o {
                Ok(v) => runs.push(v),
                Err(e) => rows.push(ReportRow::failed(w as f64, e)),
            }
        }
        for (k, method) in BASELINE_METHODS.iter().enumerate() {
            let ok: Vec<(f64, f64)> = runs.iter().filter_map(|v| v[k]).collect();
            let rhos: Vec<f64> = ok.iter().map(|x| x.0).collect();
            let (mean, se) = mean_se(&rhos);
            rows.push(ReportRow::new(w as f64, method, "mean_rho", mean, se));
            let db: Vec<f64> = rhos.iter().map(|r| 20.0 * r.log10()).collect();
            let (mean_db, se_db) = mean_se(&db);
            rows.push(ReportRow::new(
                w as f64,
                method,
                "mean_rho_db",
                mean_db,
                se_db,
            ));
            rows.push(ReportRow::new(
                w as f64,
                method,
                "failures",
                (runs.len() - ok.len()) as f64,
                None,
            ));
            if cfg.timing {
                let secs: Vec<f64> = ok.iter().map(|x| x.1).collect();
                let (mean, se) = mean_se(&secs);
                rows.push(ReportRow::new(w as f64, method, "mean_seconds", mean, se));
            }
        }
    }
    Ok(rows)
}
