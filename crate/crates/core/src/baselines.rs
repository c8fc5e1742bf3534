//! Comparison baselines: SHAPE (block-coordinate spectrum matching) and LPNN
//! (Lagrange programming neural network), each with a unimodular and a
//! binary variant.
//!
//! Both work on the full unitary DFT. With `F` unitary,
//! `‖F^H s - a x‖ = ‖s - a F x‖`, which is what makes the SHAPE sequence
//! step an exact per-entry projection.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::problem::{BinarySequence, DesignProblem, MetricBundle, MetricEvaluator};
use crate::spectral::{Complex64, UnitaryDft};

/// Stands in for an infinite upper bound; `|F_i^H s| <= √n` never reaches it.
pub const UPPER_SENTINEL: f64 = 1e6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_SHAPE_TOL: f64 = 1e-10;
/// LPNN stops once every increment is below this in magnitude.
pub const LPNN_STALL: f64 = 1e-8;
/// LPNN neurons beyond this magnitude count as divergence.
pub const LPNN_BLOWUP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unimodular,
    Binary,
}

/// Output of a baseline run.
#[derive(Clone, Debug, PartialEq)]
pub enum BaselineSequence {
    Unimodular(Vec<Complex64>),
    Binary(BinarySequence),
}

impl Serialize for BaselineSequence {
    /// Binary entries as integers, unimodular entries as `[re, im]` pairs.
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BaselineSequence::Binary(s) => s.serialize(ser),
            BaselineSequence::Unimodular(v) => {
                let mut seq = ser.serialize_seq(Some(v.len()))?;
                for c in v {
                    seq.serialize_element(&[c.re, c.im])?;
                }
                seq.end()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineRun {
    pub variant: Variant,
    pub sequence: BaselineSequence,
    pub metrics: MetricBundle,
    pub iterations: usize,
    /// SHAPE: objective after every step, starting from the initial state.
    /// LPNN: `max_i ||s_i|² - 1|` after every iteration.
    pub trace: Vec<f64>,
}

fn evaluate(p: &DesignProblem, sequence: &BaselineSequence) -> Result<MetricBundle> {
    let eval = MetricEvaluator::new(p)?;
    match sequence {
        BaselineSequence::Unimodular(s) => eval.evaluate_complex(s),
        BaselineSequence::Binary(s) => eval.evaluate(s),
    }
}

// SHAPE

/// Per-bin magnitude bounds `lower_i <= |x_i| <= upper_i` on the spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeBounds {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

/// Interferer bins are capped at `√(alpha / K)` so that the band total stays
/// within `alpha`; message bins are held at magnitude at least 1; other bins
/// are free.
pub fn shape_bounds_from_problem(p: &DesignProblem) -> ShapeBounds {
    let mut upper = vec![UPPER_SENTINEL; p.n];
    let mut lower = vec![0.0; p.n];
    if !p.interferer.is_empty() {
        let cap = (p.alpha / p.interferer.len() as f64).sqrt();
        for &k in p.interferer.indices() {
            upper[k] = cap;
        }
    }
    for &k in p.message.indices() {
        lower[k] = 1.0;
    }
    ShapeBounds { upper, lower }
}

#[derive(Clone, Debug)]
pub struct ShapeState {
    pub sequence: Vec<Complex64>,
    /// `F^H s`, kept in sync with `sequence`.
    transform: Vec<Complex64>,
    pub spectrum: Vec<Complex64>,
    pub scale: Complex64,
    /// `‖F^H s - scale · spectrum‖²`.
    pub objective: f64,
}

impl ShapeState {
    /// Starts from `sequence` with a zero spectrum and unit scale.
    pub fn new(dft: &UnitaryDft, sequence: Vec<Complex64>) -> Self {
        let transform = dft.analysis(&sequence);
        let n = sequence.len();
        let mut st = Self {
            sequence,
            transform,
            spectrum: vec![Complex64::new(0.0, 0.0); n],
            scale: Complex64::new(1.0, 0.0),
            objective: 0.0,
        };
        st.refresh();
        st
    }

    fn refresh(&mut self) {
        self.objective = self
            .transform
            .iter()
            .zip(&self.spectrum)
            .map(|(y, x)| (y - self.scale * x).norm_sqr())
            .sum();
    }
}

fn unit_phase(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 0.0 {
        z / r
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Exact minimizer over the spectrum: `z = F^H s / scale` clipped
/// radially into `[lower_i, upper_i]`.
pub fn shape_spectrum_step(state: &mut ShapeState, bounds: &ShapeBounds) -> Result<()> {
    if state.scale.norm() == 0.0 {
        return Err(Error::ZeroScale);
    }
    for (i, x) in state.spectrum.iter_mut().enumerate() {
        let z = state.transform[i] / state.scale;
        let r = z.norm();
        *x = if r > bounds.upper[i] {
            unit_phase(z) * bounds.upper[i]
        } else if r < bounds.lower[i] {
            unit_phase(z) * bounds.lower[i]
        } else {
            z
        };
    }
    state.refresh();
    Ok(())
}

/// Least-squares scale `x^H F^H s / ‖x‖²`.
pub fn shape_scale_step(state: &mut ShapeState) -> Result<()> {
    let norm: f64 = state.spectrum.iter().map(|x| x.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let num: Complex64 = state
        .spectrum
        .iter()
        .zip(&state.transform)
        .map(|(x, y)| x.conj() * y)
        .sum();
    state.scale = num / norm;
    state.refresh();
    Ok(())
}

/// Exact minimizer over the sequence: the entrywise projection of
/// `scale · F x` onto the unit circle, or onto `{-1, +1}` through the sign
/// of the real part (`sign(0) = +1`).
pub fn shape_sequence_step(state: &mut ShapeState, variant: Variant, dft: &UnitaryDft) {
    let target: Vec<Complex64> = state.spectrum.iter().map(|x| state.scale * x).collect();
    let u = dft.synthesis(&target);
    state.sequence = match variant {
        Variant::Unimodular => u.into_iter().map(unit_phase).collect(),
        Variant::Binary => u
            .into_iter()
            .map(|z| Complex64::new(if z.re >= 0.0 { 1.0 } else { -1.0 }, 0.0))
            .collect(),
    };
    state.transform = dft.analysis(&state.sequence);
    state.refresh();
}

fn random_start(variant: Variant, n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| match variant {
            Variant::Unimodular => Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
            Variant::Binary => Complex64::new(if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0),
        })
        .collect()
}

fn into_output(variant: Variant, s: &[Complex64]) -> BaselineSequence {
    match variant {
        Variant::Unimodular => {
            BaselineSequence::Unimodular(s.iter().copied().map(unit_phase).collect())
        }
        Variant::Binary => BaselineSequence::Binary(BinarySequence::from_signs(
            &s.iter().map(|z| z.re).collect::<Vec<_>>(),
        )),
    }
}

/// Cycles spectrum, scale and sequence steps from a seeded random start
/// until the relative objective change over one cycle drops below `tol` or
/// `max_iters` cycles have run.
pub fn run_shape(
    p: &DesignProblem,
    variant: Variant,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<BaselineRun> {
    let dft = UnitaryDft::new(p.n);
    let bounds = shape_bounds_from_problem(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut st = ShapeState::new(&dft, random_start(variant, p.n, &mut rng));
    let mut trace = vec![st.objective];
    let mut iterations = 0;
    while iterations < max_iters {
        let before = st.objective;
        shape_spectrum_step(&mut st, &bounds)?;
        trace.push(st.objective);
        shape_scale_step(&mut st)?;
        trace.push(st.objective);
        shape_sequence_step(&mut st, variant, &dft);
        trace.push(st.objective);
        iterations += 1;
        if (before - st.objective).abs() <= tol * before.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let sequence = into_output(variant, &st.sequence);
    let metrics = evaluate(p, &sequence)?;
    Ok(BaselineRun {
        variant,
        sequence,
        metrics,
        iterations,
        trace,
    })
}

// LPNN

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LpnnConfig {
    pub step: f64,
    pub c0: f64,
    pub max_iters: usize,
    /// Per-bin weights; `None` means all ones.
    pub weights: Option<Vec<f64>>,
}

impl Default for LpnnConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            c0: 10.0,
            max_iters: DEFAULT_MAX_ITERS,
            weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpnnState {
    pub variant: Variant,
    /// Unimodular: `[Re s; Im s]` (length `2n`). Binary: `s` (length `n`).
    pub neurons: Vec<f64>,
    pub scale: f64,
    pub multipliers: Vec<f64>,
    pub weights: Vec<f64>,
    pub augment: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpnnIncrements {
    pub neurons: Vec<f64>,
    pub scale: f64,
    pub multipliers: Vec<f64>,
}

impl LpnnIncrements {
    pub fn max_abs(&self) -> f64 {
        self.neurons
            .iter()
            .chain(&self.multipliers)
            .fold(self.scale.abs(), |m, v| m.max(v.abs()))
    }
}

impl LpnnState {
    pub fn n(&self) -> usize {
        self.multipliers.len()
    }

    /// The complex sequence the neurons encode.
    pub fn sequence(&self) -> Vec<Complex64> {
        let n = self.n();
        match self.variant {
            Variant::Unimodular => (0..n)
                .map(|i| Complex64::new(self.neurons[i], self.neurons[n + i]))
                .collect(),
            Variant::Binary => self
                .neurons
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        }
    }

    /// `max_i ||s_i|² - 1|`.
    pub fn constraint_residual(&self) -> f64 {
        self.sequence()
            .iter()
            .map(|s| (s.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Power target: 1 on message and free bins, half the SHAPE cap on
/// interferer bins.
pub fn lpnn_target(p: &DesignProblem) -> Vec<f64> {
    let mut x = vec![1.0; p.n];
    if !p.interferer.is_empty() {
        let level = (p.alpha / p.interferer.len() as f64).sqrt() / 2.0;
        for &k in p.interferer.indices() {
            x[k] = level;
        }
    }
    x
}

/// `Σ w_i (|F_i^H s|² - a x_i)² + c0 Σ (|s_i|² - 1)² + Σ μ_i (|s_i|² - 1)`.
pub fn lpnn_lagrangian(state: &LpnnState, dft: &UnitaryDft, target: &[f64]) -> f64 {
    let s = state.sequence();
    let y = dft.analysis(&s);
    let fit: f64 = y
        .iter()
        .zip(target)
        .zip(&state.weights)
        .map(|((y, x), w)| w * (y.norm_sqr() - state.scale * x).powi(2))
        .sum();
    let cons: f64 = s
        .iter()
        .zip(&state.multipliers)
        .map(|(s, mu)| {
            let e = s.norm_sqr() - 1.0;
            state.augment * e * e + mu * e
        })
        .sum();
    fit + cons
}

/// Neuron dynamics: descent on the sequence and scale, ascent on the
/// multipliers (`Δμ_i = |s_i|² - 1`).
///
/// With `r_i = w_i (|y_i|² - a x_i)` and `y = F^H s`, the sequence gradient
/// in complex form is `G = 4 F (r ⊙ y) + 4 c0 (|s|² - 1) ⊙ s + 2 μ ⊙ s`.
/// The unimodular variant stacks `[Re G; Im G]`, the binary variant keeps
/// `Re G`.
pub fn lpnn_increments(state: &LpnnState, dft: &UnitaryDft, target: &[f64]) -> LpnnIncrements {
    let s = state.sequence();
    let y = dft.analysis(&s);
    let r: Vec<f64> = y
        .iter()
        .zip(target)
        .zip(&state.weights)
        .map(|((y, x), w)| w * (y.norm_sqr() - state.scale * x))
        .collect();
    let ry: Vec<Complex64> = y.iter().zip(&r).map(|(y, r)| y * *r).collect();
    let back = dft.synthesis(&ry);
    let violation: Vec<f64> = s.iter().map(|s| s.norm_sqr() - 1.0).collect();
    let grad: Vec<Complex64> = (0..s.len())
        .map(|i| {
            back[i] * 4.0 + s[i] * (4.0 * state.augment * violation[i] + 2.0 * state.multipliers[i])
        })
        .collect();
    let neurons = match state.variant {
        Variant::Unimodular => grad
            .iter()
            .map(|g| -g.re)
            .chain(grad.iter().map(|g| -g.im))
            .collect(),
        Variant::Binary => grad.iter().map(|g| -g.re).collect(),
    };
    let scale = 2.0 * r.iter().zip(target).map(|(r, x)| r * x).sum::<f64>();
    LpnnIncrements {
        neurons,
        scale,
        multipliers: violation,
    }
}

/// Seeded initial state: neurons uniform in `[-1, 1]`, scale 1, zero
/// multipliers.
pub fn lpnn_initial_state(
    n: usize,
    variant: Variant,
    cfg: &LpnnConfig,
    seed: u64,
) -> Result<LpnnState> {
    let weights = cfg.weights.clone().unwrap_or_else(|| vec![1.0; n]);
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: weights.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = match variant {
        Variant::Unimodular => 2 * n,
        Variant::Binary => n,
    };
    Ok(LpnnState {
        variant,
        neurons: (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        scale: 1.0,
        multipliers: vec![0.0; n],
        weights,
        augment: cfg.c0,
        step: cfg.step,
    })
}

/// Euler integration of the neuron dynamics. The unimodular output is the
/// final sequence normalized to unit modulus, the binary output its sign.
pub fn run_lpnn(
    p: &DesignProblem,
    variant: Variant,
    cfg: &LpnnConfig,
    seed: u64,
) -> Result<BaselineRun> {
    if !(cfg.step > 0.0) || !(cfg.c0 >= 0.0) {
        return Err(Error::InvalidConfig(
            "LPNN step must be positive and c0 non-negative".into(),
        ));
    }
    let dft = UnitaryDft::new(p.n);
    let target = lpnn_target(p);
    let mut st = lpnn_initial_state(p.n, variant, cfg, seed)?;
    let mut trace = Vec::with_capacity(cfg.max_iters.min(DEFAULT_MAX_ITERS) + 1);
    trace.push(st.constraint_residual());
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let inc = lpnn_increments(&st, &dft, &target);
        if inc.max_abs() < LPNN_STALL {
            break;
        }
        iterations += 1;
        for (t, d) in st.neurons.iter_mut().zip(&inc.neurons) {
            *t += st.step * d;
        }
        st.scale += st.step * inc.scale;
        for (m, d) in st.multipliers.iter_mut().zip(&inc.multipliers) {
            *m += st.step * d;
        }
        if st.neurons.iter().any(|v| !(v.abs() <= LPNN_BLOWUP)) {
            return Err(Error::Divergence {
                iteration: iterations,
            });
        }
        trace.push(st.constraint_residual());
    }
    let sequence = into_output(variant, &st.sequence());
    let metrics = evaluate(p, &sequence)?;
    Ok(BaselineRun {
        variant,
        sequence,
        metrics,
        iterations,
        trace,
    })
}
