//! Gaussian randomized projection of the relaxation solution, sign
//! quantization, feasibility filtering and best-candidate selection.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BinarySequence, DesignProblem, MetricBundle, MetricEvaluator, ScoreKind};
use crate::sdp::{ProblemGrams, SdpSolution};
use crate::serde_ext::inf_as_null;
use crate::spectral::GramMatrix;

/// Relaxation objectives below this are treated as zero.
pub const OBJECTIVE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sequence: BinarySequence,
    pub metrics: MetricBundle,
    pub trial_index: usize,
    /// `message_power / tr(A_M S)`; absent for a degenerate relaxation.
    pub gamma: Option<f64>,
}

impl Candidate {
    fn better_than(&self, other: &Candidate, score: ScoreKind) -> bool {
        match score
            .score(&self.metrics)
            .total_cmp(&score.score(&other.metrics))
        {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => self.trial_index < other.trial_index,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub best: Option<Candidate>,
    pub n_feasible: usize,
    pub n_trials: usize,
    pub feasibility_rate: f64,
    /// Smallest γ among feasible candidates.
    pub gamma_min_feasible: Option<f64>,
    #[serde(with = "inf_as_null")]
    pub beta: f64,
    pub score_kind: ScoreKind,
    pub relaxation_objective: f64,
    pub relaxation_rank: usize,
    pub kkt_residual: f64,
    pub dual_multiplier: f64,
    /// Concentration bound on the interferer power; absent for an empty
    /// interferer band.
    pub mcdiarmid_bound: Option<f64>,
    /// `1 / (8 n π²)`, the constant in the exponent of the bound.
    pub mcdiarmid_constant: f64,
}

/// Random-stream domains; each consumer of the master seed gets its own key.
pub mod domain {
    pub const ROUNDING: u64 = 0;
    pub const UNIFORM: u64 = 1;
    pub const BETA: u64 = 2;
    pub const BETA_CELL: u64 = 3;
    pub const BASELINE_JOB: u64 = 4;
}

/// Independent generator for item `index` of `domain` under `seed`: the key
/// holds `(seed, domain)` and the ChaCha stream id is `index`, so distinct
/// triples never share a keystream.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A 64-bit seed derived from `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    substream(seed, domain, index).random()
}

/// `sign(factor · v)` with `v ~ N(0, I)` drawn from `rng`; `sign(0) = +1`.
pub fn sample_candidate<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> BinarySequence {
    let v = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = factor * v;
    BinarySequence::from_signs(w.as_slice())
}

/// Samples trial `trial` on its own substream.
pub fn sample_trial(factor: &DMatrix<f64>, seed: u64, trial: usize) -> BinarySequence {
    let mut rng = substream(seed, domain::ROUNDING, trial as u64);
    sample_candidate(factor, &mut rng)
}

fn make_candidate(
    eval: &MetricEvaluator,
    sequence: BinarySequence,
    trial_index: usize,
    objective: f64,
) -> Result<Candidate> {
    let metrics = eval.evaluate(&sequence)?;
    let gamma = (objective > OBJECTIVE_FLOOR).then(|| metrics.message_power / objective);
    Ok(Candidate {
        sequence,
        metrics,
        trial_index,
        gamma,
    })
}

/// Every one of the `p.trials` candidates, in trial order.
pub fn sample_all(p: &DesignProblem, sol: &SdpSolution) -> Result<Vec<Candidate>> {
    let eval = MetricEvaluator::new(p)?;
    (0..p.trials)
        .into_par_iter()
        .map(|l| {
            make_candidate(
                &eval,
                sample_trial(&sol.factor, p.seed, l),
                l,
                sol.objective,
            )
        })
        .collect()
}

#[derive(Default)]
struct Summary {
    best: Option<Candidate>,
    n_feasible: usize,
    gamma_min: Option<f64>,
}

impl Summary {
    fn push(mut self, c: Candidate, score: ScoreKind) -> Self {
        if !c.metrics.feasible {
            return self;
        }
        self.n_feasible += 1;
        if let Some(g) = c.gamma {
            self.gamma_min = Some(self.gamma_min.map_or(g, |m| m.min(g)));
        }
        if self.best.as_ref().is_none_or(|b| c.better_than(b, score)) {
            self.best = Some(c);
        }
        self
    }

    fn merge(self, other: Self, score: ScoreKind) -> Self {
        let gamma_min = match (self.gamma_min, other.gamma_min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let best = match (self.best, other.best) {
            (Some(a), Some(b)) => Some(if b.better_than(&a, score) { b } else { a }),
            (a, b) => a.or(b),
        };
        Self {
            best,
            n_feasible: self.n_feasible + other.n_feasible,
            gamma_min,
        }
    }
}

/// Draws `p.trials` candidates from `sol`, keeps those with interferer power
/// at most the full `alpha` and selects the best by `score`. Only the running
/// best and summary statistics are retained.
pub fn run_design(p: &DesignProblem, sol: &SdpSolution, score: ScoreKind) -> Result<DesignResult> {
    let eval = MetricEvaluator::new(p)?;
    let summary = (0..p.trials)
        .into_par_iter()
        .map(|l| {
            make_candidate(
                &eval,
                sample_trial(&sol.factor, p.seed, l),
                l,
                sol.objective,
            )
        })
        .try_fold(Summary::default, |acc, c| c.map(|c| acc.push(c, score)))
        .try_reduce(Summary::default, |a, b| Ok(a.merge(b, score)))?;
    let grams = ProblemGrams::new(p)?;
    Ok(DesignResult {
        best: summary.best,
        n_feasible: summary.n_feasible,
        n_trials: p.trials,
        feasibility_rate: summary.n_feasible as f64 / p.trials as f64,
        gamma_min_feasible: summary.gamma_min,
        beta: beta_ratio(&sol.matrix, &grams.interferer),
        score_kind: score,
        relaxation_objective: sol.objective,
        relaxation_rank: sol.rank,
        kkt_residual: sol.kkt_residual,
        dual_multiplier: sol.dual_multiplier,
        mcdiarmid_bound: mcdiarmid_bound(p).ok(),
        mcdiarmid_constant: mcdiarmid_constant(p.n),
    })
}

/// `sign(√λ_1 u_1)` for the leading eigenpair of the relaxation solution.
pub fn quantized_principal_eigenvector(p: &DesignProblem, sol: &SdpSolution) -> Result<Candidate> {
    if sol.rank == 0 {
        return Err(Error::RankZero);
    }
    let w = sol.eigen.eigenvectors.column(0) * sol.eigen.eigenvalues[0].sqrt();
    let eval = MetricEvaluator::new(p)?;
    make_candidate(
        &eval,
        BinarySequence::from_signs(w.as_slice()),
        0,
        sol.objective,
    )
}

/// `tr(A_I arcsin∘S) / tr(A_I S)`; `+inf` when the denominator is at most
/// `1e-12`. Entries of `S` are clamped to `[-1, 1]` before the arcsine.
pub fn beta_ratio(matrix: &DMatrix<f64>, gram_i: &GramMatrix) -> f64 {
    let den = gram_i.trace_with(matrix);
    if den <= 1e-12 {
        return f64::INFINITY;
    }
    let arcsin = matrix.map(|v| v.clamp(-1.0, 1.0).asin());
    gram_i.trace_with(&arcsin) / den
}

/// `1 / (8 n π²)`.
pub fn mcdiarmid_constant(n: usize) -> f64 {
    1.0 / (8.0 * n as f64 * PI * PI)
}

/// `exp(-α² / (8 n π² |Ω_I|²))`.
pub fn mcdiarmid_bound(p: &DesignProblem) -> Result<f64> {
    let k = p.interferer.len();
    if k == 0 {
        return Err(Error::EmptyInterferer);
    }
    Ok((-p.alpha * p.alpha * mcdiarmid_constant(p.n) / (k * k) as f64).exp())
}

/// `f(s̃) / tr(A_M S)`.
pub fn gamma(candidate: &Candidate, sol: &SdpSolution) -> Result<f64> {
    if sol.objective <= OBJECTIVE_FLOOR {
        return Err(Error::DegenerateObjective(sol.objective));
    }
    Ok(candidate.metrics.message_power / sol.objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{interferer_power, BandSpec};
    use proptest::prelude::{prop, prop_assert, prop_assume, proptest, ProptestConfig};

    fn problem(n: usize, m: &[usize], i: &[usize], alpha: f64, trials: usize) -> DesignProblem {
        DesignProblem::new(
            n,
            BandSpec::new(m.to_vec()).unwrap(),
            BandSpec::new(i.to_vec()).unwrap(),
            alpha,
            trials,
            7,
        )
        .unwrap()
    }

    fn rank_one(s: &[i8]) -> DMatrix<f64> {
        let v = DVector::from_iterator(s.len(), s.iter().map(|&e| e as f64));
        &v * v.transpose()
    }

    const S8: [i8; 8] = [1, -1, -1, 1, 1, 1, -1, 1];

    #[test]
    fn rank_one_factor_reproduces_the_sequence() {
        let p = problem(8, &[1], &[3], 4.0, 64);
        let sol = SdpSolution::from_matrix(&p, rank_one(&S8), 0.0).unwrap();
        let s = BinarySequence::new(S8.to_vec()).unwrap();
        for l in 0..64 {
            let c = sample_trial(&sol.factor, 3, l);
            assert!(c == s || c == s.negated());
        }
        let q = quantized_principal_eigenvector(&p, &sol).unwrap();
        assert!(q.sequence == s || q.sequence == s.negated());
        let c = make_candidate(&MetricEvaluator::new(&p).unwrap(), s, 0, sol.objective).unwrap();
        assert!((gamma(&c, &sol).unwrap() - 1.0).abs() < 1e-12);
        assert!(
            (beta_ratio(&sol.matrix, &ProblemGrams::new(&p).unwrap().interferer) - PI / 2.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn zero_factor_gives_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_candidate(&DMatrix::zeros(5, 5), &mut rng),
            BinarySequence::ones(5)
        );
    }

    #[test]
    fn identity_relaxation() {
        let p = problem(6, &[1], &[2], 1.0, 1);
        let sol = SdpSolution::from_matrix(&p, DMatrix::identity(6, 6), 0.0).unwrap();
        assert_eq!(
            quantized_principal_eigenvector(&p, &sol).unwrap().sequence,
            BinarySequence::ones(6)
        );
        let grams = ProblemGrams::new(&p).unwrap();
        assert!((beta_ratio(&sol.matrix, &grams.interferer) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn beta_with_null_denominator_is_infinite() {
        let p = problem(4, &[1], &[2], 1.0, 1);
        let grams = ProblemGrams::new(&p).unwrap();
        assert_eq!(
            beta_ratio(&DMatrix::from_element(4, 4, 1.0), &grams.interferer),
            f64::INFINITY
        );
    }

    #[test]
    fn mcdiarmid_values() {
        let p = problem(128, &[30], &(0..12).collect::<Vec<_>>(), 5.0, 1);
        let b = mcdiarmid_bound(&p).unwrap();
        assert!((b - (-25.0 / (8.0 * 128.0 * PI * PI * 144.0)).exp()).abs() < 1e-15);
        assert!((b - 0.999983).abs() < 1e-6);
        assert_eq!(mcdiarmid_bound(&p.with_alpha(0.0)).unwrap(), 1.0);
        assert!(matches!(
            mcdiarmid_bound(&problem(8, &[1], &[], 1.0, 1)),
            Err(Error::EmptyInterferer)
        ));
        let mut last = 0.0;
        for k in 1..10 {
            let q = problem(64, &[40], &(0..k).collect::<Vec<_>>(), 3.0, 1);
            let v = mcdiarmid_bound(&q).unwrap();
            assert!(v > last);
            assert!(v <= mcdiarmid_bound(&q.with_alpha(2.0)).unwrap());
            last = v;
        }
    }

    #[test]
    fn degenerate_objective_is_rejected() {
        let p = problem(4, &[1], &[], 1.0, 1);
        let sol = SdpSolution::from_matrix(&p, DMatrix::from_element(4, 4, 1.0), 0.0).unwrap();
        let c = make_candidate(
            &MetricEvaluator::new(&p).unwrap(),
            BinarySequence::ones(4),
            0,
            sol.objective,
        )
        .unwrap();
        assert!(c.gamma.is_none());
        assert!(matches!(
            gamma(&c, &sol),
            Err(Error::DegenerateObjective(_))
        ));
    }

    #[test]
    fn sign_correlation_matches_arcsine() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let raw = &g * g.transpose();
        let d: Vec<f64> = (0..n).map(|i| 1.0 / raw[(i, i)].sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |i, j| raw[(i, j)] * d[i] * d[j]);
        let p = problem(n, &[1], &[2], 1.0, 1);
        let sol = SdpSolution::from_matrix(&p, s.clone(), 0.0).unwrap();
        let trials = 20_000;
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for l in 0..trials {
            let c = DVector::from_vec(sample_trial(&sol.factor, 5, l).to_f64());
            acc += &c * c.transpose();
        }
        let tol = 5.0 / (trials as f64).sqrt();
        for i in 0..n {
            for j in 0..n {
                let expect = 2.0 / PI * s[(i, j)].clamp(-1.0, 1.0).asin();
                assert!((acc[(i, j)] / trials as f64 - expect).abs() <= tol);
            }
        }
    }

    #[test]
    fn design_without_interferers_accepts_everything() {
        let p = problem(12, &[2, 3], &[], 0.0, 200);
        let sol = crate::sdp::solve_relaxation(&p, &Default::default()).unwrap();
        let r = run_design(&p, &sol, ScoreKind::MessagePower).unwrap();
        assert_eq!(r.n_feasible, 200);
        assert_eq!(r.feasibility_rate, 1.0);
        assert_eq!(r.mcdiarmid_bound, None);
        let all = sample_all(&p, &sol).unwrap();
        let best = r.best.unwrap();
        let rescan = all
            .iter()
            .reduce(|a, b| {
                if b.better_than(a, ScoreKind::MessagePower) {
                    b
                } else {
                    a
                }
            })
            .unwrap();
        assert_eq!(&best, rescan);
        assert_eq!(all[best.trial_index], best);
    }

    #[test]
    fn design_is_reproducible_and_selects_correctly() {
        let p = problem(16, &[3, 4], &[6, 7], 2.0, 500);
        let sol = crate::sdp::solve_relaxation(&p, &Default::default()).unwrap();
        for score in ScoreKind::ALL {
            let a = run_design(&p, &sol, score).unwrap();
            let b = run_design(&p, &sol, score).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap()
            );
            assert_eq!(a.best.is_none(), a.n_feasible == 0);
            let all = sample_all(&p, &sol).unwrap();
            let feasible: Vec<_> = all.iter().filter(|c| c.metrics.feasible).collect();
            assert_eq!(feasible.len(), a.n_feasible);
            for c in &all {
                assert_eq!(
                    c.metrics.feasible,
                    interferer_power(&p, &c.sequence).unwrap() <= 2.0
                );
            }
            if let Some(best) = &a.best {
                let top = feasible
                    .iter()
                    .map(|c| score.score(&c.metrics))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(score.score(&best.metrics), top);
                let first = feasible
                    .iter()
                    .find(|c| score.score(&c.metrics) == top)
                    .unwrap();
                assert_eq!(first.trial_index, best.trial_index);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn single_flip_changes_interferer_power_boundedly(
            entries in prop::collection::vec(prop::bool::ANY, 16),
            bins in prop::collection::btree_set(0usize..16, 1..6),
            flip in 0usize..16,
        ) {
            let s = BinarySequence::new(entries.iter().map(|&b| if b { 1 } else { -1 }).collect()).unwrap();
            let bins: Vec<usize> = bins.into_iter().collect();
            let message = if bins.contains(&0) { 1 } else { 0 };
            prop_assume!(!bins.contains(&message));
            let p = problem(16, &[message], &bins, 1.0, 1);
            let g = interferer_power(&p, &s).unwrap();
            let h = interferer_power(&p, &s.flipped(flip)).unwrap();
            prop_assert!((g - h).abs() <= 4.0 * bins.len() as f64 + 1e-12);
        }
    }
}
