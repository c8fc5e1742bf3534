//! Semidefinite relaxation of the band-shaping program:
//!
//! ```text
//! maximize   tr(A_M S)
//! subject to diag(S) = 1,  tr(A_I S) <= alpha / 2,  S PSD
//! ```
//!
//! The single trace inequality is handled by a search over its scalar dual
//! `λ`: for fixed `λ` the Lagrangian subproblem `max tr((A_M - λ A_I) S)`
//! over unit-diagonal PSD matrices has the Max-Cut form and is solved by
//! ADMM ([`inner_maxcut_sdp`]). `tr(A_I S(λ))` is non-increasing in `λ`,
//! which makes the bracketing search exact up to its tolerance.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::DesignProblem;
use crate::spectral::{build_partial_dft, eigh, eigh_warm, gram, EigenFactorization, GramMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// ADMM iteration limit for each inner solve.
    pub max_outer_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// Initial ADMM penalty; adapted by residual balancing.
    pub penalty: f64,
    /// Relative tolerance on `|tr(A_I S) - alpha/2|`.
    pub bisection_tol: f64,
    /// Limit for both the bracket doubling and the bisection itself.
    pub max_bisection: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 5000,
            primal_tol: 1e-6,
            dual_tol: 1e-6,
            penalty: 1.0,
            bisection_tol: 1e-5,
            max_bisection: 60,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let tols = [
            self.primal_tol,
            self.dual_tol,
            self.penalty,
            self.bisection_tol,
        ];
        if tols.iter().any(|&t| !(t > 0.0)) || self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig(
                "solver tolerances and penalty must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Optimal relaxation matrix together with its certificate data.
#[derive(Clone, Debug)]
pub struct SdpSolution {
    /// Unit-diagonal PSD solution.
    pub matrix: DMatrix<f64>,
    /// `tr(A_M S)`.
    pub objective: f64,
    /// `tr(A_I S)`.
    pub interferer_trace: f64,
    /// `U Σ^{1/2}`; columns beyond the numerical rank are zero.
    pub factor: DMatrix<f64>,
    pub rank: usize,
    pub kkt_residual: f64,
    /// Multiplier of the trace inequality.
    pub dual_multiplier: f64,
    pub eigen: EigenFactorization,
    /// ADMM iterations summed over all inner solves.
    pub iterations: usize,
}

impl SdpSolution {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Builds a solution record from a unit-diagonal PSD matrix, e.g. a known
    /// rank-one optimum. The KKT residual is evaluated against `p`.
    pub fn from_matrix(
        p: &DesignProblem,
        matrix: DMatrix<f64>,
        dual_multiplier: f64,
    ) -> Result<Self> {
        let grams = ProblemGrams::new(p)?;
        let mut sol = assemble(&grams, matrix, dual_multiplier, 0)?;
        sol.kkt_residual = kkt_with(&grams, p.alpha, &sol);
        Ok(sol)
    }

    /// Row-major CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n() {
            let row: Vec<String> = (0..self.n())
                .map(|j| format!("{:.16e}", self.matrix[(i, j)]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// `A_M`, `A_I` for one problem.
#[derive(Clone, Debug)]
pub struct ProblemGrams {
    pub message: GramMatrix,
    pub interferer: GramMatrix,
}

impl ProblemGrams {
    pub fn new(p: &DesignProblem) -> Result<Self> {
        Ok(Self {
            message: gram(&build_partial_dft(p.n, &p.message)?),
            interferer: gram(&build_partial_dft(p.n, &p.interferer)?),
        })
    }

    /// `(A_M - λ A_I) / (1 + λ)`: the Lagrangian objective, normalized so the
    /// inner solver sees a matrix of bounded norm for any `λ`.
    fn lagrangian(&self, lambda: f64) -> DMatrix<f64> {
        let scale = 1.0 / (1.0 + lambda);
        self.message.values() * scale - self.interferer.values() * (lambda * scale)
    }
}

/// ADMM iterate, reusable as a warm start for a nearby objective.
#[derive(Clone, Debug)]
pub struct AdmmState {
    z: DMatrix<f64>,
    u: DMatrix<f64>,
    rho: f64,
    basis: DMatrix<f64>,
    warm_uses: usize,
}

impl AdmmState {
    fn cold(n: usize, rho: f64) -> Self {
        Self {
            z: DMatrix::identity(n, n),
            u: DMatrix::zeros(n, n),
            rho,
            basis: DMatrix::identity(n, n),
            warm_uses: 0,
        }
    }
}

/// Output of one Max-Cut-form solve.
#[derive(Clone, Debug)]
pub struct InnerSolution {
    /// Unit-diagonal PSD maximizer.
    pub matrix: DMatrix<f64>,
    /// `tr(C S)`.
    pub objective: f64,
    pub iterations: usize,
}

const OVER_RELAXATION: f64 = 1.6;
const BALANCE_RATIO: f64 = 10.0;
const BALANCE_EVERY: usize = 50;
const MAX_BALANCE_UPDATES: usize = 20;
const REORTHONORMALIZE_EVERY: usize = 25;

/// Solves `max tr(C S)` subject to `diag(S) = 1`, `S` PSD.
pub fn inner_maxcut_sdp(c: &DMatrix<f64>, cfg: &SolverConfig) -> Result<InnerSolution> {
    cfg.validate()?;
    let mut state = AdmmState::cold(c.nrows(), cfg.penalty);
    admm(c, cfg, &mut state)
}

/// ADMM with splitting `S = Z`: the S-step projects onto the affine set
/// `diag(S) = 1`, the Z-step onto the PSD cone, followed by a scaled dual
/// update and residual-balancing penalty adaptation.
fn admm(c: &DMatrix<f64>, cfg: &SolverConfig, st: &mut AdmmState) -> Result<InnerSolution> {
    let n = c.nrows();
    let c_norm = c.norm();
    for it in 1..=cfg.max_outer_iters {
        let mut s = &st.z - &st.u + c / st.rho;
        for i in 0..n {
            s[(i, i)] = 1.0;
        }
        let relaxed = &s * OVER_RELAXATION + &st.z * (1.0 - OVER_RELAXATION);
        let x = &relaxed + &st.u;
        let (z_new, eig) = project_psd(&x, st)?;
        st.basis = eig.eigenvectors;
        let u_new = &st.u + &relaxed - &z_new;

        let r = (&s - &z_new).norm();
        let d = st.rho * (&z_new - &st.z).norm();
        st.z = z_new;
        st.u = u_new;

        let eps_pri = cfg.primal_tol * (n as f64).sqrt().max(s.norm().max(st.z.norm()));
        let eps_dual = cfg.dual_tol * (n as f64).sqrt().max(c_norm.max(st.rho * st.u.norm()));
        if r <= eps_pri && d <= eps_dual {
            let matrix = unit_diagonal(&st.z);
            let objective = c.dot(&matrix);
            return Ok(InnerSolution {
                matrix,
                objective,
                iterations: it,
            });
        }

        // Adapting every iteration makes the iteration chaotic on rank-one
        // optima; a bounded number of spaced updates keeps the fixed-penalty
        // convergence guarantee.
        if it % BALANCE_EVERY != 0 || it > BALANCE_EVERY * MAX_BALANCE_UPDATES {
            continue;
        }
        if r > BALANCE_RATIO * d {
            st.rho *= 2.0;
            st.u /= 2.0;
        } else if d > BALANCE_RATIO * r {
            st.rho /= 2.0;
            st.u *= 2.0;
        }
    }
    Err(Error::NonConvergence {
        what: "ADMM",
        iterations: cfg.max_outer_iters,
    })
}

fn project_psd(x: &DMatrix<f64>, st: &mut AdmmState) -> Result<(DMatrix<f64>, EigenFactorization)> {
    if st.warm_uses >= REORTHONORMALIZE_EVERY {
        st.basis = st.basis.clone().qr().q();
        st.warm_uses = 0;
    }
    st.warm_uses += 1;
    let eig = eigh_warm(x, &st.basis)?;
    let n = x.nrows();
    let positive = eig.eigenvalues.iter().take_while(|&&l| l > 0.0).count();
    let mut z = DMatrix::zeros(n, n);
    if positive > 0 {
        let v = eig.eigenvectors.columns(0, positive);
        let mut scaled = v.clone_owned();
        for (mut col, &l) in scaled.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= l;
        }
        z = &scaled * v.transpose();
        z = (&z + z.transpose()) * 0.5;
    }
    Ok((z, eig))
}

/// `D^{-1/2} Z D^{-1/2}` with `D = diag(Z)`: a congruence, so the result is
/// PSD with an exact unit diagonal.
fn unit_diagonal(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| 1.0 / z[(i, i)].max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| (z[(i, j)] * d[i] * d[j]).clamp(-1.0, 1.0));
    for i in 0..n {
        s[(i, i)] = 1.0;
    }
    s
}

struct Probe {
    lambda: f64,
    matrix: DMatrix<f64>,
    trace: f64,
}

/// Finds the multiplier `λ` of the trace inequality and the matching
/// relaxation solution.
///
/// The `λ = 0` solution is returned as is when it already satisfies the
/// bound. Otherwise `λ` is doubled from 1 until the bound holds, then the
/// bracket is bisected until `tr(A_I S(λ))` is within
/// `bisection_tol * max(1, alpha)` of `alpha / 2`. The final matrix mixes the
/// two bracket ends so that the bound is met with equality.
pub fn dual_bisection(p: &DesignProblem, cfg: &SolverConfig) -> Result<(f64, SdpSolution)> {
    cfg.validate()?;
    let grams = ProblemGrams::new(p)?;
    let target = p.alpha / 2.0;
    let tol = cfg.bisection_tol * p.alpha.max(1.0);
    let accept = tol.min(10.0 * cfg.primal_tol);
    let mut state = AdmmState::cold(p.n, cfg.penalty);
    let mut iterations = 0;

    let mut probe = |lambda: f64, state: &mut AdmmState| -> Result<Probe> {
        let inner = admm(&grams.lagrangian(lambda), cfg, state)?;
        iterations += inner.iterations;
        let trace = grams.interferer.trace_with(&inner.matrix);
        Ok(Probe {
            lambda,
            matrix: inner.matrix,
            trace,
        })
    };

    let zero = probe(0.0, &mut state)?;
    if zero.trace <= target + accept {
        return finish(&grams, p.alpha, zero.matrix, 0.0, iterations);
    }

    let mut lo = zero;
    let mut hi = None;
    let mut lambda = 1.0;
    for _ in 0..cfg.max_bisection {
        let pr = probe(lambda, &mut state)?;
        if pr.trace <= target + accept {
            hi = Some(pr);
            break;
        }
        lo = pr;
        lambda *= 2.0;
    }
    let Some(mut hi) = hi else {
        return Err(Error::InfeasibleRelaxation {
            bound: target,
            reached: lo.trace,
        });
    };

    let mut last_hi = true;
    for _ in 0..cfg.max_bisection {
        let closest = if last_hi { &hi } else { &lo };
        if (closest.trace - target).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo.lambda + hi.lambda);
        if mid <= lo.lambda || mid >= hi.lambda {
            break;
        }
        let pr = probe(mid, &mut state)?;
        if pr.trace > target + accept {
            lo = pr;
            last_hi = false;
        } else {
            hi = pr;
            last_hi = true;
        }
    }

    // Land exactly on the bound by mixing the bracket ends; both are
    // unit-diagonal PSD so the mixture is too.
    let (main, other) = if last_hi { (&hi, &lo) } else { (&lo, &hi) };
    let (matrix, lambda) =
        if (main.trace - target).abs() > 0.0 && (other.trace - main.trace).abs() > 0.0 {
            let theta = ((target - main.trace) / (other.trace - main.trace)).clamp(0.0, 1.0);
            (
                &main.matrix * (1.0 - theta) + &other.matrix * theta,
                main.lambda,
            )
        } else {
            (main.matrix.clone(), main.lambda)
        };
    finish(&grams, p.alpha, matrix, lambda, iterations)
}

fn finish(
    grams: &ProblemGrams,
    alpha: f64,
    matrix: DMatrix<f64>,
    lambda: f64,
    iterations: usize,
) -> Result<(f64, SdpSolution)> {
    let mut sol = assemble(grams, matrix, lambda, iterations)?;
    sol.kkt_residual = kkt_with(grams, alpha, &sol);
    Ok((lambda, sol))
}

fn assemble(
    grams: &ProblemGrams,
    matrix: DMatrix<f64>,
    lambda: f64,
    iterations: usize,
) -> Result<SdpSolution> {
    let eigen = eigh(&matrix)?;
    let n = matrix.nrows();
    let mut factor = DMatrix::zeros(n, n);
    for k in 0..eigen.rank {
        let l = eigen.eigenvalues[k].max(0.0).sqrt();
        factor.set_column(k, &(eigen.eigenvectors.column(k) * l));
    }
    Ok(SdpSolution {
        objective: grams.message.trace_with(&matrix),
        interferer_trace: grams.interferer.trace_with(&matrix),
        rank: eigen.rank,
        matrix,
        factor,
        kkt_residual: f64::NAN,
        dual_multiplier: lambda,
        eigen,
        iterations,
    })
}

/// Relaxation optimum for a validated problem.
pub fn solve_relaxation(p: &DesignProblem, cfg: &SolverConfig) -> Result<SdpSolution> {
    dual_bisection(p, cfg).map(|(_, sol)| sol)
}

/// Largest violation among the optimality conditions of `sol` for `p`:
/// unit diagonal, the trace bound, PSD-ness, dual feasibility of the
/// recovered diagonal multipliers `ν = diag(C S)` (the PSD part of
/// `C - Diag(ν)` with `C = A_M - λ A_I` must vanish), and complementary
/// slackness of the trace bound.
pub fn kkt_residuals(sol: &SdpSolution, p: &DesignProblem) -> Result<f64> {
    let grams = ProblemGrams::new(p)?;
    Ok(kkt_with(&grams, p.alpha, sol))
}

fn kkt_with(grams: &ProblemGrams, alpha: f64, sol: &SdpSolution) -> f64 {
    let s = &sol.matrix;
    let n = s.nrows();
    let lambda = sol.dual_multiplier;
    let target = alpha / 2.0;
    let trace_i = grams.interferer.trace_with(s);

    let diag = (0..n).map(|i| (s[(i, i)] - 1.0).abs()).fold(0.0, f64::max);
    let bound = (trace_i - target).max(0.0);
    let min_eig = eigh(s)
        .map(|e| (-e.eigenvalues[n - 1]).max(0.0))
        .unwrap_or(f64::INFINITY);
    let dual_sign = (-lambda).max(0.0);
    let slackness = (lambda * (trace_i - target)).abs();

    let c = grams.message.values() - grams.interferer.values() * lambda;
    let cs = &c * s;
    let mut m = c;
    for i in 0..n {
        m[(i, i)] -= cs[(i, i)];
    }
    let stationarity = eigh(&m)
        .map(|e| {
            e.eigenvalues
                .iter()
                .filter(|&&l| l > 0.0)
                .map(|l| l * l)
                .sum::<f64>()
                .sqrt()
        })
        .unwrap_or(f64::INFINITY);

    [diag, bound, min_eig, dual_sign, slackness, stationarity]
        .into_iter()
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::BandSpec;

    fn problem(n: usize, m: &[usize], i: &[usize], alpha: f64) -> DesignProblem {
        DesignProblem::new(
            n,
            BandSpec::new(m.to_vec()).unwrap(),
            BandSpec::new(i.to_vec()).unwrap(),
            alpha,
            1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn dc_problem_has_all_ones_optimum() {
        let p = problem(4, &[0], &[], 1.0);
        let sol = SdpSolution::from_matrix(&p, DMatrix::from_element(4, 4, 1.0), 0.0).unwrap();
        assert!(sol.kkt_residual <= 1e-10, "{}", sol.kkt_residual);
        assert_eq!(sol.rank, 1);
        assert!((sol.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn perturbed_diagonal_is_flagged() {
        let p = problem(4, &[0], &[], 1.0);
        let mut m = DMatrix::from_element(4, 4, 1.0);
        m[(0, 0)] = 1.1;
        let sol = SdpSolution::from_matrix(&p, m, 0.0).unwrap();
        assert!(sol.kkt_residual >= 0.1);
    }

    #[test]
    fn inner_solve_matches_rank_one_dc() {
        let p = problem(6, &[0], &[], 1.0);
        let grams = ProblemGrams::new(&p).unwrap();
        let inner = inner_maxcut_sdp(grams.message.values(), &SolverConfig::default()).unwrap();
        assert!((inner.objective - 6.0).abs() < 1e-5, "{}", inner.objective);
    }

    #[test]
    fn unconstrained_solution_is_certified() {
        let p = problem(12, &[2, 3], &[5], 100.0);
        let (lambda, sol) = dual_bisection(&p, &SolverConfig::default()).unwrap();
        assert_eq!(lambda, 0.0);
        assert!(sol.kkt_residual <= 1e-5, "{}", sol.kkt_residual);
    }

    #[test]
    fn conjugate_bins_force_the_bound() {
        // Bins 2 and 10 carry equal power for real inputs, so the relaxation
        // optimum is exactly alpha / 2.
        let p = problem(12, &[2], &[10], 1.0);
        let (lambda, sol) = dual_bisection(&p, &SolverConfig::default()).unwrap();
        assert!(lambda > 0.0);
        assert!((sol.objective - 0.5).abs() <= 1e-5, "{}", sol.objective);
        assert!(sol.interferer_trace <= 0.5 + 1e-5);
    }

    #[test]
    fn active_constraint_lands_on_bound() {
        let p = problem(12, &[2, 3], &[9], 0.5);
        let (lambda, sol) = dual_bisection(&p, &SolverConfig::default()).unwrap();
        assert!(lambda > 0.0);
        assert!(
            (sol.interferer_trace - 0.25).abs() <= 1e-5,
            "{}",
            sol.interferer_trace
        );
        assert!(sol.kkt_residual <= 1e-5, "{}", sol.kkt_residual);
        for i in 0..12 {
            assert!((sol.matrix[(i, i)] - 1.0).abs() < 1e-12);
        }
        let recon = &sol.factor * sol.factor.transpose();
        assert!((recon - &sol.matrix).norm() < 1e-6);
    }

    #[test]
    fn full_interferer_band_with_zero_budget_is_infeasible() {
        // tr(A_I S) = n - tr(A_M S) >= n / 2 for every feasible S.
        let rest: Vec<usize> = (0..8).filter(|&k| k != 1).collect();
        let p = problem(8, &[1], &rest, 0.0);
        assert!(matches!(
            dual_bisection(&p, &SolverConfig::default()),
            Err(Error::InfeasibleRelaxation { .. })
        ));
    }

    #[test]
    fn csv_dump_round_trips() {
        let p = problem(4, &[0], &[], 1.0);
        let sol = SdpSolution::from_matrix(&p, DMatrix::from_element(4, 4, 1.0), 0.0).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<f64> = text
            .lines()
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(parsed, vec![1.0; 16]);
    }

    #[test]
    #[ignore]
    fn timing_probe() {
        for (n, scale) in [(64usize, 2usize), (128, 1)] {
            let m: Vec<usize> = [24, 25, 26, 27, 28, 29, 39, 40, 41, 42, 43, 44]
                .iter()
                .map(|b| b / scale)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let i: Vec<usize> = [9, 10, 11, 12, 13, 14, 49, 50, 51, 52, 53, 54]
                .iter()
                .map(|b| b / scale)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            for alpha in [0.5, 2.0, 5.0] {
                let p = problem(n, &m, &i, alpha);
                let t = std::time::Instant::now();
                let (lambda, sol) = dual_bisection(&p, &SolverConfig::default()).unwrap();
                eprintln!("n={n} alpha={alpha} lambda={lambda:.4} obj={:.5} tr={:.6} rank={} kkt={:.2e} iters={} {:?}",
                    sol.objective, sol.interferer_trace, sol.rank, sol.kkt_residual, sol.iterations, t.elapsed());
            }
        }
    }
}
