//! Partial DFT bases, the real Gram matrices that realize band powers as
//! quadratic forms, and a Jacobi eigensolver for real symmetric matrices.
//!
//! DFT convention: entry `(i, k)` of a basis is `exp(-j 2π k i / n) / √n`,
//! so `F^H s` is the unitary transform of `s` restricted to the band.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::problem::BandSpec;

pub type Complex64 = Complex<f64>;

/// `exp(-j 2π m / n)`.
///
/// Multiples of a quarter turn are returned exactly and the second half of
/// the circle mirrors the first, so `twiddle(n - m) == conj(twiddle(m))`
/// bit for bit. Exact nulls and conjugate-bin symmetry of real inputs then
/// survive floating point.
pub fn twiddle(m: usize, n: usize) -> Complex64 {
    let m = m % n;
    if 2 * m > n {
        return twiddle(n - m, n).conj();
    }
    if (4 * m).is_multiple_of(n) {
        return match 4 * m / n {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            _ => Complex64::new(-1.0, 0.0),
        };
    }
    if n.is_multiple_of(2) && 4 * m > n {
        return -twiddle(n / 2 - m, n).conj();
    }
    let theta = 2.0 * PI * m as f64 / n as f64;
    Complex64::new(theta.cos(), -theta.sin())
}

/// Columns of the unitary DFT matrix selected by a band.
#[derive(Clone, Debug)]
pub struct PartialDftBasis {
    n: usize,
    band: BandSpec,
    // n x |band|, column-major: column k holds the real/imag parts of F_k.
    re: Vec<f64>,
    im: Vec<f64>,
}

impl PartialDftBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn band(&self) -> &BandSpec {
        &self.band
    }

    pub fn width(&self) -> usize {
        self.band.len()
    }

    /// Column `k` of the basis as (real, imaginary) slices.
    pub fn column(&self, k: usize) -> (&[f64], &[f64]) {
        let r = k * self.n..(k + 1) * self.n;
        (&self.re[r.clone()], &self.im[r])
    }

    /// The basis as a complex `n x |band|` matrix.
    pub fn columns(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.width(), |i, k| {
            Complex64::new(self.re[k * self.n + i], self.im[k * self.n + i])
        })
    }

    /// `F^H x` for real `x`.
    pub fn project(&self, x: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.width()];
        self.project_into(x, &mut out);
        out
    }

    pub fn project_into(&self, x: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.n);
        for (k, o) in out.iter_mut().enumerate() {
            let (re, im) = self.column(k);
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..self.n {
                a += x[i] * re[i];
                b -= x[i] * im[i];
            }
            *o = Complex64::new(a, b);
        }
    }

    /// `F^H x` for complex `x`.
    pub fn project_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.width())
            .map(|k| {
                let (re, im) = self.column(k);
                x.iter()
                    .zip(re.iter().zip(im))
                    .map(|(xi, (&r, &m))| Complex64::new(r, -m) * xi)
                    .sum()
            })
            .collect()
    }

    /// Squared magnitudes `|F_k^H x|^2` for every bin of the band.
    pub fn power_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (re, im) = self.column(k);
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..self.n {
                a += x[i] * re[i];
                b += x[i] * im[i];
            }
            *o = a * a + b * b;
        }
    }
}

/// Partial DFT basis for a band.
pub fn build_partial_dft(n: usize, band: &BandSpec) -> Result<PartialDftBasis> {
    if n == 0 {
        return Err(Error::InvalidProblem(
            "sequence length must be positive".into(),
        ));
    }
    if let Some(&bin) = band.indices().iter().find(|&&b| b >= n) {
        return Err(Error::Index { bin, n });
    }
    let scale = 1.0 / (n as f64).sqrt();
    let k = band.len();
    let mut re = vec![0.0; n * k];
    let mut im = vec![0.0; n * k];
    for (col, &bin) in band.indices().iter().enumerate() {
        for i in 0..n {
            let w = twiddle(bin * i % n, n);
            re[col * n + i] = w.re * scale;
            im[col * n + i] = w.im * scale;
        }
    }
    Ok(PartialDftBasis {
        n,
        band: band.clone(),
        re,
        im,
    })
}

/// Real symmetric `Re(F F^H)`; `x^T G x = ‖F^H x‖²` for real `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        v.dot(&(&self.values * &v))
    }

    /// `tr(G S)` for symmetric `S`.
    pub fn trace_with(&self, s: &DMatrix<f64>) -> f64 {
        self.values.dot(s)
    }
}

pub fn gram(basis: &PartialDftBasis) -> GramMatrix {
    let n = basis.n;
    let mut g = DMatrix::zeros(n, n);
    // G_ij = (1/n) Σ_k cos(2π k (i - j) / n); computed from the twiddle of
    // the index difference so that the matrix is symmetric by construction.
    for i in 0..n {
        for j in i..n {
            let d = (j - i) % n;
            let v: f64 = basis
                .band
                .indices()
                .iter()
                .map(|&bin| twiddle(bin * d % n, n).re)
                .sum::<f64>()
                / n as f64;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    GramMatrix { values: g }
}

/// `|F_k^H s|` for every bin `k = 0..n-1`.
pub fn full_spectrum(n: usize, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: s.len(),
        });
    }
    let all = BandSpec::full(n);
    let basis = build_partial_dft(n, &all)?;
    let mut p = vec![0.0; n];
    basis.power_into(s, &mut p);
    Ok(p.into_iter().map(f64::sqrt).collect())
}

/// Full-length unitary transforms through an FFT: `analysis(s) = F^H s`
/// and `synthesis(x) = F x` for the complete basis.
#[derive(Clone)]
pub struct UnitaryDft {
    n: usize,
    scale: f64,
    // F^H s sums exp(+j 2π k i / n) s_i, an unnormalized inverse FFT.
    analysis: Arc<dyn Fft<f64>>,
    synthesis: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft").field("n", &self.n).finish()
    }
}

impl UnitaryDft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            scale: 1.0 / (n as f64).sqrt(),
            analysis: planner.plan_fft_inverse(n),
            synthesis: planner.plan_fft_forward(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn analysis(&self, s: &[Complex64]) -> Vec<Complex64> {
        self.run(&self.analysis, s)
    }

    pub fn synthesis(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.run(&self.synthesis, x)
    }

    fn run(&self, fft: &Arc<dyn Fft<f64>>, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n, "transform length mismatch");
        let mut buf = v.to_vec();
        fft.process(&mut buf);
        for b in &mut buf {
            *b *= self.scale;
        }
        buf
    }
}

pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_OFF_TOL: f64 = 1e-12;
pub const RANK_TOL: f64 = 1e-7;
pub const CLAMP_TOL: f64 = 1e-8;

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenFactorization {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub rank: usize,
}

impl EigenFactorization {
    /// `U diag(λ) U^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.eigenvectors.clone();
        for (mut col, &l) in scaled.column_iter_mut().zip(self.eigenvalues.iter()) {
            col *= l;
        }
        &scaled * self.eigenvectors.transpose()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(M + M^T)/2` first. Eigenvalues inside
/// `(-1e-8 max(λ_1, 1), 0)` are clamped to zero.
pub fn eigh(m: &DMatrix<f64>) -> Result<EigenFactorization> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigh needs a square matrix");
    let a = (m + m.transpose()) * 0.5;
    let (values, vectors) = jacobi(a, DMatrix::identity(n, n))?;
    Ok(finish(values, vectors))
}

/// Jacobi started from an approximate eigenbasis `guess` (orthonormal
/// columns). Successive matrices in an iterative solver are close, so the
/// rotated matrix is nearly diagonal and few sweeps are needed.
pub(crate) fn eigh_warm(m: &DMatrix<f64>, guess: &DMatrix<f64>) -> Result<EigenFactorization> {
    let rotated = guess.transpose() * m * guess;
    let a = (&rotated + rotated.transpose()) * 0.5;
    let (values, vectors) = jacobi(a, guess.clone())?;
    Ok(finish(values, vectors))
}

fn finish(values: Vec<f64>, vectors: DMatrix<f64>) -> EigenFactorization {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let top = order.first().map(|&i| values[i]).unwrap_or(0.0);
    let clamp = CLAMP_TOL * top.max(1.0);
    let eigenvalues = DVector::from_iterator(
        n,
        order.iter().map(|&i| {
            let v = values[i];
            if v < 0.0 && v > -clamp {
                0.0
            } else {
                v
            }
        }),
    );
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    let rank = if top > 0.0 {
        eigenvalues.iter().filter(|&&v| v > RANK_TOL * top).count()
    } else {
        0
    };
    EigenFactorization {
        eigenvalues,
        eigenvectors,
        rank,
    }
}

/// Cyclic Jacobi on a symmetric matrix; `v` accumulates the rotations.
fn jacobi(mut a: DMatrix<f64>, mut v: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let fro = a.norm();
    let tol = JACOBI_OFF_TOL * fro;
    let skip = tol / n.max(1) as f64;
    let a = a.as_mut_slice();
    {
        let vs = v.as_mut_slice();
        for sweep in 0..=JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for q in 1..n {
                for p in 0..q {
                    off += a[q * n + p] * a[q * n + p];
                }
            }
            if (2.0 * off).sqrt() <= tol {
                break;
            }
            if sweep == JACOBI_MAX_SWEEPS {
                return Err(Error::NonConvergence {
                    what: "Jacobi eigensolver",
                    iterations: sweep,
                });
            }
            for p in 0..n.saturating_sub(1) {
                for q in p + 1..n {
                    let apq = a[q * n + p];
                    if apq.abs() <= skip {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        if k == p || k == q {
                            continue;
                        }
                        let akp = a[p * n + k];
                        let akq = a[q * n + k];
                        let np = c * akp - s * akq;
                        let nq = s * akp + c * akq;
                        a[p * n + k] = np;
                        a[q * n + k] = nq;
                        a[k * n + p] = np;
                        a[k * n + q] = nq;
                    }
                    a[p * n + p] = app - t * apq;
                    a[q * n + q] = aqq + t * apq;
                    a[q * n + p] = 0.0;
                    a[p * n + q] = 0.0;
                    // p < q, so column p lies entirely before column q.
                    let (lo, hi) = vs.split_at_mut(q * n);
                    let (vp, vq) = (&mut lo[p * n..(p + 1) * n], &mut hi[..n]);
                    for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                        let xp = *x;
                        let xq = *y;
                        *x = c * xp - s * xq;
                        *y = s * xp + c * xq;
                    }
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    Ok((values, v))
}
