//! Exhaustive ground truth for small `n`.
//!
//! Sequences are enumerated with `s_0 = +1` fixed (metrics are invariant to
//! global negation) in Gray-code order, so consecutive sequences differ in a
//! single entry and every band projection is updated in `O(1)` per bin. The
//! space is split by high-order bits into partitions that are scanned in
//! parallel, each re-initialized exactly from its first sequence.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{BinarySequence, DesignProblem, MetricBundle, MetricEvaluator, ScoreKind};
use crate::spectral::build_partial_dft;

pub const ORACLE_N_LIMIT: usize = 24;

/// Relative tolerance under which two scores count as tied.
const TIE_TOL: f64 = 1e-9;
/// Constraint values this close to the bound are re-evaluated from scratch.
const BOUNDARY_TOL: f64 = 1e-9;
const PARTITION_BITS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleBest {
    pub sequence: BinarySequence,
    pub metrics: MetricBundle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_by_power: OracleBest,
    pub best_by_rho: OracleBest,
    pub best_by_chi: OracleBest,
    pub n_feasible: u64,
    pub n_enumerated: u64,
}

impl OracleResult {
    pub fn best(&self, score: ScoreKind) -> &OracleBest {
        match score {
            ScoreKind::MessagePower => &self.best_by_power,
            ScoreKind::RejectionRatio => &self.best_by_rho,
            ScoreKind::ReciprocalDynamicRange => &self.best_by_chi,
        }
    }
}

/// Best feasible sequence under every score.
pub fn exhaustive_search(p: &DesignProblem) -> Result<OracleResult> {
    exhaustive_search_with_limit(p, ORACLE_N_LIMIT)
}

pub fn exhaustive_search_with_limit(p: &DesignProblem, n_limit: usize) -> Result<OracleResult> {
    let scan = scan(p, n_limit)?;
    let eval = MetricEvaluator::new(p)?;
    let best = |code: Option<u64>| -> Result<OracleBest> {
        let sequence = decode(code.ok_or(Error::NoFeasible)?, p.n);
        let metrics = eval.evaluate(&sequence)?;
        Ok(OracleBest { sequence, metrics })
    };
    Ok(OracleResult {
        best_by_power: best(scan.best[0].map(|b| b.code))?,
        best_by_rho: best(scan.best[1].map(|b| b.code))?,
        best_by_chi: best(scan.best[2].map(|b| b.code))?,
        n_feasible: scan.n_feasible,
        n_enumerated: scan.n_enumerated,
    })
}

/// `max f(s)` over sequences with `g(s) <= alpha / 2`; `-inf` if there are
/// none.
pub fn halved_constraint_optimum(p: &DesignProblem) -> Result<f64> {
    Ok(scan(p, ORACLE_N_LIMIT)?
        .halved
        .map_or(f64::NEG_INFINITY, |b| b.score))
}

/// Entry `i >= 1` is `-1` iff bit `i - 1` of `code` is set.
fn decode(code: u64, n: usize) -> BinarySequence {
    let entries = (0..n)
        .map(|i| {
            if i > 0 && code >> (i - 1) & 1 == 1 {
                -1
            } else {
                1
            }
        })
        .collect();
    BinarySequence::new(entries).expect("entries are ±1")
}

#[derive(Clone, Copy, Debug)]
struct Best {
    score: f64,
    code: u64,
}

fn score_cmp(a: f64, b: f64) -> Ordering {
    if a == b {
        return Ordering::Equal;
    }
    if a.is_finite() && b.is_finite() && (a - b).abs() <= TIE_TOL * a.abs().max(b.abs()).max(1.0) {
        return Ordering::Equal;
    }
    a.total_cmp(&b)
}

/// Lexicographic order of the decoded sequences with `-1 < +1`.
fn lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    diff != 0 && a >> diff.trailing_zeros() & 1 == 1
}

fn better(candidate: Best, current: Option<Best>) -> bool {
    match current {
        None => true,
        Some(c) => match score_cmp(candidate.score, c.score) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => lex_less(candidate.code, c.code),
        },
    }
}

fn keep(slot: &mut Option<Best>, candidate: Best) {
    if better(candidate, *slot) {
        *slot = Some(candidate);
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Scan {
    best: [Option<Best>; 3],
    halved: Option<Best>,
    n_feasible: u64,
    n_enumerated: u64,
}

impl Scan {
    fn merge(mut self, other: Scan) -> Scan {
        for k in 0..3 {
            if let Some(b) = other.best[k] {
                keep(&mut self.best[k], b);
            }
        }
        if let Some(b) = other.halved {
            keep(&mut self.halved, b);
        }
        self.n_feasible += other.n_feasible;
        self.n_enumerated += other.n_enumerated;
        self
    }
}

/// Real and imaginary parts of `F_k^H` entries for every band bin; message
/// bins first.
struct Columns {
    n: usize,
    n_message: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Columns {
    fn new(p: &DesignProblem) -> Result<Self> {
        let mut re = Vec::new();
        let mut im = Vec::new();
        for band in [&p.message, &p.interferer] {
            let basis = build_partial_dft(p.n, band)?;
            for k in 0..basis.width() {
                let (r, i) = basis.column(k);
                re.push(r.to_vec());
                im.push(i.iter().map(|v| -v).collect());
            }
        }
        Ok(Self {
            n: p.n,
            n_message: p.message.len(),
            re,
            im,
        })
    }

    fn project(&self, code: u64, a: &mut [f64], b: &mut [f64]) {
        let s = decode(code, self.n).to_f64();
        for k in 0..self.re.len() {
            a[k] = s.iter().zip(&self.re[k]).map(|(x, y)| x * y).sum();
            b[k] = s.iter().zip(&self.im[k]).map(|(x, y)| x * y).sum();
        }
    }

    fn metrics(&self, a: &[f64], b: &[f64], q: &mut [f64], alpha: f64) -> MetricBundle {
        for k in 0..q.len() {
            q[k] = a[k] * a[k] + b[k] * b[k];
        }
        MetricBundle::from_band_powers(&q[..self.n_message], &q[self.n_message..], alpha)
    }
}

fn scan(p: &DesignProblem, n_limit: usize) -> Result<Scan> {
    if p.n > n_limit || p.n > 64 {
        return Err(Error::SizeLimit {
            n: p.n,
            limit: n_limit.min(64),
        });
    }
    let cols = Columns::new(p)?;
    let free = p.n - 1;
    let high = free.min(PARTITION_BITS);
    let low = free - high;
    let scans: Vec<Scan> = (0..1u64 << high)
        .into_par_iter()
        .map(|prefix| scan_partition(&cols, p.alpha, prefix << low, low))
        .collect();
    Ok(scans.into_iter().fold(Scan::default(), Scan::merge))
}

fn scan_partition(cols: &Columns, alpha: f64, base: u64, low: usize) -> Scan {
    let bins = cols.re.len();
    let (mut a, mut b, mut q) = (vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]);
    let (mut a2, mut b2) = (vec![0.0; bins], vec![0.0; bins]);
    let mut out = Scan::default();
    let mut code = base;
    cols.project(code, &mut a, &mut b);
    for j in 0u64..1 << low {
        if j > 0 {
            let bit = j.trailing_zeros() as usize;
            code ^= 1 << bit;
            // Entry bit + 1 flips from its old sign to the new one.
            let entry = bit + 1;
            let new = if code >> bit & 1 == 1 { -1.0 } else { 1.0 };
            for k in 0..bins {
                a[k] += 2.0 * new * cols.re[k][entry];
                b[k] += 2.0 * new * cols.im[k][entry];
            }
        }
        out.n_enumerated += 1;
        let mut m = cols.metrics(&a, &b, &mut q, alpha);
        let near_bound = (m.interferer_power - alpha).abs() <= BOUNDARY_TOL
            || (m.interferer_power - alpha / 2.0).abs() <= BOUNDARY_TOL;
        if near_bound {
            cols.project(code, &mut a2, &mut b2);
            m = cols.metrics(&a2, &b2, &mut q, alpha);
        }
        if m.interferer_power <= alpha / 2.0 {
            keep(
                &mut out.halved,
                Best {
                    score: m.message_power,
                    code,
                },
            );
        }
        if !m.feasible {
            continue;
        }
        out.n_feasible += 1;
        for (k, score) in ScoreKind::ALL.iter().enumerate() {
            keep(
                &mut out.best[k],
                Best {
                    score: score.score(&m),
                    code,
                },
            );
        }
    }
    out
}
