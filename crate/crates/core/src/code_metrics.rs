//! Pairwise design metrics for codeword sequences.
//!
//! For two coded sequences `C̄`, `Ē` with branch codewords `C^z`, `E^z`, the
//! branch difference is `D^z = C^z − E^z` and the distance matrix is
//! `A^z = (D^z)ᴴ D^z`. Over the steps `ρ` where the sequences differ,
//! CGD = det(Σ A^z) and MPD = Π (1 + ‖D^z‖²_F).

use std::io::Write;

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;

/// Relative singular-value tolerance used for every rank decision.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseMetrics<T> {
    pub cgd: T,
    pub mpd: T,
    /// Smallest rank of `A^z` over the differing steps (0 when none differ).
    pub min_rank: usize,
    pub delta_h: usize,
}

impl<T: Real> PairwiseMetrics<T> {
    pub fn product(&self) -> T {
        self.cgd * self.mpd
    }
}

pub fn difference<T: Real>(c: &CMatrix<T>, e: &CMatrix<T>) -> Result<CMatrix<T>> {
    c.try_sub(e)
}

/// `A = Dᴴ D` with `D = C − E`.
pub fn distance_matrix<T: Real>(c: &CMatrix<T>, e: &CMatrix<T>) -> Result<CMatrix<T>> {
    Ok(difference(c, e)?.gram())
}

/// `det(Σ_z A^z)`, clamped at zero. An empty list has no gain and gives 0.
pub fn cgd<T: Real>(distance_matrices: &[CMatrix<T>]) -> Result<T> {
    let Some(first) = distance_matrices.first() else {
        return Ok(T::zero());
    };
    let mut sum = first.clone();
    for a in &distance_matrices[1..] {
        sum = sum.try_add(a)?;
    }
    Ok(sum.det().re.max(T::zero()))
}

/// `Π_z (1 + ‖D^z‖²_F)`; the empty product is 1.
pub fn mpd<T: Real>(difference_matrices: &[CMatrix<T>]) -> T {
    difference_matrices
        .iter()
        .fold(T::one(), |acc, d| acc * (T::one() + d.frobenius_sq()))
}

/// The printed closed-form pairwise expression for two 8-symbol tuples
/// `(x₁..x₄, x̃₅..x̃₈)` and `(y₁..y₄, ỹ₅..ỹ₈)`:
/// `(1/8) Σ_p |Δ_p + Δ̃_{p+4}|² + |Δ_p − Δ̃_{p+4}|²`.
///
/// This is a sum of squares and vanishes only for identical tuples, so it is
/// used as a zero/non-zero indicator and never as a distance to maximise.
pub fn closed_form_cgd<T: Real>(x: &[Complex<T>], y: &[Complex<T>]) -> Result<T> {
    if x.len() != 8 || y.len() != 8 {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let sum = (0..4).fold(T::zero(), |acc, p| {
        let d = x[p] - y[p];
        let dt = x[p + 4] - y[p + 4];
        acc + (d + dt).norm_sqr() + (d - dt).norm_sqr()
    });
    Ok(sum / T::lit(8.0))
}

pub fn rank<T: Real>(m: &CMatrix<T>) -> usize {
    m.rank(T::lit(RANK_TOLERANCE))
}

/// Number of positions where the two sequences differ.
pub fn hamming_distance<S: PartialEq>(a: &[S], b: &[S]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

/// Upper end of the achievable diversity order, `4·M_r·min(δ_H, L)`.
pub fn diversity_bound(delta_h: usize, taps: usize, rx: usize) -> usize {
    4 * rx * delta_h.min(taps)
}

/// Metrics of two equal-length codeword sequences.
pub fn sequence_metrics<T: Real>(c: &[CMatrix<T>], e: &[CMatrix<T>]) -> Result<PairwiseMetrics<T>> {
    if c.len() != e.len() {
        return Err(Error::LengthMismatch(c.len(), e.len()));
    }
    let mut diffs = Vec::new();
    for (cz, ez) in c.iter().zip(e) {
        let d = difference(cz, ez)?;
        if d.max_abs() > T::zero() {
            diffs.push(d);
        }
    }
    let grams: Vec<_> = diffs.iter().map(|d| d.gram()).collect();
    Ok(PairwiseMetrics {
        cgd: cgd(&grams)?,
        mpd: mpd(&diffs),
        min_rank: grams.iter().map(rank).min().unwrap_or(0),
        delta_h: diffs.len(),
    })
}

/// Single-step metrics of one codeword pair.
pub fn pair_metrics<T: Real>(c: &CMatrix<T>, e: &CMatrix<T>) -> Result<PairwiseMetrics<T>> {
    sequence_metrics(std::slice::from_ref(c), std::slice::from_ref(e))
}

#[derive(Serialize)]
struct MetricRecord<'a> {
    pair_id: &'a str,
    cgd: f64,
    mpd: f64,
    rank: usize,
    product: f64,
}

/// Writes `(pair id, metrics)` rows as CSV with columns
/// `pair_id,cgd,mpd,rank,product`.
pub fn write_metrics_csv<T: Real, W: Write>(out: W, rows: &[(String, PairwiseMetrics<T>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (id, m) in rows {
        w.serialize(MetricRecord {
            pair_id: id,
            cgd: m.cgd.as_f64(),
            mpd: m.mpd.as_f64(),
            rank: m.min_rank,
            product: m.product().as_f64(),
        })?;
    }
    w.flush()?;
    Ok(())
}
