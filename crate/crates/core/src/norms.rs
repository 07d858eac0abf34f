//! The k-support norm, its dual, and the elastic-net "max" norm with its dual.
//!
//! All functions here are pure. The k-support routines accept an integer `k`
//! in `1..=d`; the elastic-net pair accepts a real `k` in `[1, d]`.

use std::cmp::Ordering;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense coefficient vector with finite entries and length at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CoefficientVector(Vec<f64>);

impl CoefficientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(CoefficientVector(values))
    }

    pub fn zeros(d: usize) -> Result<Self> {
        Self::new(vec![0.0; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for CoefficientVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for CoefficientVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<CoefficientVector> for Vec<f64> {
    fn from(w: CoefficientVector) -> Vec<f64> {
        w.0
    }
}

pub(crate) fn check_finite(w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::EmptyVector);
    }
    match w.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

pub(crate) fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::SparsityOutOfRange { k: k as f64, d });
    }
    Ok(())
}

fn check_real_k(k: f64, d: usize) -> Result<()> {
    if !(k >= 1.0 && k <= d as f64) {
        return Err(Error::SparsityOutOfRange { k, d });
    }
    Ok(())
}

/// Magnitudes of a vector sorted in nonincreasing order, with the permutation
/// and signs needed to map back to the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedAbsView {
    /// `magnitudes[i]` is the (i+1)-th largest absolute value.
    pub magnitudes: Vec<f64>,
    /// `permutation[i]` is the original index of `magnitudes[i]`.
    pub permutation: Vec<usize>,
    /// `signs[i]` is `-1.0` for negative entries and `1.0` otherwise.
    pub signs: Vec<f64>,
}

impl SortedAbsView {
    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Scatter values given in the sorted frame back to the original
    /// coordinates, restoring signs.
    pub fn restore(&self, sorted_values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(sorted_values.len(), self.len());
        let mut out = vec![0.0; self.len()];
        for ((&idx, &s), &v) in self.permutation.iter().zip(&self.signs).zip(sorted_values) {
            out[idx] = s * v;
        }
        out
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        self.restore(&self.magnitudes)
    }
}

/// Sort `|w|` in nonincreasing order; ties keep ascending original index.
pub fn sort_abs_desc(w: &[f64]) -> SortedAbsView {
    let mut permutation: Vec<usize> = (0..w.len()).collect();
    // sort_by is stable, so equal magnitudes keep index order
    permutation.sort_by(|&a, &b| w[b].abs().total_cmp(&w[a].abs()));
    let magnitudes = permutation.iter().map(|&i| w[i].abs()).collect();
    let signs = permutation
        .iter()
        .map(|&i| if w[i].is_sign_negative() && w[i] != 0.0 { -1.0 } else { 1.0 })
        .collect();
    SortedAbsView {
        magnitudes,
        permutation,
        signs,
    }
}

/// Value of the k-support norm together with the split that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBreakdown {
    pub value: f64,
    /// Number of extra coordinates, beyond the last one kept at full weight,
    /// that are pooled into the averaged tail. Lies in `0..k`.
    pub r: usize,
    /// Sum of squares of the `k - r - 1` largest magnitudes.
    pub head_energy: f64,
    /// Sum of the remaining magnitudes, from rank `k - r` to `d`.
    pub tail_sum: f64,
}

/// Suffix sums over a nonincreasing magnitude sequence: `out[j] = z[j] + ... + z[d-1]`
/// (0-based), with `out[d] = 0`. Accumulated from the smallest entry upward.
fn suffix_sums(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len() + 1];
    for j in (0..z.len()).rev() {
        out[j] = out[j + 1] + z[j];
    }
    out
}

/// k-support norm of `w` in `O(d log d)`.
///
/// With `z = |w|` sorted decreasingly (1-based), `r` is the unique integer in
/// `0..k` with `z[k-r-1] > tail/(r+1) >= z[k-r]`, where `tail = z[k-r] + ... + z[d]`
/// and `z[0]` is treated as infinite. The norm is then
/// `sqrt(z[1]^2 + ... + z[k-r-1]^2 + tail^2/(r+1))`.
pub fn ksup_norm(w: &[f64], k: usize) -> Result<NormBreakdown> {
    check_finite(w)?;
    check_k(k, w.len())?;
    let z = sort_abs_desc(w).magnitudes;
    ksup_norm_sorted(&z, k)
}

/// As [`ksup_norm`], for magnitudes already sorted in nonincreasing order.
pub fn ksup_norm_sorted(z: &[f64], k: usize) -> Result<NormBreakdown> {
    let suffix = suffix_sums(z);
    // head[j] = z_1^2 + ... + z_j^2 (1-based ranks)
    let mut head = Vec::with_capacity(k);
    head.push(0.0);
    for &zi in &z[..k - 1] {
        head.push(head.last().unwrap() + zi * zi);
    }

    let scan = |slack: f64| -> Option<usize> {
        (0..k).find(|&r| {
            let head_len = k - r - 1;
            let avg = suffix[head_len] / (r + 1) as f64;
            let tol = slack * avg;
            // z_{k-r-1}; rank 0 is the +inf sentinel
            let upper_ok = head_len == 0 || z[head_len - 1] > avg - tol;
            let lower_ok = avg + tol >= z[head_len];
            upper_ok && lower_ok
        })
    };
    // ties can leave every bracket shut by an ulp; retry with a few ulps slack
    let r = scan(0.0)
        .or_else(|| scan(4.0 * k as f64 * f64::EPSILON))
        .ok_or_else(|| Error::Internal(format!("no split r in 0..{k} satisfies the k-support norm condition")))?;
    let head_len = k - r - 1;
    let tail_sum = suffix[head_len];
    let head_energy = head[head_len];
    let value = (head_energy + tail_sum * tail_sum / (r + 1) as f64).sqrt();
    Ok(NormBreakdown {
        value,
        r,
        head_energy,
        tail_sum,
    })
}

/// Dual of the k-support norm: the l2 norm of the `k` largest-magnitude entries.
pub fn ksup_dual_norm(u: &[f64], k: usize) -> Result<f64> {
    check_finite(u)?;
    check_k(k, u.len())?;
    let by_magnitude = |&a: &usize, &b: &usize| -> Ordering {
        u[b].abs().total_cmp(&u[a].abs()).then(a.cmp(&b))
    };
    let mut idx: Vec<usize> = (0..u.len()).collect();
    if k < u.len() {
        idx.select_nth_unstable_by(k - 1, by_magnitude);
    }
    // summing in decreasing magnitude makes the result depend only on the
    // multiset of selected values, not on which of several tied indices won
    let mut top: Vec<f64> = idx[..k].iter().map(|&i| u[i].abs()).collect();
    top.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(top.iter().map(|v| v * v).sum::<f64>().sqrt())
}

pub fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Elastic-net norm `max(||w||_2, ||w||_1 / sqrt(k))` for real `k` in `[1, d]`.
pub fn elastic_norm(w: &[f64], k: f64) -> Result<f64> {
    check_finite(w)?;
    check_real_k(k, w.len())?;
    Ok(l2_norm(w).max(l1_norm(w) / k.sqrt()))
}

/// Dual of [`elastic_norm`]: `inf_a ||a||_2 + sqrt(k) ||u - a||_inf`.
///
/// For a fixed threshold `t = ||u - a||_inf` the best `a` is `u` soft-thresholded
/// at `t`, so the problem reduces to minimizing the convex scalar function
/// `phi(t) = ||soft(|u|, t)||_2 + sqrt(k) t` over `[0, max|u|]`. Between
/// consecutive sorted magnitudes `phi` is smooth; the bracket where its
/// derivative changes sign is found from the breakpoints and then bisected
/// until the value is known to within `tol`.
pub fn elastic_dual_norm(u: &[f64], k: f64, tol: f64) -> Result<f64> {
    check_finite(u)?;
    check_real_k(k, u.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let z = sort_abs_desc(u).magnitudes;
    if z[0] == 0.0 {
        return Ok(0.0);
    }
    let sqrt_k = k.sqrt();
    let d = z.len();

    // running mean and centered second moment of the active set {1..j};
    // energy(t) = m2 + j (mean - t)^2 has no cancellation near a breakpoint
    let mut mean = vec![0.0; d + 1];
    let mut m2 = vec![0.0; d + 1];
    for j in 0..d {
        let delta = z[j] - mean[j];
        mean[j + 1] = mean[j] + delta / (j + 1) as f64;
        m2[j + 1] = m2[j] + delta * (z[j] - mean[j + 1]);
    }
    let slope_on = |j: usize, t: f64| -> f64 {
        let gap = mean[j] - t;
        let energy = m2[j].max(0.0) + j as f64 * gap * gap;
        if energy == 0.0 {
            return sqrt_k;
        }
        sqrt_k - j as f64 * gap / energy.sqrt()
    };
    let phi = |t: f64| -> f64 {
        let energy: f64 = z
            .iter()
            .map(|&zi| {
                let s = (zi - t).max(0.0);
                s * s
            })
            .sum();
        energy.sqrt() + sqrt_k * t
    };

    // Walk breakpoints from t = 0 upward. On the interval (z[j], z[j-1]) the
    // active set has size j. Find the first interval whose right end has a
    // nonnegative slope.
    let mut best = phi(0.0);
    let mut left = 0.0;
    for j in (1..=d).rev() {
        let right = z[j - 1];
        if right <= left {
            continue;
        }
        if slope_on(j, left) >= 0.0 {
            // phi nondecreasing from here on
            break;
        }
        if slope_on(j, right) <= 0.0 {
            best = best.min(phi(right));
            left = right;
            continue;
        }
        // sign change inside (left, right): bisect on the slope
        let (mut lo, mut hi) = (left, right);
        let lipschitz = sqrt_k + (j as f64).sqrt();
        while (hi - lo) * lipschitz > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope_on(j, mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.min(phi(lo)).min(phi(hi));
        break;
    }
    Ok(best)
}
