//! Proximity operators: the squared k-support norm, soft-thresholding and the
//! elastic-net penalty.

use crate::error::{Error, Result};
use crate::norms::{check_finite, check_k, sort_abs_desc};

/// Weight `beta` in `argmin_q 1/2 ||q - v||^2 + (beta/2) ||q||_sp_k^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxWeight(f64);

impl ProxWeight {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prox weight must be positive and finite, got {beta}"
            )));
        }
        Ok(ProxWeight(beta))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// The split located by the k-support prox search, in 1-based ranks of the
/// sorted magnitudes `z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxSearchResult {
    /// Coordinates `k-r..=ell` share a common shift; `0 <= r < k`.
    pub r: usize,
    /// Last nonzero rank; `k <= ell <= d`.
    pub ell: usize,
    /// `z[k-r] + ... + z[ell]`.
    pub t_rl: f64,
    /// The common shift `t_rl / (ell - k + (L+1) r + L + 1)`.
    pub shift: f64,
}

/// Locate `(r, ell)` for nonincreasing nonnegative magnitudes `z` with
/// `L = 1/beta`.
///
/// `r` is scanned ascending and `ell` ascending within each `r`; the first
/// pair meeting both bracketing conditions is returned. If rounding leaves
/// every pair a hair outside its bracket the scan is repeated with a relative
/// slack of a few ulps before giving up.
pub fn prox_ksup_search(z: &[f64], k: usize, beta: ProxWeight) -> Result<ProxSearchResult> {
    let d = z.len();
    check_k(k, d)?;
    let l = 1.0 / beta.get();
    let z_at = |rank: usize| -> f64 { z[rank - 1] };
    if z_at(k) == 0.0 {
        // fewer than k nonzeros: the norm is l2 on the support, so the prox
        // scales the head and the strict bracket z_ell > shift cannot hold
        return Ok(ProxSearchResult {
            r: 0,
            ell: k,
            t_rl: 0.0,
            shift: 0.0,
        });
    }

    let scan = |slack: f64| -> Option<ProxSearchResult> {
        let gt = |a: f64, b: f64| a > b - slack * a.abs().max(b.abs());
        let ge = |a: f64, b: f64| a >= b - slack * a.abs().max(b.abs());
        // T_{r,k} grows by z_{k-r} as r increases; T_{r,ell} by z_ell as ell
        // does. Summing terms directly avoids cancellation in prefix differences.
        let mut base = 0.0;
        for r in 0..k {
            let head = k - r - 1;
            base += z_at(head + 1);
            let mut t_rl = base;
            for ell in k..=d {
                if ell > k {
                    t_rl += z_at(ell);
                }
                let denom = (ell - k) as f64 + (l + 1.0) * r as f64 + l + 1.0;
                let shift = t_rl / denom;
                // z_{k-r-1}/(L+1) > shift >= z_{k-r}/(L+1), z_0 = +inf
                let cond1_upper = head == 0 || gt(z_at(head) / (l + 1.0), shift);
                let cond1_lower = ge(shift, z_at(head + 1) / (l + 1.0));
                // z_ell > shift >= z_{ell+1}, z_{d+1} = -inf
                let cond2_upper = gt(z_at(ell), shift);
                let cond2_lower = ell == d || ge(shift, z_at(ell + 1));
                if cond1_upper && cond1_lower && cond2_upper && cond2_lower {
                    return Some(ProxSearchResult { r, ell, t_rl, shift });
                }
            }
        }
        None
    };

    if let Some(found) = scan(0.0) {
        debug_assert_unique(z, k, l, &found);
        return Ok(found);
    }
    if let Some(found) = scan(8.0 * f64::EPSILON) {
        log::debug!("k-support prox split found only with rounding slack: {found:?}");
        return Ok(found);
    }
    Err(Error::Internal(format!(
        "no (r, ell) pair satisfies the k-support prox conditions (d = {d}, k = {k}, beta = {})",
        beta.get()
    )))
}

#[cfg(debug_assertions)]
fn debug_assert_unique(z: &[f64], k: usize, l: f64, found: &ProxSearchResult) {
    // any other valid pair must describe the same point
    let d = z.len();
    let reference = apply_split(z, k, l, found);
    let mut base: f64 = z[k - found.r..k].iter().sum();
    for r in found.r..k {
        let head = k - r - 1;
        base += z[head];
        let mut t_rl = base;
        for ell in k..=d {
            if ell > k {
                t_rl += z[ell - 1];
            }
            if (r, ell) <= (found.r, found.ell) {
                continue;
            }
            let denom = (ell - k) as f64 + (l + 1.0) * r as f64 + l + 1.0;
            let shift = t_rl / denom;
            let ok = (head == 0 || z[head - 1] / (l + 1.0) > shift)
                && shift >= z[head] / (l + 1.0)
                && z[ell - 1] > shift
                && (ell == d || shift >= z[ell]);
            if ok {
                let other = apply_split(z, k, l, &ProxSearchResult { r, ell, t_rl, shift });
                let scale = z.first().copied().unwrap_or(0.0).max(1.0);
                for (a, b) in reference.iter().zip(&other) {
                    debug_assert!(
                        (a - b).abs() <= 1e-9 * scale,
                        "two k-support prox splits disagree: {found:?} vs ({r}, {ell})"
                    );
                }
            }
        }
    }
}

#[cfg(not(debug_assertions))]
fn debug_assert_unique(_: &[f64], _: usize, _: f64, _: &ProxSearchResult) {}

/// Three-piece update in the sorted frame.
fn apply_split(z: &[f64], k: usize, l: f64, split: &ProxSearchResult) -> Vec<f64> {
    let head = k - split.r - 1;
    let scale = l / (l + 1.0);
    z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            let rank = i + 1;
            if rank <= head {
                scale * zi
            } else if rank <= split.ell {
                zi - split.shift
            } else {
                0.0
            }
        })
        .collect()
}

/// `argmin_q 1/2 ||q - v||^2 + (beta/2) ||q||_sp_k^2`.
pub fn prox_ksup_sq(v: &[f64], k: usize, beta: ProxWeight) -> Result<Vec<f64>> {
    check_finite(v)?;
    check_k(k, v.len())?;
    let mut out = vec![0.0; v.len()];
    prox_ksup_sq_into(v, k, beta, &mut out)?;
    Ok(out)
}

/// Allocation-light variant of [`prox_ksup_sq`] used inside the solver.
/// Does not re-validate `v`.
pub fn prox_ksup_sq_into(v: &[f64], k: usize, beta: ProxWeight, out: &mut [f64]) -> Result<()> {
    if v.iter().all(|&x| x == 0.0) {
        out.fill(0.0);
        return Ok(());
    }
    let sorted = sort_abs_desc(v);
    let split = prox_ksup_search(&sorted.magnitudes, k, beta)?;
    let q = apply_split(&sorted.magnitudes, k, 1.0 / beta.get(), &split);
    for ((&idx, &s), &qi) in sorted.permutation.iter().zip(&sorted.signs).zip(&q) {
        out[idx] = s * qi;
    }
    Ok(())
}

#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    x.signum() * (x.abs() - tau).max(0.0)
}

/// Soft-thresholding, the prox of `tau ||.||_1`.
pub fn prox_l1(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(v.iter().map(|&x| soft_threshold(x, tau)).collect())
}

/// Prox of `tau1 ||.||_1 + tau2 ||.||_2^2`: soft-threshold at `tau1`, then
/// scale by `1 / (1 + 2 tau2)`.
pub fn prox_elastic(v: &[f64], tau1: f64, tau2: f64) -> Result<Vec<f64>> {
    if !(tau1 >= 0.0 && tau2 >= 0.0 && tau1.is_finite() && tau2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "elastic prox weights must be nonnegative, got ({tau1}, {tau2})"
        )));
    }
    if tau1 == 0.0 && tau2 == 0.0 {
        return Err(Error::InvalidParameter(
            "elastic prox needs at least one positive weight".into(),
        ));
    }
    let scale = 1.0 / (1.0 + 2.0 * tau2);
    Ok(v.iter().map(|&x| soft_threshold(x, tau1) * scale).collect())
}
