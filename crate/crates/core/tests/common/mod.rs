//! Independent reference computations used by the integration and acceptance
//! tests. None of these call into the code path they are used to check.

#![allow(dead_code)]

use ksupport::design::Design;
use ksupport::norms::ksup_norm;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Random vector with a mix of scales, exact zeros and ties, which are the
/// inputs most likely to trip the sorted-split searches.
pub fn awkward_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut w = normal_vec(rng, d);
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    for x in w.iter_mut() {
        *x *= scale;
    }
    match rng.random_range(0..4) {
        0 => {
            for x in w.iter_mut() {
                if rng.random_bool(0.3) {
                    *x = 0.0;
                }
            }
        }
        1 if d > 1 => {
            let v = w[0].abs();
            for x in w.iter_mut() {
                if rng.random_bool(0.4) {
                    *x = if rng.random_bool(0.5) { v } else { -v };
                }
            }
        }
        _ => {}
    }
    w
}

fn sorted_desc_abs(w: &[f64]) -> Vec<f64> {
    let mut z: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    z.sort_by(|a, b| b.partial_cmp(a).unwrap());
    z
}

/// Enumerate all points of a box lattice `center_i + step * j_i`, `|j_i| <= half`,
/// restricted by `keep`, calling `visit` on each.
fn lattice_walk(
    center: &[f64],
    step: f64,
    half: i64,
    keep: &dyn Fn(&[f64]) -> bool,
    visit: &mut dyn FnMut(&[f64]),
) {
    let d = center.len();
    let mut idx = vec![-half; d];
    let mut p = vec![0.0; d];
    loop {
        for i in 0..d {
            p[i] = center[i] + step * idx[i] as f64;
        }
        if keep(&p) {
            visit(&p);
        }
        let mut i = 0;
        loop {
            if i == d {
                return;
            }
            idx[i] += 1;
            if idx[i] <= half {
                break;
            }
            idx[i] = -half;
            i += 1;
        }
    }
}

/// k-support norm by maximizing `sum a_i z_i - 1/2 sum_{i<=k} a_i^2` over the
/// monotone cone `a_1 >= ... >= a_d >= 0` (z = sorted |w|) with a
/// coarse-to-fine lattice. Only for `d <= 4`.
pub fn ksup_norm_oracle(w: &[f64], k: usize) -> Result<f64, String> {
    let d = w.len();
    if d > 4 {
        return Err(format!("oracle limited to d <= 4, got {d}"));
    }
    if k == 0 || k > d {
        return Err("k out of range".into());
    }
    let z = sorted_desc_abs(w);
    let bound: f64 = z.iter().sum();
    if bound == 0.0 {
        return Ok(0.0);
    }
    let objective = |a: &[f64]| -> f64 {
        let lin: f64 = a.iter().zip(&z).map(|(x, y)| x * y).sum();
        let quad: f64 = a[..k].iter().map(|x| x * x).sum();
        lin - 0.5 * quad
    };
    let in_cone = |a: &[f64]| -> bool {
        a.iter().all(|&x| x >= 0.0 && x <= bound) && a.windows(2).all(|p| p[0] >= p[1])
    };

    let mut step = bound / 40.0;
    let mut center = vec![bound / 2.0; d];
    let mut half = 20i64;
    let mut best = (f64::NEG_INFINITY, vec![0.0; d]);
    while step > 1e-7 * bound {
        let mut local = best.clone();
        lattice_walk(&center, step, half, &in_cone, &mut |a| {
            let f = objective(a);
            if f > local.0 {
                local = (f, a.to_vec());
            }
        });
        best = local;
        center = best.1.clone();
        step /= 5.0;
        half = 10;
    }
    Ok((2.0 * best.0).max(0.0).sqrt())
}

/// `max` over all `k`-subsets `I` of `(sum_{i in I} u_i^2)^(1/2)`, summing each
/// subset in decreasing magnitude order.
pub fn dual_norm_brute_force(u: &[f64], k: usize) -> f64 {
    let d = u.len();
    assert!(d <= 20);
    let mut best = 0.0f64;
    for mask in 0u32..(1 << d) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut sq: Vec<f64> = (0..d).filter(|i| mask >> i & 1 == 1).map(|i| u[i] * u[i]).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        let s: f64 = sq.iter().sum();
        best = best.max(s.sqrt());
    }
    best
}

pub fn prox_objective(q: &[f64], v: &[f64], k: usize, beta: f64) -> f64 {
    let dist: f64 = q.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = ksup_norm(q, k).unwrap().value;
    0.5 * dist + 0.5 * beta * n * n
}

/// Minimizer of the k-support prox objective on a coarse-to-fine lattice over
/// the box spanned by `0` and `v`. Only for `d <= 4`.
pub fn prox_lattice_oracle(v: &[f64], k: usize, beta: f64) -> Vec<f64> {
    let d = v.len();
    assert!(d <= 4);
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return vec![0.0; d];
    }
    let lo: Vec<f64> = v.iter().map(|&x| x.min(0.0)).collect();
    let hi: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    let in_box = |q: &[f64]| q.iter().zip(lo.iter().zip(&hi)).all(|(x, (l, h))| x >= l && x <= h);

    let mut step = scale / 16.0;
    let mut center: Vec<f64> = v.iter().map(|x| x / 2.0).collect();
    let mut half = 9i64;
    let mut best = (f64::INFINITY, center.clone());
    while step > 1e-7 * scale {
        let mut local = best.clone();
        lattice_walk(&center, step, half, &in_box, &mut |q| {
            let f = prox_objective(q, v, k, beta);
            if f < local.0 {
                local = (f, q.to_vec());
            }
        });
        best = local;
        center = best.1.clone();
        step /= 4.0;
        half = 8;
    }
    best.1
}

pub fn half_sq_loss(x: &Array2<f64>, y: &[f64], w: &[f64]) -> f64 {
    x.rows()
        .into_iter()
        .zip(y)
        .map(|(row, yi)| {
            let p: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            0.5 * (p - yi) * (p - yi)
        })
        .sum()
}

/// Central finite-difference gradient of `1/2 ||Xw - y||^2`.
pub fn fd_gradient(x: &Array2<f64>, y: &[f64], w: &[f64], h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut p = w.to_vec();
            let mut m = w.to_vec();
            p[j] += h;
            m[j] -= h;
            (half_sq_loss(x, y, &p) - half_sq_loss(x, y, &m)) / (2.0 * h)
        })
        .collect()
}

/// Largest eigenvalue of `X^T X` by a dense symmetric eigensolve.
pub fn max_eig_gram(x: &Array2<f64>) -> f64 {
    let (n, d) = x.dim();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| x[[i, j]]);
    let g = m.transpose() * &m;
    g.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eig(v: &Array2<f64>) -> f64 {
    let d = v.nrows();
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| v[[i, j]]);
    m.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Least-squares solution from the normal equations.
pub fn least_squares(x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (n, d) = x.dim();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| x[[i, j]]);
    let yv = nalgebra::DVector::from_column_slice(y);
    let g = m.transpose() * &m;
    let b = m.transpose() * yv;
    let sol = g.cholesky().expect("full rank").solve(&b);
    sol.iter().copied().collect()
}

pub fn random_dense(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

pub fn dense(x: &Array2<f64>) -> Design {
    Design::Dense(x.clone())
}
