//! Accelerated proximal gradient for squared loss under k-support, Lasso and
//! elastic-net penalties.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::design::Design;
use crate::error::{Error, Result};
use crate::norms::{check_k, ksup_norm, l1_norm, CoefficientVector};
use crate::prox::{prox_ksup_sq_into, soft_threshold, ProxWeight};

/// Regularizer added to `1/2 ||Xw - y||^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Penalty {
    /// `(lambda/2) ||w||_sp_k^2`
    #[serde(rename = "ksupport")]
    KSupport { k: usize, lambda: f64 },
    /// `lambda ||w||_1`
    Lasso { lambda: f64 },
    /// `lambda1 ||w||_1 + lambda2 ||w||_2^2`
    Elastic { lambda1: f64, lambda2: f64 },
}

impl Penalty {
    pub fn validate(&self, d: usize) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        match *self {
            Penalty::KSupport { k, lambda } => {
                check_k(k, d)?;
                nonneg("lambda", lambda)
            }
            Penalty::Lasso { lambda } => nonneg("lambda", lambda),
            Penalty::Elastic { lambda1, lambda2 } => {
                nonneg("lambda1", lambda1)?;
                nonneg("lambda2", lambda2)
            }
        }
    }

    /// Penalty value at `w`.
    pub fn value(&self, w: &[f64]) -> Result<f64> {
        Ok(match *self {
            Penalty::KSupport { k, lambda } => {
                if lambda == 0.0 {
                    0.0
                } else {
                    let n = ksup_norm(w, k)?.value;
                    0.5 * lambda * n * n
                }
            }
            Penalty::Lasso { lambda } => lambda * l1_norm(w),
            Penalty::Elastic { lambda1, lambda2 } => {
                lambda1 * l1_norm(w) + lambda2 * w.iter().map(|x| x * x).sum::<f64>()
            }
        })
    }

    /// Prox of `penalty / step_l`, written into `out`.
    fn prox_into(&self, v: &[f64], step_l: f64, out: &mut [f64]) -> Result<()> {
        match *self {
            Penalty::KSupport { k, lambda } => {
                if lambda == 0.0 {
                    out.copy_from_slice(v);
                    Ok(())
                } else {
                    prox_ksup_sq_into(v, k, ProxWeight::new(lambda / step_l)?, out)
                }
            }
            Penalty::Lasso { lambda } => {
                let tau = lambda / step_l;
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = soft_threshold(x, tau);
                }
                Ok(())
            }
            Penalty::Elastic { lambda1, lambda2 } => {
                let tau1 = lambda1 / step_l;
                let scale = 1.0 / (1.0 + 2.0 * lambda2 / step_l);
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = soft_threshold(x, tau1) * scale;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSize {
    /// Power-iteration estimate of the largest eigenvalue of `X^T X`.
    Auto,
    Fixed(f64),
}

/// Stopping rule and step choice, shared by every fit in a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the relative objective change stays below this for
    /// [`CONVERGENCE_WINDOW`] consecutive iterations. Zero disables the test.
    pub rel_tol: f64,
    pub step: StepSize,
}

pub const CONVERGENCE_WINDOW: usize = 5;

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 50_000,
            rel_tol: 1e-8,
            step: StepSize::Auto,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("rel_tol must be >= 0, got {}", self.rel_tol)));
        }
        if let StepSize::Fixed(l) = self.step {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidParameter(format!("step constant must be positive, got {l}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub penalty: Penalty,
    #[serde(flatten)]
    pub options: SolverOptions,
}

impl FitConfig {
    pub fn new(penalty: Penalty) -> Self {
        FitConfig {
            penalty,
            options: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Best iterate seen, by objective value.
    pub w: CoefficientVector,
    /// `objective_trace[t]` is the objective after `t` iterations; entry 0 is
    /// the starting point.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub best_iteration: usize,
    pub converged: bool,
    pub lipschitz: f64,
    pub elapsed: Duration,
}

impl FitResult {
    pub fn best_objective(&self) -> f64 {
        self.objective_trace[self.best_iteration]
    }
}

const POWER_MIN_ITERS: usize = 50;
const POWER_MAX_ITERS: usize = 1000;
const POWER_REL_TOL: f64 = 1e-8;
const LIPSCHITZ_SAFETY: f64 = 1.01;

/// Upper estimate of the largest eigenvalue of `X^T X` by power iteration,
/// inflated by a 1% safety factor.
pub fn lipschitz_estimate(x: &Design) -> Result<f64> {
    if x.is_zero() {
        return Err(Error::ZeroMatrix);
    }
    let d = x.n_cols();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let mut xv = vec![0.0; x.n_rows()];
    let mut next = vec![0.0; d];
    let mut estimate = 0.0f64;
    normalize(&mut v);
    for it in 0..POWER_MAX_ITERS {
        x.matvec_into(&v, &mut xv);
        // Rayleigh quotient of X^T X at unit v
        let rq: f64 = xv.iter().map(|a| a * a).sum();
        x.t_matvec_into(&xv, &mut next);
        let done = it + 1 >= POWER_MIN_ITERS && (rq - estimate).abs() <= POWER_REL_TOL * rq;
        estimate = estimate.max(rq);
        if normalize(&mut next) == 0.0 {
            break;
        }
        std::mem::swap(&mut v, &mut next);
        if done {
            break;
        }
    }
    if !(estimate > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    Ok(LIPSCHITZ_SAFETY * estimate)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|a| *a /= n);
    }
    n
}

fn check_shapes(x: &Design, y: &[f64], w: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if w.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols(),
            got: w.len(),
        });
    }
    Ok(())
}

/// `X^T (X w - y)`.
pub fn squared_loss_grad(x: &Design, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_shapes(x, y, w)?;
    let mut r = x.matvec(w);
    r.iter_mut().zip(y).for_each(|(ri, yi)| *ri -= yi);
    Ok(x.t_matvec(&r))
}

pub fn squared_loss(x: &Design, y: &[f64], w: &[f64]) -> Result<f64> {
    check_shapes(x, y, w)?;
    let r = x.matvec(w);
    Ok(0.5 * r.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// `1/2 ||Xw - y||^2 + penalty(w)`.
pub fn objective(x: &Design, y: &[f64], w: &[f64], penalty: &Penalty) -> Result<f64> {
    Ok(squared_loss(x, y, w)? + penalty.value(w)?)
}

/// Accelerated proximal gradient with the momentum sequence
/// `theta_{t+1} = (1 + sqrt(1 + 4 theta_t^2)) / 2`, `theta_1 = 1`.
///
/// `grad(a, out)` writes the smooth gradient at `a`; `prox(v, out)` writes the
/// proximal step of the (already `1/L`-scaled) regularizer at `v`;
/// `objective(w)` evaluates the full composite objective. Returns the best
/// iterate by objective.
pub fn fista<G, P, O>(
    mut grad: G,
    mut prox: P,
    mut objective: O,
    w1: &[f64],
    lipschitz: f64,
    options: &SolverOptions,
) -> Result<FitResult>
where
    G: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]) -> Result<()>,
    O: FnMut(&[f64]) -> Result<f64>,
{
    options.validate()?;
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::InvalidParameter(format!("step constant must be positive, got {lipschitz}")));
    }
    let started = Instant::now();
    let d = w1.len();
    let mut w_prev = w1.to_vec();
    let mut w_next = vec![0.0; d];
    let mut alpha = w1.to_vec();
    let mut g = vec![0.0; d];
    let mut step_point = vec![0.0; d];
    let mut theta = 1.0f64;

    let f1 = objective(w1)?;
    if !f1.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut trace = Vec::with_capacity(options.max_iters.min(100_000) + 1);
    trace.push(f1);
    let mut best = (f1, 0usize, w1.to_vec());
    let mut streak = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=options.max_iters {
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        grad(&alpha, &mut g);
        for ((s, a), gi) in step_point.iter_mut().zip(&alpha).zip(&g) {
            *s = a - gi / lipschitz;
        }
        prox(&step_point, &mut w_next)?;
        let f = objective(&w_next)?;
        if !f.is_finite() {
            return Err(Error::Divergence { iteration: t });
        }
        let f_prev = *trace.last().unwrap();
        trace.push(f);
        iterations = t;
        if f < best.0 {
            best.0 = f;
            best.1 = t;
            best.2.copy_from_slice(&w_next);
        }

        let momentum = (theta - 1.0) / theta_next;
        for ((a, wn), wp) in alpha.iter_mut().zip(&w_next).zip(&w_prev) {
            *a = wn + momentum * (wn - wp);
        }
        std::mem::swap(&mut w_prev, &mut w_next);
        theta = theta_next;

        if options.rel_tol > 0.0 {
            let scale = f_prev.abs().max(f64::MIN_POSITIVE);
            if (f - f_prev).abs() / scale < options.rel_tol {
                streak += 1;
                if streak >= CONVERGENCE_WINDOW {
                    converged = true;
                    break;
                }
            } else {
                streak = 0;
            }
        }
    }

    Ok(FitResult {
        w: CoefficientVector::new(best.2)?,
        objective_trace: trace,
        iterations,
        best_iteration: best.1,
        converged,
        lipschitz,
        elapsed: started.elapsed(),
    })
}

/// Squared loss with cached Gram matrix when the feature count is modest.
struct LeastSquares<'a> {
    x: &'a Design,
    y: &'a [f64],
    gram: Option<(Array2<f64>, Vec<f64>, f64)>,
}

const GRAM_MAX_FEATURES: usize = 2048;

impl<'a> LeastSquares<'a> {
    fn new(x: &'a Design, y: &'a [f64]) -> Self {
        let d = x.n_cols();
        let gram = (d <= x.n_rows() && d <= GRAM_MAX_FEATURES).then(|| {
            let g = x.gram();
            let b = x.t_matvec(y);
            let c = 0.5 * y.iter().map(|v| v * v).sum::<f64>();
            (g, b, c)
        });
        LeastSquares { x, y, gram }
    }

    fn grad_into(&self, w: &[f64], out: &mut [f64], resid: &mut [f64]) {
        match &self.gram {
            Some((g, b, _)) => {
                for ((o, row), bi) in out.iter_mut().zip(g.rows()).zip(b) {
                    *o = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() - bi;
                }
            }
            None => {
                self.x.matvec_into(w, resid);
                resid.iter_mut().zip(self.y).for_each(|(r, y)| *r -= y);
                self.x.t_matvec_into(resid, out);
            }
        }
    }

    fn value(&self, w: &[f64], scratch: &mut [f64], resid: &mut [f64]) -> f64 {
        match &self.gram {
            Some((g, b, c)) => {
                for (s, row) in scratch.iter_mut().zip(g.rows()) {
                    *s = row.iter().zip(w).map(|(a, v)| a * v).sum();
                }
                let quad: f64 = scratch.iter().zip(w).map(|(a, v)| a * v).sum();
                let lin: f64 = b.iter().zip(w).map(|(a, v)| a * v).sum();
                (0.5 * quad - lin + c).max(0.0)
            }
            None => {
                self.x.matvec_into(w, resid);
                0.5 * resid.iter().zip(self.y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            }
        }
    }
}

/// Fit `argmin 1/2 ||Xw - y||^2 + penalty(w)` from `w = 0`.
pub fn fit(dataset: &Dataset, cfg: &FitConfig) -> Result<FitResult> {
    let d = dataset.n_features();
    cfg.penalty.validate(d)?;
    cfg.options.validate()?;
    if dataset.n_samples() == 0 {
        return Err(Error::InvalidParameter("cannot fit on an empty dataset".into()));
    }
    let lipschitz = match cfg.options.step {
        StepSize::Auto => lipschitz_estimate(&dataset.x)?,
        StepSize::Fixed(l) => l,
    };
    fit_with_lipschitz(dataset, &cfg.penalty, lipschitz, &cfg.options)
}

/// As [`fit`] with a precomputed step constant, so that a grid of fits on one
/// training set pays for the power iteration once.
pub fn fit_with_lipschitz(
    dataset: &Dataset,
    penalty: &Penalty,
    lipschitz: f64,
    options: &SolverOptions,
) -> Result<FitResult> {
    let d = dataset.n_features();
    penalty.validate(d)?;
    let loss = LeastSquares::new(&dataset.x, &dataset.y);
    let n = dataset.n_samples();
    let mut resid_g = vec![0.0; n];
    let mut resid_f = vec![0.0; n];
    let mut scratch = vec![0.0; d];
    let w1 = vec![0.0; d];
    fista(
        |a, out| loss.grad_into(a, out, &mut resid_g),
        |v, out| penalty.prox_into(v, lipschitz, out),
        |w| Ok(loss.value(w, &mut scratch, &mut resid_f) + penalty.value(w)?),
        &w1,
        lipschitz,
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;
    use crate::prox::prox_l1;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn lipschitz_identity_and_diag() {
        let x = Design::Dense(Array2::eye(6));
        assert_relative_eq!(lipschitz_estimate(&x).unwrap(), 1.01, max_relative = 1e-9);
        let x = Design::Dense(array![[3.0, 0.0], [0.0, 1.0]]);
        assert_relative_eq!(lipschitz_estimate(&x).unwrap(), 9.09, max_relative = 1e-7);
        assert!(matches!(
            lipschitz_estimate(&Design::Dense(Array2::zeros((3, 2)))),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn grad_identity() {
        let x = Design::Dense(Array2::eye(3));
        let w = [1.0, -2.0, 0.5];
        assert_eq!(squared_loss_grad(&x, &[0.0; 3], &w).unwrap(), w.to_vec());
        assert!(squared_loss_grad(&x, &[0.0; 2], &w).is_err());
        assert!(squared_loss_grad(&x, &[0.0; 3], &w[..2]).is_err());
    }

    #[test]
    fn objective_examples() {
        let x = Design::Dense(array![[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]]);
        let y = [1.0, 2.0, -1.0];
        let pen = Penalty::KSupport { k: 1, lambda: 3.0 };
        assert_relative_eq!(objective(&x, &y, &[0.0, 0.0], &pen).unwrap(), 3.0);
        let w = [0.3, -0.7];
        let ls = squared_loss(&x, &y, &w).unwrap();
        assert_eq!(objective(&x, &y, &w, &Penalty::Lasso { lambda: 0.0 }).unwrap(), ls);
        let ridge = objective(&x, &y, &w, &Penalty::Elastic { lambda1: 0.0, lambda2: 1.5 }).unwrap();
        let ksup_full = objective(&x, &y, &w, &Penalty::KSupport { k: 2, lambda: 3.0 }).unwrap();
        assert_relative_eq!(ridge, ksup_full, max_relative = 1e-14);
    }

    #[test]
    fn fista_fixed_point() {
        let w1 = [1.0, -2.0, 3.0];
        let res = fista(
            |_, out: &mut [f64]| out.fill(0.0),
            |v, out: &mut [f64]| {
                out.copy_from_slice(v);
                Ok(())
            },
            |_| Ok(1.0),
            &w1,
            1.0,
            &SolverOptions {
                max_iters: 25,
                rel_tol: 0.0,
                step: StepSize::Auto,
            },
        )
        .unwrap();
        assert_eq!(res.w.as_slice(), &w1);
        assert_eq!(res.iterations, 25);
    }

    #[test]
    fn fista_scalar_lasso() {
        // 1/2 (w - 2)^2 + tau |w| has minimizer 2 - tau for tau < 2
        let tau = 0.3;
        let l = 1.0;
        let res = fista(
            |a, out: &mut [f64]| out[0] = a[0] - 2.0,
            |v, out: &mut [f64]| {
                out.copy_from_slice(&prox_l1(v, tau / l)?);
                Ok(())
            },
            |w| Ok(0.5 * (w[0] - 2.0).powi(2) + tau * w[0].abs()),
            &[0.0],
            l,
            &SolverOptions {
                max_iters: 500,
                rel_tol: 0.0,
                step: StepSize::Auto,
            },
        )
        .unwrap();
        assert!((res.w[0] - (2.0 - tau)).abs() < 1e-8, "{}", res.w[0]);
    }

    #[test]
    fn fista_reports_divergence() {
        let err = fista(
            |a, out: &mut [f64]| out[0] = -a[0] - 1.0,
            |v, out: &mut [f64]| {
                out.copy_from_slice(v);
                Ok(())
            },
            |w| Ok(if w[0].abs() > 1e3 { f64::NAN } else { -w[0] * w[0] }),
            &[0.0],
            0.1,
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { iteration } if iteration > 0));
    }

    #[test]
    fn fit_large_lambda_is_zero() {
        let x = array![[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [2.0, 0.1, 1.0], [1.0, 1.0, 1.0]];
        let ds = Dataset::dense(x, vec![1.0, -2.0, 0.5, 3.0], TaskKind::Regression).unwrap();
        for k in 1..=3 {
            let res = fit(&ds, &FitConfig::new(Penalty::KSupport { k, lambda: 1e10 })).unwrap();
            assert!(res.w.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn fit_validates_config() {
        let ds = Dataset::dense(array![[1.0, 2.0]], vec![1.0], TaskKind::Regression).unwrap();
        assert!(fit(&ds, &FitConfig::new(Penalty::KSupport { k: 3, lambda: 1.0 })).is_err());
        assert!(fit(&ds, &FitConfig::new(Penalty::Lasso { lambda: -1.0 })).is_err());
        let mut cfg = FitConfig::new(Penalty::Lasso { lambda: 1.0 });
        cfg.options.max_iters = 0;
        assert!(fit(&ds, &cfg).is_err());
    }
}
