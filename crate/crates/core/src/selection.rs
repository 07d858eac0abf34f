//! Hyperparameter grids, validation-based selection, evaluation metrics and
//! the replicated synthetic experiment.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    derive_seed, population_covariance, synthetic_generate, Dataset, PopulationCovariance, SyntheticSpec,
    TaskKind,
};
use crate::error::{Error, Result};
use crate::exec::{map_ordered, Execution};
use crate::fmt::sig12;
use crate::solver::{fit_with_lipschitz, lipschitz_estimate, Penalty, SolverOptions, StepSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "ksupport")]
    KSupport,
    Lasso,
    Elastic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::KSupport => "ksupport",
            Method::Lasso => "lasso",
            Method::Elastic => "elastic",
        }
    }

    fn table_label(self) -> &'static str {
        match self {
            Method::KSupport => "k-support",
            Method::Lasso => "Lasso",
            Method::Elastic => "Elastic net",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ksupport" => Ok(Method::KSupport),
            "lasso" => Ok(Method::Lasso),
            "elastic" => Ok(Method::Elastic),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// Grid of penalties for one method. Regularization values are `10^e` for
/// each exponent `e`; the elastic net uses the cross product of the exponent
/// list with itself for `(lambda1, lambda2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub method: Method,
    pub k_values: Vec<usize>,
    pub lambda_exponents: Vec<i32>,
}

impl GridSpec {
    /// `k = 1..=d` and exponents `-15..=5`.
    pub fn default_for(method: Method, d: usize) -> Self {
        GridSpec {
            method,
            k_values: (1..=d).collect(),
            lambda_exponents: (-15..=5).collect(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.lambda_exponents.is_empty() {
            return Err(Error::InvalidParameter("empty lambda grid".into()));
        }
        if self.method == Method::KSupport {
            if self.k_values.is_empty() {
                return Err(Error::InvalidParameter("empty k grid".into()));
            }
            if let Some(&k) = self.k_values.iter().find(|&&k| k == 0 || k > d) {
                return Err(Error::SparsityOutOfRange { k: k as f64, d });
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Penalty> {
        let lambdas: Vec<f64> = self.lambda_exponents.iter().map(|&e| 10f64.powi(e)).collect();
        match self.method {
            Method::KSupport => self
                .k_values
                .iter()
                .flat_map(|&k| lambdas.iter().map(move |&lambda| Penalty::KSupport { k, lambda }))
                .collect(),
            Method::Lasso => lambdas.iter().map(|&lambda| Penalty::Lasso { lambda }).collect(),
            Method::Elastic => lambdas
                .iter()
                .flat_map(|&lambda1| {
                    lambdas
                        .iter()
                        .map(move |&lambda2| Penalty::Elastic { lambda1, lambda2 })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFit {
    pub w: Vec<f64>,
    pub val_mse: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug)]
pub struct CellResult {
    pub penalty: Penalty,
    pub outcome: Result<CellFit>,
}

#[derive(Debug)]
pub struct GridOutcome {
    pub best_index: usize,
    pub cells: Vec<CellResult>,
}

impl GridOutcome {
    pub fn best(&self) -> (&Penalty, &CellFit) {
        let cell = &self.cells[self.best_index];
        (&cell.penalty, cell.outcome.as_ref().expect("best cell succeeded"))
    }
}

/// (primary lambda, k, lambda2) used to break exact validation ties.
fn tie_key(p: &Penalty) -> (f64, usize, f64) {
    match *p {
        Penalty::KSupport { k, lambda } => (lambda, k, 0.0),
        Penalty::Lasso { lambda } => (lambda, 0, 0.0),
        Penalty::Elastic { lambda1, lambda2 } => (lambda1, 0, lambda2),
    }
}

/// `Less` when `a` is preferred: lower validation error, then larger lambda,
/// then smaller k, then smaller lambda2.
fn prefer(a: (&Penalty, f64), b: (&Penalty, f64)) -> Ordering {
    let (ka, kb) = (tie_key(a.0), tie_key(b.0));
    a.1.total_cmp(&b.1)
        .then(kb.0.total_cmp(&ka.0))
        .then(ka.1.cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
}

/// Mean squared residual of `w` on `dataset`.
pub fn mse(w: &[f64], dataset: &Dataset) -> Result<f64> {
    if w.len() != dataset.n_features() {
        return Err(Error::DimensionMismatch {
            expected: dataset.n_features(),
            got: w.len(),
        });
    }
    if dataset.n_samples() == 0 {
        return Err(Error::InvalidParameter("mean squared error of an empty dataset".into()));
    }
    let pred = dataset.x.matvec(w);
    let sse: f64 = pred.iter().zip(&dataset.y).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sse / dataset.n_samples() as f64)
}

/// Fit every cell on `train`, score on `val`, keep the best.
///
/// A cell whose fit fails is recorded and skipped; the search only fails if
/// every cell does.
pub fn grid_search(
    train: &Dataset,
    val: &Dataset,
    grid: &GridSpec,
    options: &SolverOptions,
    exec: Execution,
) -> Result<GridOutcome> {
    let d = train.n_features();
    grid.validate(d)?;
    options.validate()?;
    if val.n_features() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: val.n_features(),
        });
    }
    let lipschitz = match options.step {
        StepSize::Auto => lipschitz_estimate(&train.x)?,
        StepSize::Fixed(l) => l,
    };
    let penalties = grid.cells();
    let outcomes = map_ordered(exec, &penalties, |p| -> Result<CellFit> {
        let res = fit_with_lipschitz(train, p, lipschitz, options)?;
        let val_mse = mse(&res.w, val)?;
        Ok(CellFit {
            w: res.w.into_inner(),
            val_mse,
            iterations: res.iterations,
            converged: res.converged,
        })
    });
    let cells: Vec<CellResult> = penalties
        .into_iter()
        .zip(outcomes)
        .map(|(penalty, outcome)| CellResult { penalty, outcome })
        .collect();

    let best_index = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.outcome.as_ref().ok().map(|f| (i, &c.penalty, f.val_mse)))
        .min_by(|a, b| prefer((a.1, a.2), (b.1, b.2)))
        .map(|(i, _, _)| i);
    match best_index {
        Some(best_index) => Ok(GridOutcome { best_index, cells }),
        None => {
            let first = cells.into_iter().find_map(|c| c.outcome.err());
            Err(Error::GridExhausted(Box::new(
                first.unwrap_or_else(|| Error::InvalidParameter("empty grid".into())),
            )))
        }
    }
}

/// `(w_hat - w_star)^T V (w_hat - w_star)`.
pub fn oracle_mse(w_hat: &[f64], w_star: &[f64], v: &PopulationCovariance) -> Result<f64> {
    let d = v.dim();
    for len in [w_hat.len(), w_star.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    let diff: Vec<f64> = w_hat.iter().zip(w_star).map(|(a, b)| a - b).collect();
    let q: f64 = v
        .0
        .rows()
        .into_iter()
        .zip(&diff)
        .map(|(row, di)| di * row.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    Ok(q.max(0.0))
}

/// Fraction of rows with `sign(<w, x>) == y`, where `sign(0) = +1`.
pub fn accuracy(w: &[f64], test: &Dataset) -> Result<f64> {
    if test.kind != TaskKind::Binary {
        return Err(Error::InvalidParameter("accuracy needs a binary dataset".into()));
    }
    if w.len() != test.n_features() {
        return Err(Error::DimensionMismatch {
            expected: test.n_features(),
            got: w.len(),
        });
    }
    if test.n_samples() == 0 {
        return Err(Error::InvalidParameter("accuracy of an empty dataset".into()));
    }
    let pred = test.x.matvec(w);
    let hits = pred
        .iter()
        .zip(&test.y)
        .filter(|(&p, &y)| (if p >= 0.0 { 1.0 } else { -1.0 }) == y)
        .count();
    Ok(hits as f64 / test.n_samples() as f64)
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Sample standard deviation (`n - 1` denominator); zero for one value.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Bootstrap standard error of the median from seeded resamples.
pub fn bootstrap_se_median(values: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = values.len();
    if n < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n];
    let medians: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[rng.random_range(0..n)];
            }
            median(&buf)
        })
        .collect();
    std_dev(&medians)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub median: f64,
    pub se_bootstrap: f64,
    pub sd: f64,
}

impl SummaryStats {
    pub fn of(values: &[f64], seed: u64) -> Self {
        SummaryStats {
            median: median(values),
            se_bootstrap: bootstrap_se_median(values, BOOTSTRAP_RESAMPLES, seed),
            sd: std_dev(values),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub selected: Vec<Penalty>,
    pub oracle_mse: Vec<f64>,
    pub test_mse: Vec<f64>,
    /// Present for binary tasks only.
    pub accuracy: Option<Vec<f64>>,
    pub oracle_mse_summary: SummaryStats,
    pub test_mse_summary: SummaryStats,
    pub accuracy_summary: Option<SummaryStats>,
    /// `|w_hat|` per replication, one row each.
    pub coefficients: Vec<Vec<f64>>,
    pub bootstrap_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec: SyntheticSpec,
    pub n_reps: usize,
    pub master_seed: u64,
    pub rep_seeds: Vec<u64>,
    pub solver: SolverOptions,
    pub grids: Vec<GridSpec>,
    pub methods: Vec<MethodReport>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

struct RepOutcome {
    selected: Penalty,
    oracle_mse: f64,
    test_mse: f64,
    accuracy: Option<f64>,
    abs_w: Vec<f64>,
}

/// Run the replicated synthetic benchmark.
///
/// Replication `r` draws its data with seed `derive_seed(master_seed, r)`,
/// selects each method's hyperparameters on the validation split and scores
/// the chosen fit against the true coefficients under the analytic
/// covariance. The result does not depend on `exec`.
pub fn run_synthetic_experiment(
    spec: &SyntheticSpec,
    grids: &[GridSpec],
    n_reps: usize,
    master_seed: u64,
    options: &SolverOptions,
    exec: Execution,
) -> Result<ExperimentReport> {
    spec.validate()?;
    if n_reps == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    if grids.is_empty() {
        return Err(Error::InvalidParameter("no method grids given".into()));
    }
    for g in grids {
        g.validate(spec.d)?;
    }
    let cov = population_covariance(spec)?;
    let rep_seeds: Vec<u64> = (0..n_reps as u64).map(|r| derive_seed(master_seed, r)).collect();
    let indexed: Vec<(usize, u64)> = rep_seeds.iter().copied().enumerate().collect();

    let per_rep = map_ordered(exec, &indexed, |&(rep, seed)| -> Result<Vec<RepOutcome>> {
        let wrap = |e: Error| Error::Replication {
            rep,
            seed,
            source: Box::new(e),
        };
        let rep_spec = SyntheticSpec { seed, ..spec.clone() };
        let data = synthetic_generate(&rep_spec).map_err(wrap)?;
        grids
            .iter()
            .map(|grid| {
                let outcome = grid_search(&data.train, &data.val, grid, options, exec).map_err(wrap)?;
                let (penalty, fit) = outcome.best();
                let accuracy = match data.test.kind {
                    TaskKind::Binary => Some(accuracy(&fit.w, &data.test).map_err(wrap)?),
                    TaskKind::Regression => None,
                };
                Ok(RepOutcome {
                    selected: *penalty,
                    oracle_mse: oracle_mse(&fit.w, &data.w_star, &cov).map_err(wrap)?,
                    test_mse: mse(&fit.w, &data.test).map_err(wrap)?,
                    accuracy,
                    abs_w: fit.w.iter().map(|v| v.abs()).collect(),
                })
            })
            .collect()
    });
    let per_rep: Vec<Vec<RepOutcome>> = per_rep.into_iter().collect::<Result<_>>()?;

    let methods = grids
        .iter()
        .enumerate()
        .map(|(m, grid)| {
            let rows: Vec<&RepOutcome> = per_rep.iter().map(|r| &r[m]).collect();
            let oracle: Vec<f64> = rows.iter().map(|r| r.oracle_mse).collect();
            let test: Vec<f64> = rows.iter().map(|r| r.test_mse).collect();
            let acc: Option<Vec<f64>> = rows.iter().map(|r| r.accuracy).collect();
            let bootstrap_seed = derive_seed(master_seed ^ 0xB00F_57A9, m as u64);
            MethodReport {
                method: grid.method,
                selected: rows.iter().map(|r| r.selected).collect(),
                oracle_mse_summary: SummaryStats::of(&oracle, bootstrap_seed),
                test_mse_summary: SummaryStats::of(&test, bootstrap_seed),
                accuracy_summary: acc.as_deref().map(|a| SummaryStats::of(a, bootstrap_seed)),
                oracle_mse: oracle,
                test_mse: test,
                accuracy: acc,
                coefficients: rows.iter().map(|r| r.abs_w.clone()).collect(),
                bootstrap_seed,
            }
        })
        .collect();

    Ok(ExperimentReport {
        spec: spec.clone(),
        n_reps,
        master_seed,
        rep_seeds,
        solver: *options,
        grids: grids.to_vec(),
        methods,
        notes: vec![
            format!(
                "within-group noise sd = {} is not fixed by the reference protocol; it is the main reproduction uncertainty",
                spec.within_group_noise_sd
            ),
            "features beyond the correlated groups are i.i.d. standard normal".into(),
            "SE is the bootstrap standard error of the median (1000 seeded resamples); sd is the sample standard deviation".into(),
        ],
    })
}

fn describe_penalty(p: &Penalty) -> String {
    match *p {
        Penalty::KSupport { k, lambda } => format!("k={k};lambda={}", sig12(lambda)),
        Penalty::Lasso { lambda } => format!("lambda={}", sig12(lambda)),
        Penalty::Elastic { lambda1, lambda2 } => {
            format!("lambda1={};lambda2={}", sig12(lambda1), sig12(lambda2))
        }
    }
}

/// Plain-text report: `key = value` header, a summary table in the layout
/// method / MSE (SE), then one line per replication.
pub fn render_report(report: &ExperimentReport) -> String {
    let spec = &report.spec;
    let mut s = String::new();
    let _ = writeln!(s, "# k-support synthetic replication report");
    for (k, v) in [
        ("reps", report.n_reps.to_string()),
        ("master_seed", report.master_seed.to_string()),
        ("d", spec.d.to_string()),
        ("sparse_support", spec.sparse_support.to_string()),
        ("signal", sig12(spec.signal)),
        ("group_size", spec.group_size.to_string()),
        ("n_groups", spec.n_groups.to_string()),
        ("within_group_noise_sd", sig12(spec.within_group_noise_sd)),
        ("response_noise_sd", sig12(spec.response_noise_sd)),
        ("n_train", spec.n_train.to_string()),
        ("n_val", spec.n_val.to_string()),
        ("n_test", spec.n_test.to_string()),
        ("solver_max_iters", report.solver.max_iters.to_string()),
        ("solver_rel_tol", sig12(report.solver.rel_tol)),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    for g in &report.grids {
        let exps: Vec<String> = g.lambda_exponents.iter().map(i32::to_string).collect();
        let _ = writeln!(s, "grid.{}.lambda_exponents = {}", g.method.name(), exps.join(","));
        if g.method == Method::KSupport {
            let ks: Vec<String> = g.k_values.iter().map(usize::to_string).collect();
            let _ = writeln!(s, "grid.{}.k_values = {}", g.method.name(), ks.join(","));
        }
    }
    for n in &report.notes {
        let _ = writeln!(s, "note = {n}");
    }

    let _ = writeln!(s, "\n[summary]");
    let _ = writeln!(
        s,
        "{:<12} {:>18} {:>18} {:>18} {:>18} {:>18}",
        "method", "MSE (SE)", "median_oracle_mse", "se_bootstrap", "sd", "median_test_mse"
    );
    for m in &report.methods {
        let o = &m.oracle_mse_summary;
        let _ = writeln!(
            s,
            "{:<12} {:>18} {:>18} {:>18} {:>18} {:>18}",
            m.method.table_label(),
            format!("{:.4} ({:.2})", o.median, o.se_bootstrap),
            sig12(o.median),
            sig12(o.se_bootstrap),
            sig12(o.sd),
            sig12(m.test_mse_summary.median),
        );
    }
    if report.methods.iter().any(|m| m.accuracy_summary.is_some()) {
        for m in &report.methods {
            if let Some(a) = &m.accuracy_summary {
                let _ = writeln!(s, "accuracy.{} = {} (se {})", m.method.name(), sig12(a.median), sig12(a.se_bootstrap));
            }
        }
    }

    let _ = writeln!(s, "\n[replications]");
    let _ = writeln!(s, "rep,seed,method,selected,oracle_mse,test_mse");
    for rep in 0..report.n_reps {
        for m in &report.methods {
            let _ = writeln!(
                s,
                "{rep},{},{},{},{},{}",
                report.rep_seeds[rep],
                m.method.name(),
                describe_penalty(&m.selected[rep]),
                sig12(m.oracle_mse[rep]),
                sig12(m.test_mse[rep]),
            );
        }
    }
    s
}

/// `n_reps x d` matrix of absolute coefficients, header `x1..xd`.
pub fn write_coefficients_csv(method: &MethodReport, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let d = method.coefficients.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in &method.coefficients {
        writeln!(out, "{}", crate::fmt::join_sig12(row))?;
    }
    out.flush()?;
    Ok(())
}

/// Write `report.txt` and `coef_<method>.csv` for every method into `dir`.
pub fn write_experiment(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.txt"), render_report(report))?;
    for m in &report.methods {
        write_coefficients_csv(m, dir.join(format!("coef_{}.csv", m.method.name())))?;
    }
    Ok(())
}

/// Read a coefficient matrix written by [`write_coefficients_csv`].
pub fn read_coefficients_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(File::open(path)?);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            column: 0,
            message: e.to_string(),
        })?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    line: i + 2,
                    column: c + 1,
                    message: format!("not a number: {v:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
