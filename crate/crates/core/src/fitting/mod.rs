//! Damped nonlinear least squares with Jacobian covariance, and the model
//! functions used to pull physical parameters out of spectra and time traces.
//!
//! The solver minimizes `Σ((y − f(x; p))/σ)²`. Each iteration solves
//! `(JᵀJ + λ·diag(JᵀJ))·Δ = Jᵀr`; a step that lowers the cost is accepted and
//! `λ` shrinks tenfold (towards Gauss–Newton), otherwise `λ` grows tenfold
//! (towards scaled gradient descent). Parameter uncertainties come from
//! `(JᵀJ)⁻¹` at the solution, multiplied by `χ²_red` when the data carry no σ.

mod models;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::spectrum::{Spectrum, SpectrumMeta};

pub use models::{DampedSine, Gaussian, GaussianFixedShape, Linear, Lorentzian, OseFss, Sin2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need more data points ({n}) than parameters ({m})")]
    TooFewPoints { n: usize, m: usize },
    #[error("data contain a non-finite value at index {0}")]
    NonFiniteData(usize),
    #[error("initial guess has {got} parameters, model `{model}` expects {expected}")]
    InitLength { model: String, got: usize, expected: usize },
    #[error("model is not finite at the initial guess")]
    BadStart,
    #[error("normal equations are singular; parameter(s) {0} not identifiable from these data")]
    Singular(String),
}

/// Name and unit template of one model parameter. Units may reference the
/// data axes as `{x}` and `{y}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub unit: &'static str,
}

impl ParamSpec {
    pub const fn new(name: &'static str, unit: &'static str) -> Self {
        ParamSpec { name, unit }
    }

    fn resolve_unit(&self, meta: &SpectrumMeta) -> String {
        self.unit.replace("{x}", &meta.x_unit).replace("{y}", &meta.y_unit)
    }
}

pub trait FitModel: Sync {
    fn name(&self) -> &str;

    fn params(&self) -> &[ParamSpec];

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// `∂f/∂p` at `x`. Defaults to central differences.
    fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        finite_difference_gradient(self, x, p, out);
    }

    fn has_analytic_gradient(&self) -> bool {
        false
    }

    /// Starting point derived from the data alone.
    fn initial_guess(&self, data: &Spectrum) -> Vec<f64>;

    /// Maps an equivalent parameter vector onto its canonical representative
    /// (sign and phase conventions).
    fn canonicalize(&self, _p: &mut [f64]) {}
}

pub fn finite_difference_gradient<M: FitModel + ?Sized>(model: &M, x: f64, p: &[f64], out: &mut [f64]) {
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-3);
        q[j] = p[j] + h;
        let up = model.eval(x, &q);
        q[j] = p[j] - h;
        let down = model.eval(x, &q);
        q[j] = p[j];
        out[j] = (up - down) / (2.0 * h);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub lambda_init: f64,
    /// Relative step size at which iteration stops.
    pub xtol: f64,
    /// Relative cost decrease at which iteration stops.
    pub ftol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 200,
            lambda_init: 1e-3,
            xtol: 1e-10,
            ftol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedParam {
    pub name: String,
    pub unit: String,
    pub value: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: String,
    pub params: Vec<FittedParam>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub n_iter: usize,
    /// How the covariance was obtained.
    pub covariance_estimator: &'static str,
}

impl FitResult {
    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn param(&self, name: &str) -> Option<&FittedParam> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> f64 {
        self.param(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn uncertainty(&self, name: &str) -> f64 {
        self.param(name).map_or(f64::NAN, |p| p.uncertainty)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "model {}: {} after {} iterations, chi2_red = {:.6}",
            self.model,
            if self.converged { "converged" } else { "NOT converged" },
            self.n_iter,
            self.chi2_reduced
        )?;
        for p in &self.params {
            writeln!(f, "  {:<8} = {:.6} ± {:.6} {}", p.name, p.value, p.uncertainty, p.unit)?;
        }
        write!(f, "  (uncertainties: {})", self.covariance_estimator)
    }
}

struct Problem<'a, M: FitModel + ?Sized> {
    model: &'a M,
    data: &'a Spectrum,
}

impl<M: FitModel + ?Sized> Problem<'_, M> {
    fn cost(&self, p: &[f64]) -> f64 {
        let d = self.data;
        let mut sum = 0.0;
        for i in 0..d.len() {
            let r = (d.y[i] - self.model.eval(d.x[i], p)) / d.sigma_or_unit(i);
            sum += r * r;
        }
        if sum.is_finite() {
            sum
        } else {
            f64::INFINITY
        }
    }

    /// Weighted Jacobian `J` and residual `r`.
    fn linearize(&self, p: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.data;
        let (n, m) = (d.len(), p.len());
        let mut jac = DMatrix::zeros(n, m);
        let mut res = DVector::zeros(n);
        let mut g = vec![0.0; m];
        for i in 0..n {
            let w = 1.0 / d.sigma_or_unit(i);
            res[i] = (d.y[i] - self.model.eval(d.x[i], p)) * w;
            self.model.gradient(d.x[i], p, &mut g);
            for j in 0..m {
                jac[(i, j)] = g[j] * w;
            }
        }
        (jac, res)
    }
}

/// Fits `model` to `data` starting from `init` or the model's own guess.
pub fn fit<M: FitModel + ?Sized>(model: &M, data: &Spectrum, init: Option<&[f64]>) -> Result<FitResult, FitError> {
    fit_with(model, data, init, &FitOptions::default())
}

pub fn fit_with<M: FitModel + ?Sized>(
    model: &M,
    data: &Spectrum,
    init: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FitResult, FitError> {
    let m = model.params().len();
    let n = data.len();
    if n <= m {
        return Err(FitError::TooFewPoints { n, m });
    }
    if let Some(i) = (0..n).find(|&i| !data.x[i].is_finite() || !data.y[i].is_finite()) {
        return Err(FitError::NonFiniteData(i));
    }
    let mut p = match init {
        Some(v) if v.len() != m => {
            return Err(FitError::InitLength {
                model: model.name().into(),
                got: v.len(),
                expected: m,
            })
        }
        Some(v) => v.to_vec(),
        None => model.initial_guess(data),
    };
    let problem = Problem { model, data };
    let mut cost = problem.cost(&p);
    if !cost.is_finite() {
        return Err(FitError::BadStart);
    }

    let mut lambda = opts.lambda_init;
    let mut converged = cost == 0.0;
    let mut n_iter = 0;
    let (mut jac, mut res) = problem.linearize(&p);
    while !converged && n_iter < opts.max_iter {
        n_iter += 1;
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let grad = &jt * &res;
        let diag_max = normal.diagonal().max();
        let mut accepted = false;
        // inner loop: raise damping until the step lowers the cost
        while lambda < 1e16 {
            let mut damped = normal.clone();
            for j in 0..m {
                damped[(j, j)] += lambda * normal[(j, j)].max(1e-12 * diag_max).max(f64::MIN_POSITIVE);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_cost = problem.cost(&trial);
            let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let small_step = step.norm() <= opts.xtol * (p_norm + opts.xtol);
            if trial_cost < cost {
                let small_gain = cost - trial_cost <= opts.ftol * cost;
                p = trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain || cost == 0.0;
                break;
            }
            if small_step {
                // no representable improvement left
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted && !converged {
            // damping exhausted without progress: we sit in a minimum
            converged = true;
        }
        if accepted {
            (jac, res) = problem.linearize(&p);
        }
    }

    model.canonicalize(&mut p);
    let (jac, res) = problem.linearize(&p);
    let normal = jac.transpose() * &jac;
    let dof = (n - m) as f64;
    let chi2_reduced = res.norm_squared() / dof;
    let inverse = invert_normal(&normal).ok_or_else(|| {
        let bad: Vec<&str> = (0..m)
            .filter(|&j| normal[(j, j)] <= 1e-14 * normal.diagonal().max())
            .map(|j| model.params()[j].name)
            .collect();
        FitError::Singular(if bad.is_empty() { "(correlated)".into() } else { bad.join(", ") })
    })?;
    let (scale, estimator) = if data.sigma.is_some() {
        (1.0, "jacobian covariance (J^T W J)^-1 with supplied sigma")
    } else {
        (chi2_reduced, "jacobian covariance (J^T J)^-1 scaled by chi2_red")
    };
    let covariance: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| inverse[(i, j)] * scale).collect()).collect();
    let params = model
        .params()
        .iter()
        .enumerate()
        .map(|(j, spec)| FittedParam {
            name: spec.name.into(),
            unit: spec.resolve_unit(&data.meta),
            value: p[j],
            uncertainty: covariance[j][j].max(0.0).sqrt(),
        })
        .collect();
    Ok(FitResult {
        model: model.name().into(),
        params,
        covariance,
        chi2_reduced,
        converged,
        n_iter,
        covariance_estimator: estimator,
    })
}

/// Inverse of `JᵀJ` via a column-equilibrated Cholesky factorization, or
/// `None` when it is numerically singular.
fn invert_normal(normal: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = normal.nrows();
    let d: Vec<f64> = (0..m).map(|j| normal[(j, j)]).collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let scaled = DMatrix::from_fn(m, m, |i, j| normal[(i, j)] / (d[i] * d[j]).sqrt());
    let eig = scaled.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-13 * hi) {
        return None;
    }
    let inv = scaled.cholesky()?.inverse();
    Some(DMatrix::from_fn(m, m, |i, j| inv[(i, j)] / (d[i] * d[j]).sqrt()))
}

/// Evaluates a model on a grid.
pub fn evaluate<M: FitModel + ?Sized>(model: &M, x: &[f64], p: &[f64]) -> Vec<f64> {
    x.iter().map(|&xi| model.eval(xi, p)).collect()
}
