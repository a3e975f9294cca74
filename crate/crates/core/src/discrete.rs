//! Discrete-observation likelihood and estimator.
//!
//! With increments `dX = theta z + dB`, `z_k = t_k - t_{k-1}` and
//! `G = Cov(dB)`, the log-likelihood ratio against `theta = 0` is
//! `theta z'G^-1 dX - theta^2/2 z'G^-1 z`, maximized by
//! `theta_hat = z'G^-1 dX / z'G^-1 z` with variance `1 / z'G^-1 z`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::CovarianceModel;
use crate::scalar::{dot, Real};
use crate::toeplitz::{build_gamma, prefix_quadratic_forms, solve_spd_toeplitz, Cholesky};

/// Relative step deviation under which a grid counts as regular.
pub const REGULAR_GRID_TOL: f64 = 1e-9;

/// Observation times and values, starting at `t_0 = 0`, `X_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath<T> {
    times: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> SamplePath<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least two observations".into()));
        }
        if times[0] != T::zero() || values[0] != T::zero() {
            return Err(Error::InvalidArgument("paths start at t = 0 with X_0 = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("observation times must be strictly increasing".into()));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("path contains non-finite values".into()));
        }
        Ok(SamplePath { times, values })
    }

    /// Uniform grid `t_k = k h`, `k = 0..=n`, with the given values.
    pub fn regular(step: T, values: Vec<T>) -> Result<Self> {
        let times = (0..values.len()).map(|k| T::idx(k) * step).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Number of increments `N`.
    pub fn len(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> T {
        self.times[self.len()]
    }

    pub fn increments(&self) -> Vec<T> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn steps(&self) -> Vec<T> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Path restricted to its first `n` increments.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidArgument(format!("cannot keep {n} of {} increments", self.len())));
        }
        Ok(SamplePath { times: self.times[..=n].to_vec(), values: self.values[..=n].to_vec() })
    }

    /// Adds the drift `c t` to every observation.
    pub fn with_drift(&self, c: T) -> Self {
        let values = self.times.iter().zip(&self.values).map(|(&t, &x)| x + c * t).collect();
        SamplePath { times: self.times.clone(), values }
    }

    /// Largest relative deviation of a step from the mean step.
    pub fn step_deviation(&self) -> T {
        let mean = self.horizon() / T::idx(self.len());
        self.steps().iter().fold(T::zero(), |m, &s| m.max((s - mean).abs() / mean))
    }

    /// Mean step if the grid is regular to [`REGULAR_GRID_TOL`] or to the
    /// rounding level of the time stamps, whichever is looser.
    pub fn regular_step(&self) -> Option<T> {
        let rounding = T::epsilon() * T::lit(16.0) * T::idx(self.len());
        let tol = T::lit(REGULAR_GRID_TOL).max(rounding);
        (self.step_deviation() <= tol).then(|| self.horizon() / T::idx(self.len()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Discrete,
    Continuous,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Discrete => "discrete",
            Scheme::Continuous => "continuous",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta<T> {
    /// Number of observed increments.
    pub n_increments: usize,
    /// Observation step, when the grid is regular.
    pub step: Option<T>,
    pub horizon: T,
    /// Quadrature cells of the weight function (continuous scheme only).
    pub weight_cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct EstimateReport<T> {
    pub theta_hat: T,
    pub theoretical_variance: T,
    pub scheme: Scheme,
    pub model: CovarianceModel<T>,
    pub grid: GridMeta<T>,
}

impl<T: Real> EstimateReport<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Precomputed MLE weights `G^-1 z / z'G^-1 z` for a regular grid.
///
/// Estimating from many paths on the same grid only costs a dot product each.
#[derive(Debug, Clone)]
pub struct DiscreteEstimator<T> {
    model: CovarianceModel<T>,
    step: T,
    weights: Vec<T>,
    fisher: T,
}

impl<T: Real> DiscreteEstimator<T> {
    pub fn new(model: &CovarianceModel<T>, step: T, n: usize) -> Result<Self> {
        let gamma = build_gamma(model, step, n)?;
        let z = vec![step; n];
        let x = solve_spd_toeplitz(&gamma, &z)?;
        let fisher = dot(&z, &x);
        if !(fisher > T::zero()) {
            return Err(Error::Singular { pivot: 0, value: fisher.f64() });
        }
        let weights = x.iter().map(|&v| v / fisher).collect();
        Ok(DiscreteEstimator { model: *model, step, weights, fisher })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `z'G^-1 z`, the Fisher information about `theta`.
    pub fn information(&self) -> T {
        self.fisher
    }

    pub fn variance(&self) -> T {
        self.fisher.recip()
    }

    /// `theta_hat` from the first `len()` increments.
    pub fn estimate_increments(&self, increments: &[T]) -> Result<T> {
        if increments.len() < self.len() {
            return Err(Error::GridMismatch(format!(
                "estimator needs {} increments, path has {}",
                self.len(),
                increments.len()
            )));
        }
        Ok(dot(&self.weights, &increments[..self.len()]))
    }

    pub fn report(&self, theta_hat: T) -> EstimateReport<T> {
        let n = self.len();
        EstimateReport {
            theta_hat,
            theoretical_variance: self.variance(),
            scheme: Scheme::Discrete,
            model: self.model,
            grid: GridMeta { n_increments: n, step: Some(self.step), horizon: self.step * T::idx(n), weight_cells: None },
        }
    }
}

/// MLE from observations on a regular grid, using the Toeplitz structure.
pub fn estimate_discrete<T: Real>(path: &SamplePath<T>, model: &CovarianceModel<T>) -> Result<EstimateReport<T>> {
    let step = path
        .regular_step()
        .ok_or_else(|| Error::IrregularGrid { deviation: path.step_deviation().f64() })?;
    let est = DiscreteEstimator::new(model, step, path.len())?;
    let theta = est.estimate_increments(&path.increments())?;
    Ok(est.report(theta))
}

/// Dense `Gamma^(N)` on an arbitrary grid, entrywise from the model covariance.
pub fn dense_gamma<T: Real>(model: &CovarianceModel<T>, times: &[T]) -> Vec<T> {
    let n = times.len() - 1;
    let mut g = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = model.increment_covariance(times[i], times[i + 1], times[j], times[j + 1]);
            g[i * n + j] = c;
            g[j * n + i] = c;
        }
    }
    g
}

/// Returns `(z'G^-1 dX, z'G^-1 z)`, taking the Toeplitz path on regular grids.
fn quadratic_forms<T: Real>(path: &SamplePath<T>, model: &CovarianceModel<T>) -> Result<(T, T)> {
    model.validate()?;
    let dx = path.increments();
    match path.regular_step() {
        Some(step) => {
            let gamma = build_gamma(model, step, path.len())?;
            let z = vec![step; path.len()];
            let x = solve_spd_toeplitz(&gamma, &z)?;
            Ok((dot(&x, &dx), dot(&x, &z)))
        }
        None => {
            let z = path.steps();
            let chol = Cholesky::factor(&dense_gamma(model, path.times()), path.len())?;
            let x = chol.solve(&z)?;
            Ok((dot(&x, &dx), dot(&x, &z)))
        }
    }
}

/// MLE on any grid. Regular grids use the Toeplitz solver, irregular ones a
/// dense Cholesky factorization of the entrywise covariance.
pub fn estimate_discrete_any_grid<T: Real>(
    path: &SamplePath<T>,
    model: &CovarianceModel<T>,
) -> Result<EstimateReport<T>> {
    let (num, fisher) = quadratic_forms(path, model)?;
    Ok(EstimateReport {
        theta_hat: num / fisher,
        theoretical_variance: fisher.recip(),
        scheme: Scheme::Discrete,
        model: *model,
        grid: GridMeta {
            n_increments: path.len(),
            step: path.regular_step(),
            horizon: path.horizon(),
            weight_cells: None,
        },
    })
}

/// `log L(theta) = theta z'G^-1 dX - theta^2/2 z'G^-1 z` on any grid.
pub fn loglik_discrete<T: Real>(path: &SamplePath<T>, model: &CovarianceModel<T>, theta: T) -> Result<T> {
    let (num, fisher) = quadratic_forms(path, model)?;
    Ok(theta * num - theta * theta / T::lit(2.0) * fisher)
}

/// `(N, Var theta_hat^(N))` for `N = 1..=n_max` from a single Levinson pass.
pub fn variance_decay_profile<T: Real>(model: &CovarianceModel<T>, h: T, n_max: usize) -> Result<Vec<(usize, T)>> {
    if n_max < 2 {
        return Err(Error::InvalidArgument("variance profile needs n_max >= 2".into()));
    }
    let gamma = build_gamma(model, h, n_max)?;
    let forms = prefix_quadratic_forms(&gamma, &vec![h; n_max])?;
    Ok(forms.into_iter().enumerate().map(|(k, q)| (k + 1, q.recip())).collect())
}
