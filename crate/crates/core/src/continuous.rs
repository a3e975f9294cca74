//! Continuous-observation estimator.
//!
//! The weight function `h_T` solves `Gamma_T h = 1` on `[0,T]`, where
//! `Gamma_T f(t) = w f(t) + int_0^T K(t-s) f(s) ds` and `w` is 1 when the
//! model has a Wiener component. The estimator is `int h dX / int h dt` with
//! variance `1 / int h dt`.
//!
//! `Gamma_T` is discretized by product integration on a uniform partition
//! into `n` cells with midpoint nodes: the unknown is piecewise constant and
//! the kernel is integrated exactly over each cell, which absorbs the
//! `|t-s|^(2H-2)` singularity. On a uniform partition the resulting matrix is
//! symmetric Toeplitz.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::discrete::{EstimateReport, GridMeta, SamplePath, Scheme};
use crate::error::{Error, Result};
use crate::models::{cell_integral_unchecked, kernel_l1_norm, CovarianceModel};
use crate::scalar::{dot, max_abs, Real};
use crate::toeplitz::{solve_spd_toeplitz, SymToeplitz, ToeplitzFft};

/// Steps of power iteration used to estimate `||Gamma^C||`.
pub const POWER_STEPS: usize = 50;
/// Cells skipped at each end when checking the residual of the singular
/// closed-form weight.
pub const EDGE_CELLS: usize = 2;

/// Discretization and iteration controls for the weight solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NystromOptions {
    pub cells_per_unit: usize,
    pub max_cells: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NystromOptions {
    fn default() -> Self {
        NystromOptions { cells_per_unit: 4096, max_cells: 16384, tol: 1e-10, max_iter: 100_000 }
    }
}

impl NystromOptions {
    /// `cells_per_unit * T`, capped at `max_cells`, at least 2.
    pub fn cells_for(&self, horizon: f64) -> usize {
        let n = (self.cells_per_unit as f64 * horizon).ceil();
        (n.min(self.max_cells as f64) as usize).max(2)
    }
}

/// Product-integration discretization of `Gamma_T`.
#[derive(Debug, Clone)]
pub struct NystromOperator<T: Real> {
    model: CovarianceModel<T>,
    horizon: T,
    width: T,
    white: T,
    /// `int` of `K` over the cell `k` steps away from the node: first column of the Toeplitz matrix.
    column: Vec<T>,
    fft: Option<ToeplitzFft<T>>,
}

impl<T: Real> NystromOperator<T> {
    pub fn new(model: &CovarianceModel<T>, horizon: T, cells: usize) -> Result<Self> {
        model.require_continuous()?;
        if cells < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 cells, got {cells}")));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        let width = horizon / T::idx(cells);
        let half = width / T::lit(2.0);
        let column: Vec<T> = (0..cells)
            .map(|k| {
                let c = T::idx(k) * width;
                cell_integral_unchecked(model, c - half, c + half)
            })
            .collect();
        let white = if model.has_white() { T::one() } else { T::zero() };
        let fft = (cells >= 64 && column.iter().any(|&c| c != T::zero()))
            .then(|| ToeplitzFft::new(&SymToeplitz::new(column.clone()).expect("finite column")));
        Ok(NystromOperator { model: *model, horizon, width, white, column, fft })
    }

    pub fn cells(&self) -> usize {
        self.column.len()
    }

    pub fn width(&self) -> T {
        self.width
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn model(&self) -> &CovarianceModel<T> {
        &self.model
    }

    pub fn nodes(&self) -> Vec<T> {
        midpoints(self.horizon, self.cells())
    }

    /// Kernel part only: `(Gamma^C f)(t_i)`.
    pub fn apply_kernel(&self, f: &[T]) -> Vec<T> {
        assert_eq!(f.len(), self.cells(), "nodal vector length");
        if self.column.iter().all(|&c| c == T::zero()) {
            return vec![T::zero(); f.len()];
        }
        match &self.fft {
            Some(fft) => fft.apply(f),
            None => SymToeplitz::new(self.column.clone()).expect("finite column").matvec(f),
        }
    }

    /// `(Gamma_T f)(t_i)` including the identity part of a Wiener component.
    pub fn apply(&self, f: &[T]) -> Vec<T> {
        let mut out = self.apply_kernel(f);
        for (o, &v) in out.iter_mut().zip(f) {
            *o += self.white * v;
        }
        out
    }

    /// Full system matrix `w I + Gamma^C` as a Toeplitz matrix.
    pub fn toeplitz(&self) -> SymToeplitz<T> {
        let mut col = self.column.clone();
        col[0] += self.white;
        SymToeplitz::new(col).expect("finite column")
    }

    /// Largest eigenvalue of the discretized `Gamma^C`, by power iteration,
    /// clamped by the a-priori bound `||K||_{L1[-T,T]}`.
    pub fn kernel_norm(&self, steps: usize) -> T {
        let bound = kernel_l1_norm(&self.model, self.horizon);
        let n = self.cells();
        let mut v = vec![T::idx(n).sqrt().recip(); n];
        let mut lambda = T::zero();
        for _ in 0..steps {
            let w = self.apply_kernel(&v);
            lambda = dot(&v, &w);
            let norm = dot(&w, &w).sqrt();
            if !(norm > T::zero()) {
                return T::zero();
            }
            v = w.into_iter().map(|x| x / norm).collect();
        }
        lambda.min(bound)
    }

    /// `max |(Gamma_T f)(t_i) - 1|` over nodes `skip..n-skip`.
    pub fn residual(&self, f: &[T], skip: usize) -> T {
        let g = self.apply(f);
        let n = g.len();
        let hi = n.saturating_sub(skip).max(skip);
        g[skip..hi].iter().fold(T::zero(), |m, &v| m.max((v - T::one()).abs()))
    }
}

fn midpoints<T: Real>(horizon: T, cells: usize) -> Vec<T> {
    let width = horizon / T::idx(cells);
    (0..cells).map(|i| (T::idx(i) + T::lit(0.5)) * width).collect()
}

/// Applies the discretized `Gamma_T` to nodal values `f` on `[0, horizon]`.
pub fn gamma_apply<T: Real>(model: &CovarianceModel<T>, f: &[T], horizon: T) -> Result<Vec<T>> {
    Ok(NystromOperator::new(model, horizon, f.len())?.apply(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMethod {
    ClosedForm,
    Neumann,
    Direct,
}

impl fmt::Display for WeightMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMethod::ClosedForm => "closed-form",
            WeightMethod::Neumann => "neumann",
            WeightMethod::Direct => "direct",
        })
    }
}

impl FromStr for WeightMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-form" => Ok(WeightMethod::ClosedForm),
            "neumann" => Ok(WeightMethod::Neumann),
            "direct" => Ok(WeightMethod::Direct),
            _ => Err(Error::Format(format!("unknown weight method {s:?}"))),
        }
    }
}

/// Discretized `h_T`: one value per cell of a uniform partition of `[0,T]`,
/// attached to the cell midpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Real"))]
pub struct WeightFunction<T> {
    pub model: CovarianceModel<T>,
    pub horizon: T,
    pub cell_width: T,
    pub nodes: Vec<T>,
    pub values: Vec<T>,
    /// `int_0^T h_T`, the Fisher information; exact for the closed form.
    pub integral_h: T,
    /// `sum values * cell_width`.
    pub quadrature_integral: T,
    /// Max residual of the discretized equation recorded by the solver.
    pub residual: T,
    /// Requested solver tolerance (0 for non-iterative methods).
    pub tol: T,
    pub method: WeightMethod,
    pub iterations: usize,
}

impl<T: Real> WeightFunction<T> {
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn variance(&self) -> T {
        self.integral_h.recip()
    }

    /// `h_T(t)` by linear interpolation between nodes; constant beyond the
    /// outermost nodes.
    pub fn value_at(&self, t: T) -> T {
        let n = self.values.len();
        let pos = t / self.cell_width - T::lit(0.5);
        if !(pos > T::zero()) {
            return self.values[0];
        }
        let j = pos.floor().to_usize().unwrap_or(usize::MAX);
        if j >= n - 1 {
            return self.values[n - 1];
        }
        let frac = pos - T::idx(j);
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    /// Weights `h_T` at the midpoints of the path cells.
    pub fn path_weights(&self, path: &SamplePath<T>) -> Result<Vec<T>> {
        self.check_path(path)?;
        Ok(path
            .times()
            .windows(2)
            .map(|w| self.value_at((w[0] + w[1]) / T::lit(2.0)))
            .collect())
    }

    fn check_path(&self, path: &SamplePath<T>) -> Result<()> {
        let gap = (path.horizon() - self.horizon).abs();
        if gap > T::tol(1e-9) * self.horizon {
            return Err(Error::GridMismatch(format!(
                "path ends at T = {} but the weight function was solved on [0, {}]",
                path.horizon(),
                self.horizon
            )));
        }
        Ok(())
    }
}

fn cells_ok(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 cells, got {n}")));
    }
    Ok(())
}

/// `B(a, b)` via log-gamma.
fn beta_fn(a: f64, b: f64) -> f64 {
    statrs::function::beta::beta(a, b)
}

/// Closed-form weight for pure fBm with `H in (1/2, 1)`:
/// `h_T(s) = C_H s^(1/2-H) (T-s)^(1/2-H)`, `C_H = 1 / (H(2H-1) B(H-1/2, 3/2-H))`.
///
/// The weight is singular at both ends, so each cell carries the exact cell
/// average of `h_T` (regularized incomplete Beta) rather than its midpoint
/// value; `integral_h` is the exact `C_H T^(2-2H) B(3/2-H, 3/2-H)`.
pub fn ht_closed_form_fbm<T: Real>(hurst: T, horizon: T, n: usize) -> Result<WeightFunction<T>> {
    cells_ok(n)?;
    let hf = hurst.f64();
    if !(hf > 0.5 && hf < 1.0) {
        return Err(Error::UnsupportedModel(format!("closed-form weight needs H in (1/2, 1), got {hf}")));
    }
    let tf = horizon.f64();
    if !(tf > 0.0) || !tf.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {tf}")));
    }
    let model = CovarianceModel::Fbm { hurst };
    let a = 1.5 - hf;
    let c_h = 1.0 / (hf * (2.0 * hf - 1.0) * fbm_weight_beta(hf));
    let total = c_h * tf.powf(2.0 - 2.0 * hf) * beta_fn(a, a);
    // cumulative mass at the cell edges, first half; the second half mirrors it
    let width = tf / n as f64;
    let half = n.div_ceil(2);
    let mut cum = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let x = (k as f64 / n as f64).min(0.5);
        cum.push(total * statrs::function::beta::beta_reg(a, a, x));
    }
    let mut values = vec![T::zero(); n];
    for k in 0..half {
        let mass = if n % 2 == 1 && k == half - 1 {
            // middle cell of an odd partition: what remains of the total
            total - 2.0 * cum[k]
        } else {
            cum[k + 1] - cum[k]
        };
        let v = T::lit(mass / width);
        values[k] = v;
        values[n - 1 - k] = v;
    }
    let op = NystromOperator::new(&model, horizon, n)?;
    let residual = op.residual(&values, EDGE_CELLS.min(n / 2 - 1));
    let width = horizon / T::idx(n);
    let quadrature_integral = values.iter().copied().sum::<T>() * width;
    Ok(WeightFunction {
        model,
        horizon,
        cell_width: width,
        nodes: midpoints(horizon, n),
        values,
        integral_h: T::lit(total),
        quadrature_integral,
        residual,
        tol: T::zero(),
        method: WeightMethod::ClosedForm,
        iterations: 0,
    })
}

/// `B(H - 1/2, 3/2 - H) = pi / sin(pi (H - 1/2))` by the reflection formula.
fn fbm_weight_beta(h: f64) -> f64 {
    std::f64::consts::PI / (std::f64::consts::PI * (h - 0.5)).sin()
}

/// Pointwise closed-form weight `C_H s^(1/2-H) (T-s)^(1/2-H)`.
pub fn fbm_weight_at(hurst: f64, horizon: f64, s: f64) -> f64 {
    let c_h = 1.0 / (hurst * (2.0 * hurst - 1.0) * fbm_weight_beta(hurst));
    c_h * (s * (horizon - s)).powf(0.5 - hurst)
}

/// Weight for models with a Wiener component, `Gamma_T = I + Gamma^C`, by the
/// Neumann series
/// `h = sum_k (c I - Gamma^C)^k 1 / (1 + c)^(k+1)`, `c = ||Gamma^C|| / 2`.
///
/// Partial sums are accumulated as `h <- h - (Gamma_T h - 1) / (1 + c)`
/// starting from `h = 0`, stopping once `||Gamma_T h - 1||_inf <= tol`.
pub fn ht_neumann<T: Real>(
    model: &CovarianceModel<T>,
    horizon: T,
    n: usize,
    tol: T,
    max_iter: usize,
) -> Result<WeightFunction<T>> {
    cells_ok(n)?;
    if !model.has_white() {
        return Err(Error::UnsupportedModel(format!(
            "{model}: the Neumann series needs a Wiener component; use the closed form for pure fBm"
        )));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let op = NystromOperator::new(model, horizon, n)?;
    let half_norm = op.kernel_norm(POWER_STEPS) / T::lit(2.0);
    let damp = (T::one() + half_norm).recip();
    let mut h = vec![T::zero(); n];
    let mut iterations = 0;
    loop {
        let mut r = op.apply(&h);
        for v in r.iter_mut() {
            *v -= T::one();
        }
        let res = max_abs(&r);
        if res <= tol {
            return Ok(finish(op, h, res, tol, WeightMethod::Neumann, iterations));
        }
        if iterations == max_iter || !res.is_finite() {
            return Err(Error::NotConverged { iterations, residual: res.f64() });
        }
        for (hv, rv) in h.iter_mut().zip(&r) {
            *hv -= damp * *rv;
        }
        iterations += 1;
    }
}

/// Weight from a direct solve of the Nyström system (Levinson, `O(n^2)`).
pub fn ht_nystrom_direct<T: Real>(model: &CovarianceModel<T>, horizon: T, n: usize) -> Result<WeightFunction<T>> {
    cells_ok(n)?;
    let op = NystromOperator::new(model, horizon, n)?;
    let h = solve_spd_toeplitz(&op.toeplitz(), &vec![T::one(); n])?;
    let res = op.residual(&h, 0);
    Ok(finish(op, h, res, T::zero(), WeightMethod::Direct, 0))
}

fn finish<T: Real>(
    op: NystromOperator<T>,
    values: Vec<T>,
    residual: T,
    tol: T,
    method: WeightMethod,
    iterations: usize,
) -> WeightFunction<T> {
    let integral = values.iter().copied().sum::<T>() * op.width;
    WeightFunction {
        model: op.model,
        horizon: op.horizon,
        cell_width: op.width,
        nodes: op.nodes(),
        values,
        integral_h: integral,
        quadrature_integral: integral,
        residual,
        tol,
        method,
        iterations,
    }
}

/// Picks the supported solver for `model`: Neumann series with a Wiener
/// component, the closed form for pure fBm. Sums of two fBms without a white
/// part are refused.
pub fn solve_weight<T: Real>(model: &CovarianceModel<T>, horizon: T, opts: &NystromOptions) -> Result<WeightFunction<T>> {
    model.require_continuous()?;
    let n = opts.cells_for(horizon.f64());
    match *model {
        CovarianceModel::Wiener | CovarianceModel::FbmPlusWiener { .. } => {
            ht_neumann(model, horizon, n, T::lit(opts.tol), opts.max_iter)
        }
        CovarianceModel::Fbm { hurst } => ht_closed_form_fbm(hurst, horizon, n),
        CovarianceModel::TwoFbm { .. } => Err(Error::UnsupportedModel(format!(
            "{model}: no weight solver for a sum of two fBms without a Wiener component"
        ))),
    }
}

fn check_weight<T: Real>(ht: &WeightFunction<T>, model: &CovarianceModel<T>) -> Result<()> {
    if ht.model != *model {
        return Err(Error::InvalidArgument(format!(
            "weight function was solved for {}, not {model}",
            ht.model
        )));
    }
    if !(ht.integral_h > T::zero()) {
        return Err(Error::Singular { pivot: 0, value: ht.integral_h.f64() });
    }
    Ok(())
}

/// `int_0^T h dX` as the Riemann sum over path cells with `h` at cell midpoints.
pub fn weighted_increment_sum<T: Real>(path: &SamplePath<T>, ht: &WeightFunction<T>) -> Result<T> {
    let w = ht.path_weights(path)?;
    Ok(dot(&w, &path.increments()))
}

/// `theta_hat = int h dX / int h dt`, variance `1 / int h dt`.
pub fn estimate_continuous<T: Real>(
    path: &SamplePath<T>,
    ht: &WeightFunction<T>,
    model: &CovarianceModel<T>,
) -> Result<EstimateReport<T>> {
    check_weight(ht, model)?;
    let num = weighted_increment_sum(path, ht)?;
    Ok(EstimateReport {
        theta_hat: num / ht.integral_h,
        theoretical_variance: ht.variance(),
        scheme: Scheme::Continuous,
        model: *model,
        grid: GridMeta {
            n_increments: path.len(),
            step: path.regular_step(),
            horizon: path.horizon(),
            weight_cells: Some(ht.cells()),
        },
    })
}

/// `log L(theta) = theta int h dX - theta^2/2 int h dt`.
pub fn loglik_continuous<T: Real>(
    path: &SamplePath<T>,
    ht: &WeightFunction<T>,
    model: &CovarianceModel<T>,
    theta: T,
) -> Result<T> {
    check_weight(ht, model)?;
    let num = weighted_increment_sum(path, ht)?;
    Ok(theta * num - theta * theta / T::lit(2.0) * ht.integral_h)
}

const CACHE_MAGIC: &str = "# driftmle weight function v1";

/// Writes `ht` as CSV: `#`-prefixed `key=value` metadata, then `node,value`
/// rows. Numbers use the shortest representation that parses back exactly.
pub fn write_weight_csv<T: Real, W: Write>(ht: &WeightFunction<T>, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{CACHE_MAGIC}")?;
    writeln!(w, "# model={}", ht.model)?;
    writeln!(w, "# horizon={}", ht.horizon)?;
    writeln!(w, "# cells={}", ht.cells())?;
    writeln!(w, "# tol={}", ht.tol)?;
    writeln!(w, "# method={}", ht.method)?;
    writeln!(w, "# iterations={}", ht.iterations)?;
    writeln!(w, "# residual={}", ht.residual)?;
    writeln!(w, "# integral_h={}", ht.integral_h)?;
    writeln!(w, "# quadrature_integral={}", ht.quadrature_integral)?;
    writeln!(w, "node,value")?;
    for (t, v) in ht.nodes.iter().zip(&ht.values) {
        writeln!(w, "{t},{v}")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_num<T: Real>(s: &str, what: &str) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| Error::Format(format!("cannot parse {what} from {s:?}")))
}

pub fn read_weight_csv<T: Real, R: std::io::Read>(input: R) -> Result<WeightFunction<T>> {
    let mut meta = std::collections::HashMap::new();
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(Ok(l)) if l.trim() == CACHE_MAGIC => {}
        _ => return Err(Error::Format("not a weight-function file".into())),
    }
    let mut header_seen = false;
    for line in lines {
        let line = line?;
        let line = line.trim();
        if let Some(kv) = line.strip_prefix('#') {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Format(format!("bad metadata line {line:?}")))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else if !header_seen {
            if line != "node,value" {
                return Err(Error::Format(format!("expected `node,value` header, got {line:?}")));
            }
            header_seen = true;
        } else if !line.is_empty() {
            let (t, v) = line.split_once(',').ok_or_else(|| Error::Format(format!("bad row {line:?}")))?;
            nodes.push(parse_num::<T>(t, "node")?);
            values.push(parse_num::<T>(v, "value")?);
        }
    }
    let get = |k: &str| meta.get(k).ok_or_else(|| Error::Format(format!("missing metadata `{k}`")));
    let model: CovarianceModel<T> = get("model")?.parse()?;
    let cells: usize = get("cells")?.parse().map_err(|_| Error::Format("bad cell count".into()))?;
    if cells != values.len() || cells < 2 {
        return Err(Error::Format(format!("header says {cells} cells, found {} rows", values.len())));
    }
    let horizon: T = parse_num(get("horizon")?, "horizon")?;
    Ok(WeightFunction {
        model,
        horizon,
        cell_width: horizon / T::idx(cells),
        nodes,
        values,
        integral_h: parse_num(get("integral_h")?, "integral_h")?,
        quadrature_integral: parse_num(get("quadrature_integral")?, "quadrature_integral")?,
        residual: parse_num(get("residual")?, "residual")?,
        tol: parse_num(get("tol")?, "tol")?,
        method: get("method")?.parse()?,
        iterations: get("iterations")?.parse().map_err(|_| Error::Format("bad iteration count".into()))?,
    })
}

/// On-disk cache of solved weight functions keyed by `(model, T, n, tol)`.
#[derive(Debug, Clone)]
pub struct WeightCache {
    dir: PathBuf,
}

impl WeightCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        WeightCache { dir: dir.into() }
    }

    pub fn path_for<T: Real>(&self, model: &CovarianceModel<T>, horizon: T, cells: usize, tol: T) -> PathBuf {
        let key = format!("{model}_T{horizon}_n{cells}_tol{tol:e}").replace([':', '+'], "-");
        self.dir.join(format!("ht_{key}.csv"))
    }

    pub fn load<T: Real>(&self, path: &Path) -> Result<WeightFunction<T>> {
        read_weight_csv(fs::File::open(path)?)
    }

    /// Returns the cached weight if present, otherwise solves with
    /// [`solve_weight`] semantics at exactly `cells` cells and stores it.
    pub fn load_or_solve<T: Real>(
        &self,
        model: &CovarianceModel<T>,
        horizon: T,
        cells: usize,
        tol: T,
        max_iter: usize,
    ) -> Result<WeightFunction<T>> {
        let path = self.path_for(model, horizon, cells, tol);
        if path.exists() {
            let ht = self.load(&path)?;
            if ht.model == *model && ht.horizon == horizon && ht.cells() == cells {
                return Ok(ht);
            }
        }
        model.require_continuous()?;
        let ht = match *model {
            CovarianceModel::Fbm { hurst } => ht_closed_form_fbm(hurst, horizon, cells)?,
            _ => ht_neumann(model, horizon, cells, tol, max_iter)?,
        };
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("csv.tmp");
        write_weight_csv(&ht, fs::File::create(&tmp)?)?;
        fs::rename(&tmp, &path)?;
        Ok(ht)
    }
}
