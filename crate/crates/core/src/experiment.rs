//! Monte Carlo studies on simulated paths.
//!
//! Replication `i` of row `r` is seeded with `derive_seed(derive_seed(seed, r), i)`,
//! so results do not depend on thread scheduling; rayon collects replications
//! in index order before any aggregation.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::continuous::{estimate_continuous, ht_neumann, NystromOptions};
use crate::discrete::{DiscreteEstimator, Scheme};
use crate::error::{Error, Result};
use crate::models::CovarianceModel;
use crate::sim::{derive_seed, PathSampler};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    #[serde(rename = "H")]
    pub hurst: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub scheme: Scheme,
    pub n_reps: usize,
    pub sample_mean: f64,
    pub sample_variance: f64,
    pub theoretical_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Config {
    pub hurst_list: Vec<f64>,
    pub horizon_list: Vec<f64>,
    pub theta: f64,
    pub n_reps: usize,
    /// Path steps per unit of time.
    pub steps_per_unit: usize,
    pub seed: u64,
    pub nystrom: NystromOptions,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            hurst_list: vec![0.6, 0.7, 0.8, 0.9],
            horizon_list: vec![1.0, 10.0],
            theta: 2.0,
            n_reps: 1000,
            steps_per_unit: 1000,
            seed: 2024,
            nystrom: NystromOptions::default(),
        }
    }
}

/// Mixed model `theta t + W_t + B^H_t`: for every `(H, T)` solve `h_T` by the
/// Neumann series, estimate `theta` on `n_reps` simulated paths and report the
/// sample moments next to `1 / int h_T`.
pub fn run_table1(cfg: &Table1Config) -> Result<Vec<ExperimentRow>> {
    if cfg.n_reps < 2 {
        return Err(Error::InvalidArgument("need at least 2 replications".into()));
    }
    if cfg.steps_per_unit == 0 {
        return Err(Error::InvalidArgument("steps per unit must be positive".into()));
    }
    let mut rows = Vec::new();
    for &hurst in &cfg.hurst_list {
        if !(hurst > 0.5 && hurst < 1.0) {
            return Err(Error::UnsupportedModel(format!("table rows need H in (1/2, 1), got {hurst}")));
        }
        for &horizon in &cfg.horizon_list {
            let row_seed = derive_seed(cfg.seed, rows.len() as u64);
            rows.push(table1_row(cfg, hurst, horizon, row_seed)?);
        }
    }
    Ok(rows)
}

fn table1_row(cfg: &Table1Config, hurst: f64, horizon: f64, seed: u64) -> Result<ExperimentRow> {
    let model = CovarianceModel::fbm_plus_wiener(hurst)?;
    let cells = cfg.nystrom.cells_for(horizon);
    let ht = ht_neumann(&model, horizon, cells, cfg.nystrom.tol, cfg.nystrom.max_iter)?;
    let n_steps = ((cfg.steps_per_unit as f64 * horizon).round() as usize).max(1);
    let sampler = PathSampler::new(&model, horizon, n_steps)?;
    let estimates = (0..cfg.n_reps)
        .into_par_iter()
        .map(|i| {
            let path = sampler.sample(cfg.theta, derive_seed(seed, i as u64));
            estimate_continuous(&path, &ht, &model).map(|r| r.theta_hat)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ExperimentRow {
        hurst,
        horizon,
        scheme: Scheme::Continuous,
        n_reps: cfg.n_reps,
        sample_mean: stats::mean(&estimates),
        sample_variance: stats::variance(&estimates),
        theoretical_variance: ht.variance(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub n_reps: usize,
    pub sample_mean: f64,
    /// `mean (theta_hat - theta)^2`.
    pub sample_mse: f64,
    pub theoretical_variance: f64,
}

/// Discrete MLE on nested prefixes of the same simulated paths: replication
/// `i` draws one path of `max(n_list)` steps and estimates from its first `N`
/// increments for every `N` in `n_list`.
pub fn run_discrete_consistency(
    model: &CovarianceModel<f64>,
    h: f64,
    n_list: &[usize],
    theta: f64,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<ConsistencyRow>> {
    let estimates = discrete_estimates(model, h, n_list, theta, n_reps, seed)?;
    n_list
        .iter()
        .zip(&estimates)
        .map(|(&n, est)| {
            let var = DiscreteEstimator::new(model, h, n)?.variance();
            let mse = est.iter().map(|t| (t - theta).powi(2)).sum::<f64>() / n_reps as f64;
            Ok(ConsistencyRow {
                n,
                h,
                n_reps,
                sample_mean: stats::mean(est),
                sample_mse: mse,
                theoretical_variance: var,
            })
        })
        .collect()
}

/// `out[j][i]`: estimate from the first `n_list[j]` increments of replication `i`.
pub fn discrete_estimates(
    model: &CovarianceModel<f64>,
    h: f64,
    n_list: &[usize],
    theta: f64,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_reps < 2 {
        return Err(Error::InvalidArgument("need at least 2 replications".into()));
    }
    let n_max = *n_list.iter().max().ok_or_else(|| Error::InvalidArgument("empty N list".into()))?;
    if n_list.contains(&0) {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    let estimators = n_list
        .iter()
        .map(|&n| DiscreteEstimator::new(model, h, n))
        .collect::<Result<Vec<_>>>()?;
    let sampler = PathSampler::new(model, h * n_max as f64, n_max)?;
    let per_rep = (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let dx = sampler.sample(theta, derive_seed(seed, i as u64)).increments();
            estimators.iter().map(|e| e.estimate_increments(&dx)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..n_list.len()).map(|j| per_rep.iter().map(|r| r[j]).collect()).collect())
}

pub const TABLE1_HEADER: &str = "H,T,scheme,n_reps,sample_mean,sample_variance,theoretical_variance";
pub const CONSISTENCY_HEADER: &str = "N,h,n_reps,sample_mean,sample_mse,theoretical_variance";

pub fn write_table1_csv<W: Write>(rows: &[ExperimentRow], mut out: W) -> Result<()> {
    writeln!(out, "{TABLE1_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.hurst, r.horizon, r.scheme, r.n_reps, r.sample_mean, r.sample_variance, r.theoretical_variance
        )?;
    }
    Ok(())
}

pub fn write_consistency_csv<W: Write>(rows: &[ConsistencyRow], mut out: W) -> Result<()> {
    writeln!(out, "{CONSISTENCY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.n, r.h, r.n_reps, r.sample_mean, r.sample_mse, r.theoretical_variance
        )?;
    }
    Ok(())
}

pub fn to_json<R: Serialize>(rows: &[R]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
