use driftmle::continuous::{estimate_continuous, solve_weight, weighted_increment_sum, NystromOptions};
use driftmle::discrete::{estimate_discrete, DiscreteEstimator};
use driftmle::experiment::discrete_estimates;
use driftmle::models::CovarianceModel;
use driftmle::sim::{derive_seed, PathSampler};
use driftmle::stats::{chi_square_variance_band, correlation, covariance, mean, variance};
use driftmle::{Model32, Path32};
use rayon::prelude::*;

const REPS: usize = 2000;

fn within_sd(x: f64, target: f64, sd: f64, k: f64) -> bool {
    (x - target).abs() <= k * sd
}

#[test]
fn mixed_model_endpoint_moments() {
    let model = CovarianceModel::fbm_plus_wiener(0.6).unwrap();
    let sampler = PathSampler::new(&model, 3.0, 300).unwrap();
    let ends: Vec<(f64, f64)> = (0..REPS)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(2.0, derive_seed(11, i as u64));
            (p.values()[100], p.values()[300])
        })
        .collect();
    let x1: Vec<f64> = ends.iter().map(|e| e.0 - 2.0).collect();
    let xt: Vec<f64> = ends.iter().map(|e| e.1).collect();
    let (lo, hi) = chi_square_variance_band(REPS, 0.99);
    let r = variance(&x1) / 2.0;
    assert!(r >= lo && r <= hi, "Var X_1 / 2 = {r}");
    let var_t = 3.0 + 3f64.powf(1.2);
    assert!(within_sd(mean(&xt), 6.0, (var_t / REPS as f64).sqrt(), 4.0), "mean X_3 = {}", mean(&xt));
}

#[test]
fn wiener_marginal_variances_grow_linearly() {
    let model = CovarianceModel::wiener();
    let sampler = PathSampler::new(&model, 2.0, 8).unwrap();
    let paths: Vec<Vec<f64>> = (0..REPS).map(|i| sampler.sample(0.0, derive_seed(12, i as u64)).values().to_vec()).collect();
    let (lo, hi) = chi_square_variance_band(REPS, 0.999);
    for k in 1..=8 {
        let col: Vec<f64> = paths.iter().map(|p| p[k]).collect();
        let r = variance(&col) / (0.25 * k as f64);
        assert!(r >= lo && r <= hi, "k={k}: ratio {r}");
    }
}

#[test]
fn discrete_estimator_is_unbiased_with_stated_variance() {
    let cases = [
        CovarianceModel::fbm(0.3).unwrap(),
        CovarianceModel::fbm(0.85).unwrap(),
        CovarianceModel::two_fbm(0.3, 0.8).unwrap(),
        CovarianceModel::fbm_plus_wiener(0.7).unwrap(),
    ];
    let (lo, hi) = chi_square_variance_band(REPS, 0.99);
    for (i, model) in cases.iter().enumerate() {
        let est = discrete_estimates(model, 0.5, &[64], -1.5, REPS, 20 + i as u64).unwrap().remove(0);
        let v = DiscreteEstimator::new(model, 0.5, 64).unwrap().variance();
        assert!(within_sd(mean(&est), -1.5, (v / REPS as f64).sqrt(), 4.0), "{model}: mean {}", mean(&est));
        let r = variance(&est) / v;
        assert!(r >= lo && r <= hi, "{model}: variance ratio {r}");
    }
}

#[test]
fn discrete_estimator_increments_are_uncorrelated() {
    let model = CovarianceModel::fbm(0.75).unwrap();
    let est = discrete_estimates(&model, 1.0, &[50, 100, 200, 400], 0.0, REPS, 31).unwrap();
    let early: Vec<f64> = est[1].iter().zip(&est[0]).map(|(a, b)| a - b).collect();
    let late: Vec<f64> = est[3].iter().zip(&est[2]).map(|(a, b)| a - b).collect();
    let r = correlation(&late, &early);
    assert!(r.abs() <= 4.0 / (REPS as f64).sqrt(), "r = {r}");
    // the later estimate is uncorrelated with the step back to the earlier one
    let back: Vec<f64> = est[1].iter().zip(&est[3]).map(|(a, b)| a - b).collect();
    let r = correlation(&back, &est[3]);
    assert!(r.abs() <= 4.0 / (REPS as f64).sqrt(), "r = {r}");
}

#[test]
fn discrete_estimator_covariance_is_variance_of_longer_sample() {
    let model = CovarianceModel::fbm_plus_wiener(0.8).unwrap();
    let est = discrete_estimates(&model, 1.0, &[30, 300], 1.0, REPS, 32).unwrap();
    let v2 = DiscreteEstimator::new(&model, 1.0, 30).unwrap().variance();
    let v3 = DiscreteEstimator::new(&model, 1.0, 300).unwrap().variance();
    let c = covariance(&est[0], &est[1]);
    let se = ((v2 * v3 + v3 * v3) / REPS as f64).sqrt();
    assert!(within_sd(c, v3, se, 4.0), "cov {c} vs {v3} (se {se})");
}

#[test]
fn continuous_estimator_matches_weight_variance() {
    let model = CovarianceModel::fbm_plus_wiener(0.8).unwrap();
    let ht = solve_weight(&model, 2.0, &NystromOptions::default()).unwrap();
    let sampler = PathSampler::new(&model, 2.0, 2000).unwrap();
    let est: Vec<f64> = (0..REPS)
        .into_par_iter()
        .map(|i| estimate_continuous(&sampler.sample(0.7, derive_seed(40, i as u64)), &ht, &model).unwrap().theta_hat)
        .collect();
    let v = ht.variance();
    assert!(within_sd(mean(&est), 0.7, (v / REPS as f64).sqrt(), 4.0));
    let (lo, hi) = chi_square_variance_band(REPS, 0.99);
    let r = variance(&est) / v;
    assert!(r >= lo && r <= hi, "ratio {r}");
}

#[test]
fn pure_fbm_continuous_estimator_uses_closed_form() {
    let model = CovarianceModel::fbm(0.7).unwrap();
    let ht = solve_weight(&model, 1.0, &NystromOptions::default()).unwrap();
    let sampler = PathSampler::new(&model, 1.0, 4096).unwrap();
    let est: Vec<f64> = (0..REPS)
        .into_par_iter()
        .map(|i| estimate_continuous(&sampler.sample(1.0, derive_seed(41, i as u64)), &ht, &model).unwrap().theta_hat)
        .collect();
    let (lo, hi) = chi_square_variance_band(REPS, 0.99);
    let r = variance(&est) / ht.variance();
    assert!(r >= lo && r <= hi, "ratio {r}");
}

#[test]
fn weighted_integral_covariance_with_endpoint() {
    // Cov(B_T, int h dB) = int 1 (Gamma h) = T for the weight with Gamma h = 1
    let model = CovarianceModel::fbm_plus_wiener(0.7).unwrap();
    let horizon = 3.0;
    let ht = solve_weight(&model, horizon, &NystromOptions::default()).unwrap();
    let sampler = PathSampler::new(&model, horizon, 3000).unwrap();
    let pairs: Vec<(f64, f64)> = (0..REPS)
        .into_par_iter()
        .map(|i| {
            let p = sampler.sample(0.0, derive_seed(50, i as u64));
            (*p.values().last().unwrap(), weighted_increment_sum(&p, &ht).unwrap())
        })
        .collect();
    let (b, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let c = covariance(&b, &w);
    let var_b = horizon + horizon.powf(1.4);
    let se = ((var_b * ht.integral_h + horizon * horizon) / REPS as f64).sqrt();
    assert!(within_sd(c, horizon, se, 4.0), "cov {c}, se {se}");
}

#[test]
fn continuous_information_dominates_discrete() {
    let opts = NystromOptions::default();
    for hurst in [0.65, 0.85] {
        let model = CovarianceModel::fbm_plus_wiener(hurst).unwrap();
        for horizon in [2.0, 5.0] {
            let ht = solve_weight(&model, horizon, &opts).unwrap();
            for per_unit in [1, 4, 16] {
                let n = per_unit * horizon as usize;
                let info = DiscreteEstimator::new(&model, horizon / n as f64, n).unwrap().information();
                assert!(ht.integral_h >= info * 0.995, "H={hurst} T={horizon} n={n}");
            }
        }
    }
}

#[test]
fn single_precision_agrees_with_double() {
    let model = CovarianceModel::fbm(0.7).unwrap();
    let path = PathSampler::new(&model, 10.0, 200).unwrap().sample(1.0, 60);
    let single = Path32::regular(0.05, path.values().iter().map(|&v| v as f32).collect()).unwrap();
    let m32 = Model32::fbm(0.7).unwrap();
    let a = estimate_discrete(&path, &model).unwrap();
    let b = estimate_discrete(&single, &m32).unwrap();
    assert!((a.theta_hat - b.theta_hat as f64).abs() < 1e-3 * (1.0 + a.theta_hat.abs()));
    assert!((a.theoretical_variance - b.theoretical_variance as f64).abs() < 1e-4 * a.theoretical_variance);
}
