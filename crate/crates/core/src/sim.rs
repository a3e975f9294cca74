//! Exact simulation of `X_t = theta t + B_t` on regular grids.
//!
//! Fractional Gaussian noise is drawn by circulant embedding: the
//! autocovariance is extended to a circulant of power-of-two length
//! `m >= 2n`, whose eigenvalues come from one FFT; a complex Gaussian vector
//! scaled by their square roots and transformed once more has real part with
//! exactly the target covariance.
//!
//! Randomness: ChaCha8 (`rand_chacha` 0.9.0) keyed by a 64-bit seed, with one
//! ChaCha stream per independent component; standard normals from the
//! `rand_distr` 0.5.1 ziggurat. Both versions are pinned so a seed maps to the
//! same path on every platform.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::discrete::SamplePath;
use crate::error::{Error, Result};
use crate::models::{fgn_autocov_unit, increment_autocov, Component, CovarianceModel};
use crate::scalar::Real;
use crate::toeplitz::Cholesky;

/// Circulant eigenvalues below this (for unit-variance noise) are a covariance bug.
const EIGEN_FLOOR: f64 = -1e-9;
/// Largest size accepted by the Cholesky reference sampler.
pub const CHOLESKY_MAX: usize = 512;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of sub-experiment `index` under `base`; depends on nothing else.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(base ^ mix64(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Generator for component `stream` of the path keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig<T> {
    pub model: CovarianceModel<T>,
    pub theta: T,
    pub horizon: T,
    pub n_steps: usize,
    pub seed: u64,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidArgument("theta must be finite".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> T {
        self.horizon / T::idx(self.n_steps)
    }
}

/// Circulant-embedding sampler of `n` fGn increments with step `h`.
#[derive(Clone)]
pub struct FgnSampler<T: Real> {
    n: usize,
    scale: T,
    sqrt_eigen: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for FgnSampler<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnSampler").field("n", &self.n).field("m", &self.sqrt_eigen.len()).finish()
    }
}

impl<T: Real> FgnSampler<T> {
    pub fn new(hurst: T, n: usize, step: T) -> Result<Self> {
        if !(hurst > T::zero() && hurst < T::one()) {
            return Err(Error::InvalidHurst(hurst.f64()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("need at least one increment".into()));
        }
        if !(step > T::zero()) || !step.is_finite() {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        let m = (2 * n).next_power_of_two();
        let mut circ = vec![Complex::new(T::zero(), T::zero()); m];
        for j in 0..=m / 2 {
            let g = fgn_autocov_unit(hurst, j);
            circ[j].re = g;
            if j > 0 && j < m / 2 {
                circ[m - j].re = g;
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        fft.process(&mut circ);
        let floor = T::lit(EIGEN_FLOOR);
        let mut sqrt_eigen = Vec::with_capacity(m);
        let inv_m = T::idx(m).recip();
        for (index, c) in circ.iter().enumerate() {
            let lambda = c.re;
            if lambda < floor {
                return Err(Error::NegativeEigenvalue { index, value: lambda.f64() });
            }
            sqrt_eigen.push((lambda.max(T::zero()) * inv_m).sqrt());
        }
        Ok(FgnSampler { n, scale: step.powf(hurst), sqrt_eigen, fft })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<T> {
        let mut buf: Vec<Complex<T>> = self
            .sqrt_eigen
            .iter()
            .map(|&s| {
                let re: T = normal(rng);
                let im: T = normal(rng);
                Complex::new(s * re, s * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf[..self.n].iter().map(|c| c.re * self.scale).collect()
    }
}

/// `n` fGn increments of step `h`, deterministic in `seed`.
pub fn simulate_fgn<T: Real>(hurst: T, n: usize, h: T, seed: u64) -> Result<Vec<T>> {
    let sampler = FgnSampler::new(hurst, n, h)?;
    Ok(sampler.sample(&mut stream_rng(seed, 0)))
}

/// Reference sampler: `L xi` with `L L'` the dense fGn covariance. `n <= 512`.
#[derive(Debug, Clone)]
pub struct CholeskyFgnSampler<T> {
    chol: Cholesky<T>,
}

impl<T: Real> CholeskyFgnSampler<T> {
    pub fn new(hurst: T, n: usize, h: T) -> Result<Self> {
        if n > CHOLESKY_MAX {
            return Err(Error::InvalidArgument(format!("Cholesky sampler is limited to n <= {CHOLESKY_MAX}")));
        }
        let model = CovarianceModel::fbm(hurst)?;
        let gamma = increment_autocov(&model, h, n)?.gamma;
        let dense: Vec<T> = (0..n * n).map(|k| gamma[(k / n).abs_diff(k % n)]).collect();
        Ok(CholeskyFgnSampler { chol: Cholesky::factor(&dense, n)? })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<T> {
        let xi: Vec<T> = (0..self.chol.dim()).map(|_| normal(rng)).collect();
        self.chol.lower_mul(&xi)
    }
}

pub fn simulate_fgn_cholesky<T: Real>(hurst: T, n: usize, h: T, seed: u64) -> Result<Vec<T>> {
    Ok(CholeskyFgnSampler::new(hurst, n, h)?.sample(&mut stream_rng(seed, 0)))
}

enum ComponentSampler<T: Real> {
    White(T),
    Fgn(FgnSampler<T>),
}

/// Reusable sampler for paths of one model on one grid.
pub struct PathSampler<T: Real> {
    step: T,
    n: usize,
    components: Vec<ComponentSampler<T>>,
}

impl<T: Real> PathSampler<T> {
    pub fn new(model: &CovarianceModel<T>, horizon: T, n_steps: usize) -> Result<Self> {
        let cfg = SimConfig { model: *model, theta: T::zero(), horizon, n_steps, seed: 0 };
        cfg.validate()?;
        let step = cfg.step();
        let components = model
            .components()
            .into_iter()
            .map(|c| match c {
                Component::White => Ok(ComponentSampler::White(step.sqrt())),
                Component::Fbm(h) => FgnSampler::new(h, n_steps, step).map(ComponentSampler::Fgn),
            })
            .collect::<Result<_>>()?;
        Ok(PathSampler { step, n: n_steps, components })
    }

    /// Noise increments; component `i` draws from ChaCha stream `i` of `seed`.
    pub fn noise(&self, seed: u64) -> Vec<T> {
        let mut total = vec![T::zero(); self.n];
        for (i, comp) in self.components.iter().enumerate() {
            let mut rng = stream_rng(seed, i as u64);
            match comp {
                ComponentSampler::White(sd) => {
                    for v in total.iter_mut() {
                        *v += *sd * normal::<T>(&mut rng);
                    }
                }
                ComponentSampler::Fgn(s) => {
                    for (v, d) in total.iter_mut().zip(s.sample(&mut rng)) {
                        *v += d;
                    }
                }
            }
        }
        total
    }

    pub fn sample(&self, theta: T, seed: u64) -> SamplePath<T> {
        let noise = self.noise(seed);
        let mut values = Vec::with_capacity(self.n + 1);
        let mut b = T::zero();
        values.push(T::zero());
        for (k, d) in noise.into_iter().enumerate() {
            b += d;
            values.push(theta * T::idx(k + 1) * self.step + b);
        }
        SamplePath::regular(self.step, values).expect("simulated path is well formed")
    }
}

pub fn simulate_path<T: Real>(cfg: &SimConfig<T>) -> Result<SamplePath<T>> {
    cfg.validate()?;
    Ok(PathSampler::new(&cfg.model, cfg.horizon, cfg.n_steps)?.sample(cfg.theta, cfg.seed))
}

/// Path CSV: header `t,x`, 17 significant digits per value.
pub fn write_path_csv<T: Real, W: Write>(path: &SamplePath<T>, out: W) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "t,x")?;
    for (t, x) in path.times().iter().zip(path.values()) {
        writeln!(w, "{:.16e},{:.16e}", t.f64(), x.f64())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_path_csv<T: Real, R: Read>(input: R) -> Result<SamplePath<T>> {
    let mut lines = BufReader::new(input).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "t,x" => {}
        Some(Ok(h)) => return Err(Error::Format(format!("expected header `t,x`, got {h:?}"))),
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Format("empty path file".into())),
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: expected `t,x`, got {line:?}", lineno + 2));
        let (t, x) = line.split_once(',').ok_or_else(bad)?;
        let t: f64 = t.trim().parse().map_err(|_| bad())?;
        let x: f64 = x.trim().parse().map_err(|_| bad())?;
        times.push(T::lit(t));
        values.push(T::lit(x));
    }
    SamplePath::new(times, values)
}
