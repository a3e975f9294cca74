//! Covariance structure of the supported noise processes.
//!
//! A [`CovarianceModel`] is a sum of independent components, each either a
//! standard Wiener process or a fractional Brownian motion. The discrete
//! scheme needs the increment autocovariance on a regular grid; the
//! continuous scheme needs the mixed-derivative kernel
//! `K(t) = sum H(2H-1)|t|^(2H-2)` over the fBm components, with any Wiener
//! component carried separately as an identity term.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Noise process `B` in `X_t = theta t + B_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceModel<T> {
    Wiener,
    Fbm { hurst: T },
    FbmPlusWiener { hurst: T },
    TwoFbm { hurst1: T, hurst2: T },
}

/// One independent summand of a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component<T> {
    White,
    Fbm(T),
}

fn check_hurst<T: Real>(h: T) -> Result<T> {
    if h > T::zero() && h < T::one() {
        Ok(h)
    } else {
        Err(Error::InvalidHurst(h.f64()))
    }
}

impl<T: Real> CovarianceModel<T> {
    pub fn wiener() -> Self {
        CovarianceModel::Wiener
    }

    /// fBm with Hurst index `hurst`; `hurst == 1/2` is Brownian motion and is
    /// normalized to [`CovarianceModel::Wiener`].
    pub fn fbm(hurst: T) -> Result<Self> {
        let hurst = check_hurst(hurst)?;
        if hurst == T::lit(0.5) {
            Ok(CovarianceModel::Wiener)
        } else {
            Ok(CovarianceModel::Fbm { hurst })
        }
    }

    pub fn fbm_plus_wiener(hurst: T) -> Result<Self> {
        Ok(CovarianceModel::FbmPlusWiener { hurst: check_hurst(hurst)? })
    }

    pub fn two_fbm(hurst1: T, hurst2: T) -> Result<Self> {
        Ok(CovarianceModel::TwoFbm { hurst1: check_hurst(hurst1)?, hurst2: check_hurst(hurst2)? })
    }

    /// Re-checks the Hurst range; useful for values built with struct literals.
    pub fn validate(&self) -> Result<()> {
        for c in self.components() {
            if let Component::Fbm(h) = c {
                check_hurst(h)?;
            }
        }
        Ok(())
    }

    pub fn components(&self) -> Vec<Component<T>> {
        match *self {
            CovarianceModel::Wiener => vec![Component::White],
            CovarianceModel::Fbm { hurst } => vec![Component::Fbm(hurst)],
            CovarianceModel::FbmPlusWiener { hurst } => vec![Component::Fbm(hurst), Component::White],
            CovarianceModel::TwoFbm { hurst1, hurst2 } => {
                vec![Component::Fbm(hurst1), Component::Fbm(hurst2)]
            }
        }
    }

    pub fn has_white(&self) -> bool {
        matches!(self, CovarianceModel::Wiener | CovarianceModel::FbmPlusWiener { .. })
    }

    fn fbm_hursts(&self) -> impl Iterator<Item = T> {
        self.components().into_iter().filter_map(|c| match c {
            Component::Fbm(h) => Some(h),
            Component::White => None,
        })
    }

    /// Continuous-time operations need an integrable, nonnegative kernel,
    /// i.e. every fBm component must have `H > 1/2`.
    pub fn require_continuous(&self) -> Result<()> {
        self.validate()?;
        match self.fbm_hursts().find(|&h| h <= T::lit(0.5)) {
            Some(h) => Err(Error::UnsupportedModel(format!(
                "{self}: continuous-time kernel requires every fBm component to have H > 1/2 (got H = {h})"
            ))),
            None => Ok(()),
        }
    }

    /// `R(s, t) = E B_s B_t`.
    pub fn covariance(&self, s: T, t: T) -> T {
        let half = T::lit(0.5);
        self.components()
            .into_iter()
            .map(|c| match c {
                Component::White => s.min(t),
                Component::Fbm(h) => {
                    let p = h + h;
                    half * (s.powf(p) + t.powf(p) - (t - s).abs().powf(p))
                }
            })
            .sum()
    }

    /// `Cov(B_b - B_a, B_d - B_c)` for arbitrary intervals `[a,b]`, `[c,d]`.
    pub fn increment_covariance(&self, a: T, b: T, c: T, d: T) -> T {
        let half = T::lit(0.5);
        self.components()
            .into_iter()
            .map(|comp| {
                let p = match comp {
                    Component::White => T::one(),
                    Component::Fbm(h) => h + h,
                };
                let f = |x: T| x.abs().powf(p);
                half * (f(b - c) + f(a - d) - f(b - d) - f(a - c))
            })
            .sum()
    }
}

impl<T: Real> fmt::Display for CovarianceModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceModel::Wiener => write!(f, "wiener"),
            CovarianceModel::Fbm { hurst } => write!(f, "fbm:{hurst}"),
            CovarianceModel::FbmPlusWiener { hurst } => write!(f, "fbm:{hurst}+wiener"),
            CovarianceModel::TwoFbm { hurst1, hurst2 } => write!(f, "fbm:{hurst1}+fbm:{hurst2}"),
        }
    }
}

impl<T: Real> FromStr for CovarianceModel<T> {
    type Err = Error;

    /// Grammar: `wiener`, `fbm:H`, `fbm:H+wiener`, `fbm:H1+fbm:H2`.
    /// Terms are case-insensitive and may appear in either order.
    fn from_str(input: &str) -> Result<Self> {
        let syntax = |reason: &str| Error::ModelSyntax { input: input.to_string(), reason: reason.to_string() };
        let mut terms = Vec::new();
        for raw in input.split('+') {
            let term = raw.trim().to_ascii_lowercase();
            if term == "wiener" {
                terms.push(Component::White);
            } else if let Some(h) = term.strip_prefix("fbm:") {
                let h: f64 = h.trim().parse().map_err(|_| syntax("Hurst index is not a decimal number"))?;
                if !(h > 0.0 && h < 1.0) {
                    return Err(Error::InvalidHurst(h));
                }
                terms.push(Component::Fbm(T::lit(h)));
            } else {
                return Err(syntax("expected `wiener` or `fbm:H`"));
            }
        }
        match terms.as_slice() {
            [Component::White] => Ok(CovarianceModel::Wiener),
            [Component::Fbm(h)] => CovarianceModel::fbm(*h),
            [Component::Fbm(h), Component::White] | [Component::White, Component::Fbm(h)] => {
                CovarianceModel::fbm_plus_wiener(*h)
            }
            [Component::Fbm(h1), Component::Fbm(h2)] => CovarianceModel::two_fbm(*h1, *h2),
            _ => Err(syntax("supported forms: wiener, fbm:H, fbm:H+wiener, fbm:H1+fbm:H2")),
        }
    }
}

impl<T: Real> Serialize for CovarianceModel<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Increment autocovariance `gamma(k) = E (B_{(k+1)h} - B_{kh}) B_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementAutocov<T> {
    pub step: T,
    pub gamma: Vec<T>,
}

/// Unit-step fractional Gaussian noise autocovariance
/// `((k+1)^2H - 2k^2H + |k-1|^2H) / 2`.
///
/// For large lags the second difference loses every significant digit, so
/// beyond `k = 16` it is evaluated from the binomial expansion
/// `k^2H * sum_{j>=1} C(2H, 2j) k^(-2j)`.
pub fn fgn_autocov_unit<T: Real>(hurst: T, k: usize) -> T {
    let p = hurst + hurst;
    if k < 16 {
        let kf = T::idx(k);
        let prev = if k == 0 { T::one() } else { T::idx(k - 1) };
        return T::lit(0.5) * ((kf + T::one()).powf(p) - T::lit(2.0) * kf.powf(p) + prev.powf(p));
    }
    let kf = T::idx(k);
    let x2 = (kf * kf).recip();
    let mut coef = T::one();
    let mut pow = T::one();
    let mut sum = T::zero();
    for j in 1..=40 {
        let m = 2 * j;
        coef = coef * (p - T::idx(m - 2)) / T::idx(m - 1) * (p - T::idx(m - 1)) / T::idx(m);
        pow *= x2;
        let term = coef * pow;
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() * T::lit(1e-2) {
            break;
        }
    }
    kf.powf(p) * sum
}

/// `gamma(0..n)` on a grid of step `h`.
///
/// Components are independent, so the autocovariance is the sum of the
/// component autocovariances.
pub fn increment_autocov<T: Real>(model: &CovarianceModel<T>, h: T, n: usize) -> Result<IncrementAutocov<T>> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("autocovariance length must be at least 1".into()));
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("grid step must be positive, got {h}")));
    }
    let mut gamma = vec![T::zero(); n];
    for c in model.components() {
        match c {
            Component::White => gamma[0] += h,
            Component::Fbm(hurst) => {
                let scale = h.powf(hurst + hurst);
                for (k, g) in gamma.iter_mut().enumerate() {
                    *g += scale * fgn_autocov_unit(hurst, k);
                }
            }
        }
    }
    Ok(IncrementAutocov { step: h, gamma })
}

/// Antiderivative of the kernel: `sum H sign(u) |u|^(2H-1)`.
pub(crate) fn kernel_antiderivative<T: Real>(model: &CovarianceModel<T>, u: T) -> T {
    model
        .fbm_hursts()
        .map(|h| h * u.signum() * u.abs().powf(h + h - T::one()))
        .sum()
}

/// Non-white part of the kernel, `K(t) = sum H(2H-1)|t|^(2H-2)` over fBm
/// components. The Wiener component contributes the identity, not a density.
pub fn kernel_k<T: Real>(model: &CovarianceModel<T>, t: T) -> Result<T> {
    model.require_continuous()?;
    if t == T::zero() {
        return Err(Error::InvalidArgument("kernel K is singular at t = 0; use cell integrals".into()));
    }
    Ok(model
        .fbm_hursts()
        .map(|h| h * (h + h - T::one()) * t.abs().powf(h + h - T::lit(2.0)))
        .sum())
}

/// `hi^p - lo^p` for `0 <= lo < hi` without cancellation when `hi - lo << lo`.
fn pow_diff<T: Real>(lo: T, hi: T, p: T) -> T {
    if lo == T::zero() {
        hi.powf(p)
    } else {
        lo.powf(p) * (p * ((hi - lo) / lo).ln_1p()).exp_m1()
    }
}

/// `int_a^b K(u) du`, exact even when `[a,b]` contains the singularity.
pub fn kernel_cell_integral<T: Real>(model: &CovarianceModel<T>, a: T, b: T) -> Result<T> {
    model.require_continuous()?;
    if !(a < b) {
        return Err(Error::InvalidArgument(format!("cell integral needs a < b, got [{a}, {b}]")));
    }
    Ok(cell_integral_unchecked(model, a, b))
}

pub(crate) fn cell_integral_unchecked<T: Real>(model: &CovarianceModel<T>, a: T, b: T) -> T {
    model
        .fbm_hursts()
        .map(|h| {
            let p = h + h - T::one();
            let piece = if a >= T::zero() {
                pow_diff(a, b, p)
            } else if b <= T::zero() {
                pow_diff(-b, -a, p)
            } else {
                (-a).powf(p) + b.powf(p)
            };
            h * piece
        })
        .sum()
}

/// `||K||_{L1[-T,T]} = 2 sum H T^(2H-1)`, the a-priori bound on the operator norm.
pub fn kernel_l1_norm<T: Real>(model: &CovarianceModel<T>, horizon: T) -> T {
    T::lit(2.0) * kernel_antiderivative(model, horizon)
}
