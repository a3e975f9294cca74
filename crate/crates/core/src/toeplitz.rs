//! Symmetric positive definite Toeplitz systems.
//!
//! The increment covariance on a regular grid is Toeplitz, so solves and
//! quadratic forms go through the Levinson recursion in `O(N^2)`. A dense
//! Cholesky factorization backs it up near singularity and doubles as the
//! reference implementation in tests.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::models::{increment_autocov, CovarianceModel};
use crate::scalar::{dot, max_abs, Real};

/// Reflection coefficients at or beyond this magnitude hand the solve to Cholesky.
const REFLECTION_GUARD: f64 = 1.0 - 1e-12;
/// Relative residual `||Tx - b||_inf / ||b||_inf` a Levinson solve must meet.
const RESIDUAL_TOL: f64 = 1e-8;

/// Symmetric Toeplitz matrix stored by its first row: `T[i][j] = first_row[|i-j|]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymToeplitz<T> {
    first_row: Vec<T>,
}

impl<T: Real> SymToeplitz<T> {
    pub fn new(first_row: Vec<T>) -> Result<Self> {
        if first_row.is_empty() {
            return Err(Error::InvalidArgument("Toeplitz matrix needs at least one entry".into()));
        }
        if first_row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("Toeplitz entries must be finite".into()));
        }
        Ok(SymToeplitz { first_row })
    }

    pub fn identity(n: usize) -> Self {
        let mut first_row = vec![T::zero(); n.max(1)];
        first_row[0] = T::one();
        SymToeplitz { first_row }
    }

    pub fn dim(&self) -> usize {
        self.first_row.len()
    }

    pub fn first_row(&self) -> &[T] {
        &self.first_row
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.first_row[i.abs_diff(j)]
    }

    /// Leading `n x n` block.
    pub fn leading(&self, n: usize) -> Self {
        SymToeplitz { first_row: self.first_row[..n.clamp(1, self.dim())].to_vec() }
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<T> {
        let n = self.dim();
        (0..n * n).map(|k| self.get(k / n, k % n)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let (left, right) = x.split_at(i);
                let mut acc = T::zero();
                for (k, &xj) in left.iter().rev().enumerate() {
                    acc += self.first_row[k + 1] * xj;
                }
                for (k, &xj) in right.iter().enumerate() {
                    acc += self.first_row[k] * xj;
                }
                acc
            })
            .collect()
    }

    fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "vector length {} does not match matrix dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `Gamma^(N)` for observations at `h, 2h, ..., Nh`.
pub fn build_gamma<T: Real>(model: &CovarianceModel<T>, h: T, n: usize) -> Result<SymToeplitz<T>> {
    let acov = increment_autocov(model, h, n)?;
    SymToeplitz::new(acov.gamma)
}

/// Outcome of a Levinson pass: either the recursion finished, or it hit the
/// reflection guard and the caller has to fall back.
enum Levinson<T> {
    Done(Vec<T>),
    Degenerate,
}

/// Levinson recursion for `T x = b`. `on_step(k, x)` sees the solution of the
/// leading `(k+1) x (k+1)` system after every extension.
fn levinson<T: Real>(t: &SymToeplitz<T>, b: &[T], mut on_step: impl FnMut(usize, &[T])) -> Levinson<T> {
    let n = t.dim();
    let t0 = t.first_row[0];
    if !(t0 > T::zero()) {
        return Levinson::Degenerate;
    }
    let guard = T::one() - T::tol(1.0 - REFLECTION_GUARD);
    let r: Vec<T> = t.first_row.iter().map(|&v| v / t0).collect();
    let b: Vec<T> = b.iter().map(|&v| v / t0).collect();

    let mut x = Vec::with_capacity(n);
    x.push(b[0]);
    on_step(0, &x);
    if n == 1 {
        return Levinson::Done(x);
    }
    let mut y = Vec::with_capacity(n);
    let mut alpha = -r[1];
    y.push(alpha);
    let mut beta = T::one();
    let mut scratch = Vec::with_capacity(n);
    for k in 1..n {
        if alpha.abs() >= guard {
            return Levinson::Degenerate;
        }
        beta = (T::one() - alpha * alpha) * beta;
        if !(beta > T::zero()) {
            return Levinson::Degenerate;
        }
        let mut acc = T::zero();
        for i in 0..k {
            acc += r[i + 1] * x[k - 1 - i];
        }
        let mu = (b[k] - acc) / beta;
        for i in 0..k {
            x[i] += mu * y[k - 1 - i];
        }
        x.push(mu);
        on_step(k, &x);
        if k < n - 1 {
            let mut acc = T::zero();
            for i in 0..k {
                acc += r[i + 1] * y[k - 1 - i];
            }
            alpha = -(r[k + 1] + acc) / beta;
            scratch.clear();
            scratch.extend((0..k).map(|i| y[i] + alpha * y[k - 1 - i]));
            y.clear();
            y.extend_from_slice(&scratch);
            y.push(alpha);
        }
    }
    Levinson::Done(x)
}

/// Plain Levinson solve with no fallback. A recursion that hits the
/// reflection guard is reported as [`Error::Singular`] at the failing order.
pub fn levinson_solve<T: Real>(t: &SymToeplitz<T>, rhs: &[T]) -> Result<Vec<T>> {
    t.check_len(rhs)?;
    let mut order = 0;
    match levinson(t, rhs, |k, _| order = k + 1) {
        Levinson::Done(x) => Ok(x),
        Levinson::Degenerate => Err(Error::Singular { pivot: order, value: t.first_row[0].f64() }),
    }
}

/// Solves `T x = rhs` for symmetric positive definite Toeplitz `T`.
///
/// Levinson recursion with a residual check; near-singular recursions and
/// residual failures are retried with dense Cholesky, whose failure is
/// reported as [`Error::Singular`].
pub fn solve_spd_toeplitz<T: Real>(t: &SymToeplitz<T>, rhs: &[T]) -> Result<Vec<T>> {
    t.check_len(rhs)?;
    if let Levinson::Done(x) = levinson(t, rhs, |_, _| {}) {
        let res: Vec<T> = t.matvec(&x).iter().zip(rhs).map(|(&a, &b)| a - b).collect();
        if max_abs(&res) <= T::tol(RESIDUAL_TOL) * max_abs(rhs) && x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    Cholesky::factor(&t.to_dense(), t.dim())?.solve(rhs)
}

/// `u' T^-1 v` via one solve and a dot product.
pub fn inv_quadratic_form<T: Real>(t: &SymToeplitz<T>, u: &[T], v: &[T]) -> Result<T> {
    t.check_len(u)?;
    let x = solve_spd_toeplitz(t, v)?;
    Ok(dot(u, &x))
}

/// `u_k' T_k^-1 u_k` for every leading block `k = 1..=N` in a single pass.
pub fn prefix_quadratic_forms<T: Real>(t: &SymToeplitz<T>, u: &[T]) -> Result<Vec<T>> {
    t.check_len(u)?;
    let mut forms = Vec::with_capacity(t.dim());
    if let Levinson::Done(x) = levinson(t, u, |k, x| forms.push(dot(&u[..=k], x))) {
        let res: Vec<T> = t.matvec(&x).iter().zip(u).map(|(&a, &b)| a - b).collect();
        if max_abs(&res) <= T::tol(RESIDUAL_TOL) * max_abs(u) {
            return Ok(forms);
        }
    }
    // T = L L' restricts to leading blocks, so the forms are partial sums of |L^-1 u|^2.
    let w = Cholesky::factor(&t.to_dense(), t.dim())?.forward(u)?;
    let mut acc = T::zero();
    Ok(w.iter()
        .map(|&wi| {
            acc += wi * wi;
            acc
        })
        .collect())
}

/// Dense lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors the row-major `n x n` matrix `a`; only the lower triangle is read.
    pub fn factor(a: &[T], n: usize) -> Result<Self> {
        if a.len() != n * n || n == 0 {
            return Err(Error::InvalidArgument(format!("expected {n}x{n} matrix, got {} entries", a.len())));
        }
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Singular { pivot: j, value: d.f64() });
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `L^-1 b`.
    pub fn forward(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::InvalidArgument(format!("rhs length {} != {n}", b.len())));
        }
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s = row.iter().zip(&y[..i]).fold(y[i], |s, (&l, &v)| s - l * v);
            y[i] = s / self.l[i * n + i];
        }
        Ok(y)
    }

    /// `A^-1 b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        let mut x = self.forward(b)?;
        for i in (0..n).rev() {
            let s = (i + 1..n).fold(x[i], |s, k| s - self.l[k * n + i] * x[k]);
            x[i] = s / self.l[i * n + i];
        }
        Ok(x)
    }

    /// `L x`; maps i.i.d. standard normals to a sample with covariance `A`.
    pub fn lower_mul(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        (0..n).map(|i| (0..=i).map(|k| self.l[i * n + k] * x[k]).sum()).collect()
    }
}

/// Circulant embedding of a symmetric Toeplitz matrix for `O(n log n)` products.
#[derive(Clone)]
pub struct ToeplitzFft<T: Real> {
    n: usize,
    m: usize,
    spectrum: Vec<Complex<T>>,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
}

impl<T: Real> std::fmt::Debug for ToeplitzFft<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzFft").field("n", &self.n).field("m", &self.m).finish()
    }
}

impl<T: Real> ToeplitzFft<T> {
    pub fn new(t: &SymToeplitz<T>) -> Self {
        let n = t.dim();
        let m = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(m);
        let ifft = planner.plan_fft_inverse(m);
        let mut spectrum = vec![Complex::new(T::zero(), T::zero()); m];
        for (j, &c) in t.first_row.iter().enumerate() {
            spectrum[j].re = c;
            if j > 0 {
                spectrum[m - j].re = c;
            }
        }
        fft.process(&mut spectrum);
        let scale = T::idx(m).recip();
        for s in spectrum.iter_mut() {
            *s *= scale;
        }
        ToeplitzFft { n, m, spectrum, fft, ifft }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.m];
        for (b, &v) in buf.iter_mut().zip(x) {
            b.re = v;
        }
        self.fft.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= *s;
        }
        self.ifft.process(&mut buf);
        buf[..self.n].iter().map(|c| c.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(t: &SymToeplitz<f64>, b: &[f64]) -> Vec<f64> {
        Cholesky::factor(&t.to_dense(), t.dim()).unwrap().solve(b).unwrap()
    }

    #[test]
    fn build_gamma_examples() {
        let w = build_gamma(&CovarianceModel::<f64>::Wiener, 0.5, 3).unwrap();
        assert_eq!(w.first_row(), &[0.5, 0.0, 0.0]);
        let f = build_gamma(&CovarianceModel::fbm(0.75).unwrap(), 1.0, 2).unwrap();
        assert_relative_eq!(f.first_row()[0], 1.0);
        assert_relative_eq!(f.first_row()[1], 0.4142136, epsilon = 1e-7);
        let fw = build_gamma(&CovarianceModel::fbm_plus_wiener(0.75).unwrap(), 1.0, 2).unwrap();
        assert_relative_eq!(fw.first_row()[0], 2.0);
        assert_relative_eq!(fw.first_row()[1], 0.4142136, epsilon = 1e-7);
        assert!(build_gamma(&CovarianceModel::<f64>::Wiener, 1.0, 0).is_err());
    }

    #[test]
    fn identity_solve() {
        let x = solve_spd_toeplitz(&SymToeplitz::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_inverse() {
        let g1 = (2f64.powf(1.5) - 2.0) / 2.0;
        let t = SymToeplitz::new(vec![1.0, g1]).unwrap();
        let x = solve_spd_toeplitz(&t, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 1.0 / (1.0 + g1), epsilon = 1e-15);
        assert_relative_eq!(x[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-14);
        let q = inv_quadratic_form(&t, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(q, 2.0 / (1.0 + g1), epsilon = 1e-15);
        assert_relative_eq!(q, std::f64::consts::SQRT_2, epsilon = 1e-14);
        assert_relative_eq!(inv_quadratic_form(&SymToeplitz::identity(3), &[1.0; 3], &[1.0; 3]).unwrap(), 3.0);
    }

    #[test]
    fn levinson_matches_cholesky_fbm64() {
        let t = build_gamma(&CovarianceModel::fbm(0.7).unwrap(), 1.0, 64).unwrap();
        let b = vec![1.0; 64];
        let x = solve_spd_toeplitz(&t, &b).unwrap();
        let y = dense_solve(&t, &b);
        for (a, c) in x.iter().zip(&y) {
            assert_relative_eq!(a, c, max_relative = 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        // rank one: all-ones
        let t = SymToeplitz::new(vec![1.0; 4]).unwrap();
        assert!(matches!(solve_spd_toeplitz(&t, &[1.0, 0.0, 0.0, 1.0]), Err(Error::Singular { .. })));
        let t = SymToeplitz::new(vec![1.0, 2.0, 0.0]).unwrap();
        assert!(matches!(solve_spd_toeplitz(&t, &[1.0; 3]), Err(Error::Singular { .. })));
        assert!(solve_spd_toeplitz(&SymToeplitz::<f64>::identity(3), &[1.0; 2]).is_err());
    }

    #[test]
    fn near_singular_falls_back_to_cholesky() {
        // reflection coefficient exactly at the guard: r1 = 1 - 1e-13
        let r1 = 1.0 - 1e-13;
        let t = SymToeplitz::new(vec![1.0, r1]).unwrap();
        let x = solve_spd_toeplitz(&t, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(x[0], 1.0 / (1.0 + r1), max_relative = 1e-6);
    }

    #[test]
    fn prefix_forms_match_individual_solves() {
        for model in [
            CovarianceModel::fbm(0.3).unwrap(),
            CovarianceModel::fbm_plus_wiener(0.8).unwrap(),
            CovarianceModel::two_fbm(0.2, 0.9).unwrap(),
        ] {
            let t = build_gamma(&model, 0.1, 40).unwrap();
            let u = vec![0.1; 40];
            let forms = prefix_quadratic_forms(&t, &u).unwrap();
            for k in [1, 2, 7, 40] {
                let lead = t.leading(k);
                let q = inv_quadratic_form(&lead, &u[..k], &u[..k]).unwrap();
                assert_relative_eq!(forms[k - 1], q, max_relative = 1e-11);
            }
        }
    }

    #[test]
    fn fft_product_matches_direct() {
        let t = build_gamma(&CovarianceModel::fbm(0.8).unwrap(), 0.01, 300).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let direct = t.matvec(&x);
        let fast = ToeplitzFft::new(&t).apply(&x);
        let scale = max_abs(&direct);
        for (a, b) in direct.iter().zip(&fast) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
        let dense = t.to_dense();
        for i in [0, 17, 299] {
            let row: f64 = (0..300).map(|j| dense[i * 300 + j] * x[j]).sum();
            assert_relative_eq!(row, direct[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let model = CovarianceModel::<f32>::fbm(0.7).unwrap();
        let t = build_gamma(&model, 1.0f32, 16).unwrap();
        let x = solve_spd_toeplitz(&t, &[1.0f32; 16]).unwrap();
        let t64 = build_gamma(&CovarianceModel::fbm(0.7).unwrap(), 1.0, 16).unwrap();
        let y = solve_spd_toeplitz(&t64, &[1.0; 16]).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_relative_eq!(*a as f64, *b, max_relative = 1e-4);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

        #[test]
        fn cauchy_schwarz_lower_bound(hurst in 0.05f64..0.95, n in 1usize..120, h in 0.01f64..5.0, seed in 0u64..1000) {
            let t = build_gamma(&CovarianceModel::fbm_plus_wiener(hurst).unwrap(), h, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q_inv = inv_quadratic_form(&t, &x, &x).unwrap();
            let q = dot(&x, &t.matvec(&x));
            let norm2 = dot(&x, &x);
            proptest::prop_assert!(q_inv > 0.0);
            proptest::prop_assert!(q_inv * q >= norm2 * norm2 * (1.0 - 1e-12));
        }

        #[test]
        fn levinson_agrees_with_cholesky(hurst in 0.05f64..0.95, n in 2usize..160, seed in 0u64..1000) {
            let t = build_gamma(&CovarianceModel::fbm(hurst).unwrap(), 1.0, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_spd_toeplitz(&t, &b).unwrap();
            let y = dense_solve(&t, &b);
            let scale = max_abs(&y);
            for (a, c) in x.iter().zip(&y) {
                proptest::prop_assert!((a - c).abs() <= 1e-9 * scale);
            }
        }
    }
}
