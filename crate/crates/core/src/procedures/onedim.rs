//! Univariate interpolators: weight schemes, the local constant smoother and
//! interpolating polynomial splines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::complete_qr;
use crate::scalar::{count, lit, Scalar};

/// Weight function `K: [0,1] -> [0,1]` blending the two neighbouring nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKernel {
    /// `1{z < 1/2}`, nearest-neighbour interpolation.
    Constant,
    /// `1 - z`
    Linear,
    /// `1 - z^2`
    Quadratic,
    /// `cos(pi z / 2)`
    Cosine,
}

impl WeightKernel {
    pub const ALL: [WeightKernel; 4] = [Self::Constant, Self::Linear, Self::Quadratic, Self::Cosine];

    pub fn eval<T: Scalar>(self, z: T) -> T {
        match self {
            Self::Constant => {
                if z < lit(0.5) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::Linear => T::one() - z,
            Self::Quadratic => T::one() - z * z,
            Self::Cosine => (T::frac_pi_2() * z).cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Linear => "linear",
            Self::Quadratic => "quadratic",
            Self::Cosine => "cosine",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

pub(crate) fn check_nodes<T: Scalar>(nodes: &[T], a: T, b: T) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("need at least one node".into()));
    }
    if a >= b {
        return Err(Error::InvalidArgument(format!("interval [{a}, {b}] is empty")));
    }
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("nodes must be sorted and distinct".into()));
    }
    if nodes[0] < a || nodes[nodes.len() - 1] > b {
        return Err(Error::InvalidArgument(format!("nodes must lie in [{a}, {b}]")));
    }
    Ok(())
}

fn check_point<T: Scalar>(x: T, a: T, b: T) -> Result<()> {
    if x < a || x > b || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("x* = {x} outside [{a}, {b}]")));
    }
    Ok(())
}

/// Cell index `i` with `nodes[i] <= x < nodes[i + 1]`; callers handle the ends.
fn cell<T: Scalar>(nodes: &[T], x: T) -> usize {
    nodes.partition_point(|&v| v <= x) - 1
}

/// Hat vector of the weight-scheme interpolant.
pub fn weight_hat_vector<T: Scalar>(kernel: WeightKernel, nodes: &[T], x: T, a: T, b: T) -> Result<DVector<T>> {
    check_point(x, a, b)?;
    let n = nodes.len();
    let mut h = DVector::zeros(n);
    if x < nodes[0] {
        h[0] = T::one();
    } else if x >= nodes[n - 1] {
        h[n - 1] = T::one();
    } else {
        let i = cell(nodes, x);
        let z = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
        let k = kernel.eval(z);
        h[i] = k;
        h[i + 1] = T::one() - k;
    }
    Ok(h)
}

/// Hat vector of the local constant smoother with closed window `|x* - x_i| <= omega`.
///
/// Outside `[x_1, x_n)` the prediction is the nearest end value.
pub fn local_constant_hat_vector<T: Scalar>(nodes: &[T], omega: T, x: T, a: T, b: T) -> Result<DVector<T>> {
    check_point(x, a, b)?;
    let n = nodes.len();
    let mut h = DVector::zeros(n);
    if x < nodes[0] {
        h[0] = T::one();
        return Ok(h);
    }
    if x >= nodes[n - 1] {
        h[n - 1] = T::one();
        return Ok(h);
    }
    let lo = nodes.partition_point(|&v| v < x - omega);
    let hi = nodes.partition_point(|&v| v <= x + omega);
    // Guard against the window edges being decided by rounding in `x +- omega`.
    let members: Vec<usize> = (lo.saturating_sub(1)..(hi + 1).min(n))
        .filter(|&i| (x - nodes[i]).abs() <= omega)
        .collect();
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "bandwidth {omega} leaves x* = {x} with an empty neighbourhood"
        )));
    }
    let w = T::one() / count::<T>(members.len());
    for i in members {
        h[i] = w;
    }
    Ok(h)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Reproducing kernel of the spline penalty,
/// `R(u, v) = int_0^1 (u - z)_+^{s-1} (v - z)_+^{s-1} dz / ((s-1)!)^2`.
///
/// Substituting `t = m - z` with `m = min(u, v)` and expanding
/// `(t + |u - v|)^{s-1}` gives a sum of positive terms, so the closed form has
/// no cancellation for any `s`.
pub fn kernel_r<T: Scalar>(u: T, v: T, s: usize) -> T {
    assert!(s >= 1, "spline order must be at least 1");
    let (m, gap) = if u <= v { (u, v - u) } else { (v, u - v) };
    if m <= T::zero() {
        return T::zero();
    }
    let a = s - 1;
    let mut acc = T::zero();
    for k in 0..=a {
        let c: T = lit(binomial(a, k) / (a + k + 1) as f64);
        acc += c * gap.powi((a - k) as i32) * m.powi((a + k + 1) as i32);
    }
    let f: T = lit(factorial(a));
    acc / (f * f)
}

/// Polynomial part `phi_t(x) = x^t / t!`, `t = 0..s-1`.
pub fn spline_phi<T: Scalar>(x: T, s: usize) -> DVector<T> {
    DVector::from_fn(s, |t, _| x.powi(t as i32) / lit::<T>(factorial(t)))
}

/// Precomputed spline solve: `c = U y`, `d = V y`, so `h* = V^T phi* + U^T rho*`.
#[derive(Debug, Clone)]
pub struct SplineSystem<T: Scalar> {
    pub s: usize,
    pub nodes: Vec<T>,
    pub u: DMatrix<T>,
    pub v: DMatrix<T>,
}

impl<T: Scalar> SplineSystem<T> {
    pub fn new(nodes: &[T], s: usize) -> Result<Self> {
        let n = nodes.len();
        if s < 1 {
            return Err(Error::InvalidArgument("spline order s must be >= 1".into()));
        }
        if n <= s {
            return Err(Error::InvalidArgument(format!("spline of order {s} needs more than {s} nodes")));
        }
        check_nodes(nodes, T::zero(), T::one())?;
        let smat = DMatrix::from_fn(n, s, |i, t| nodes[i].powi(t as i32) / lit::<T>(factorial(t)));
        let tmat = DMatrix::from_fn(n, n, |i, j| kernel_r(nodes[i], nodes[j], s));
        let (q1, q2, r) = complete_qr(&smat)?;
        let m = q2.transpose() * &tmat * &q2;
        let chol = m.cholesky().ok_or(Error::SplineConditioning { s })?;
        let u = &q2 * chol.solve(&q2.transpose());
        let rhs = q1.transpose() * (DMatrix::identity(n, n) - &tmat * &u);
        let v = r
            .solve_upper_triangular(&rhs)
            .ok_or(Error::SplineConditioning { s })?;
        if !u.iter().chain(v.iter()).all(|e| e.is_finite()) {
            return Err(Error::SplineConditioning { s });
        }
        Ok(Self {
            s,
            nodes: nodes.to_vec(),
            u,
            v,
        })
    }

    pub fn hat_vector(&self, x: T) -> Result<DVector<T>> {
        check_point(x, T::zero(), T::one())?;
        let phi = spline_phi(x, self.s);
        let rho = DVector::from_fn(self.nodes.len(), |j, _| kernel_r(x, self.nodes[j], self.s));
        Ok(self.v.tr_mul(&phi) + self.u.tr_mul(&rho))
    }
}

/// One-shot spline hat vector; build a [`SplineSystem`] when evaluating many points.
pub fn spline_hat_vector<T: Scalar>(s: usize, nodes: &[T], x: T) -> Result<DVector<T>> {
    SplineSystem::new(nodes, s)?.hat_vector(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn equispaced(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    /// Composite Gauss-Legendre quadrature of the defining integral.
    fn kernel_quadrature(u: f64, v: f64, s: usize) -> f64 {
        let m = u.min(v);
        if m <= 0.0 {
            return 0.0;
        }
        let nodes = [-0.906179845938664, -0.538469310105683, 0.0, 0.538469310105683, 0.906179845938664];
        let weights = [0.236926885056189, 0.478628670499366, 0.568888888888889, 0.478628670499366, 0.236926885056189];
        let panels = 64;
        let width = m / panels as f64;
        let f = factorial(s - 1);
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = p as f64 * width;
            for (t, w) in nodes.iter().zip(weights) {
                let z = lo + (t + 1.0) * width / 2.0;
                acc += w * width / 2.0 * (u - z).powi(s as i32 - 1) * (v - z).powi(s as i32 - 1);
            }
        }
        acc / (f * f)
    }

    #[test]
    fn kernel_spot_values() {
        assert_relative_eq!(kernel_r(0.3, 0.7, 1), 0.3, epsilon = 1e-15);
        assert_eq!(kernel_r(0.4, 0.0, 3), 0.0);
        assert_relative_eq!(kernel_r(0.5, 0.5, 2), 1.0 / 24.0, epsilon = 1e-15);
        let (u, v) = (0.35, 0.8);
        assert_relative_eq!(kernel_r(u, v, 2), u * u * (3.0 * v - u) / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn kernel_matches_quadrature_on_grid() {
        for s in 1..=4 {
            for i in 0..50 {
                let u = ((i * 37) % 50) as f64 / 49.0;
                let v = ((i * 11 + 3) % 50) as f64 / 49.0;
                let exact = kernel_r(u, v, s);
                assert!((exact - kernel_quadrature(u, v, s)).abs() < 1e-9, "s={s} u={u} v={v}");
            }
        }
    }

    #[test]
    fn weight_schemes() {
        let nodes = [0.0, 1.0, 2.0, 3.0];
        let h = weight_hat_vector(WeightKernel::Cosine, &nodes, 1.5, 0.0, 3.0).unwrap();
        assert_relative_eq!(h[1], (std::f64::consts::FRAC_PI_4).cos(), epsilon = 1e-15);
        assert_relative_eq!(h[2], 1.0 - 0.5f64.sqrt(), epsilon = 1e-15);
        let h = weight_hat_vector(WeightKernel::Linear, &nodes, 2.25, 0.0, 3.0).unwrap();
        assert_relative_eq!(h[2], 0.75);
        assert_relative_eq!(h[3], 0.25);
        let nodes = [0.5, 1.0, 2.0];
        for k in WeightKernel::ALL {
            let h = weight_hat_vector(k, &nodes, 0.1, 0.0, 3.0).unwrap();
            assert_eq!(h.as_slice(), &[1.0, 0.0, 0.0]);
            let h = weight_hat_vector(k, &nodes, 2.5, 0.0, 3.0).unwrap();
            assert_eq!(h.as_slice(), &[0.0, 0.0, 1.0]);
        }
        assert!(weight_hat_vector(WeightKernel::Linear, &nodes, 3.5, 0.0, 3.0).is_err());
    }

    #[test]
    fn constant_kernel_is_nearest_neighbour_with_strict_tie() {
        let nodes = [0.0, 1.0];
        let h = weight_hat_vector(WeightKernel::Constant, &nodes, 0.5 - 1e-12, 0.0, 1.0).unwrap();
        assert_eq!(h.as_slice(), &[1.0, 0.0]);
        let h = weight_hat_vector(WeightKernel::Constant, &nodes, 0.5, 0.0, 1.0).unwrap();
        assert_eq!(h.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn local_constant_zones() {
        let nodes: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let h = local_constant_hat_vector(&nodes, 0.05, nodes[4], 0.0, 1.0).unwrap();
        assert_eq!(h[4], 1.0);
        assert_eq!(h.sum(), 1.0);
        let h = local_constant_hat_vector(&nodes, 0.08, 0.45, 0.0, 1.0).unwrap();
        assert_eq!(h[4], 0.5);
        assert_eq!(h[5], 0.5);
        assert_relative_eq!(h.norm_squared(), 0.5);
        let h = local_constant_hat_vector(&nodes, 1.0, 0.5, 0.0, 1.0).unwrap();
        for v in h.iter() {
            assert_relative_eq!(*v, 1.0 / 11.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn local_constant_matches_brute_force_indicator_sum() {
        let nodes = [0.0, 0.13, 0.2, 0.41, 0.5, 0.77, 1.0];
        for omega in [0.06, 0.1, 0.25, 0.6] {
            for k in 0..200 {
                let x = k as f64 / 200.0;
                let h = match local_constant_hat_vector(&nodes, omega, x, 0.0, 1.0) {
                    Ok(h) => h,
                    Err(_) => continue,
                };
                if x >= 1.0 {
                    continue;
                }
                let ind: Vec<f64> = nodes.iter().map(|&v| f64::from((x - v).abs() <= omega)).collect();
                let tot: f64 = ind.iter().sum();
                for i in 0..nodes.len() {
                    assert_relative_eq!(h[i], ind[i] / tot, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn linear_spline_equals_linear_weight_scheme() {
        let nodes = [0.0, 0.2, 0.3, 0.65, 1.0];
        let sys = SplineSystem::new(&nodes, 1).unwrap();
        for x in [0.05, 0.25, 0.5, 0.9] {
            let hs = sys.hat_vector(x).unwrap();
            let hw = weight_hat_vector(WeightKernel::Linear, &nodes, x, 0.0, 1.0).unwrap();
            assert_relative_eq!(hs, hw, epsilon = 1e-12);
        }
    }

    #[test]
    fn spline_interpolates_at_nodes() {
        let nodes = equispaced(9);
        for s in 1..=3 {
            let sys = SplineSystem::new(&nodes, s).unwrap();
            for (i, &x) in nodes.iter().enumerate() {
                let h = sys.hat_vector(x).unwrap();
                let mut e = DVector::zeros(nodes.len());
                e[i] = 1.0;
                assert_relative_eq!(h, e, epsilon = 1e-9);
            }
        }
    }

    /// Natural cubic spline through `(x_i, y_i)` by the textbook tridiagonal system.
    fn natural_cubic(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let n = xs.len();
        let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let m = n - 2;
        let mut a = DMatrix::zeros(m, m);
        let mut r = DVector::zeros(m);
        for k in 0..m {
            let i = k + 1;
            a[(k, k)] = 2.0 * (h[i - 1] + h[i]);
            if k > 0 {
                a[(k, k - 1)] = h[i - 1];
            }
            if k + 1 < m {
                a[(k, k + 1)] = h[i];
            }
            r[k] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        let inner = a.lu().solve(&r).unwrap();
        let mut mm = vec![0.0; n];
        mm[1..n - 1].copy_from_slice(inner.as_slice());
        let i = (0..n - 1).find(|&i| x <= xs[i + 1]).unwrap();
        let t0 = xs[i + 1] - x;
        let t1 = x - xs[i];
        mm[i] * t0.powi(3) / (6.0 * h[i])
            + mm[i + 1] * t1.powi(3) / (6.0 * h[i])
            + (ys[i] / h[i] - mm[i] * h[i] / 6.0) * t0
            + (ys[i + 1] / h[i] - mm[i + 1] * h[i] / 6.0) * t1
    }

    #[test]
    fn cubic_spline_matches_natural_spline_solver() {
        let nodes = equispaced(5);
        let sys = SplineSystem::new(&nodes, 2).unwrap();
        let mut seed = 17u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let y: Vec<f64> = (0..5).map(|_| next()).collect();
            let yv = DVector::from_vec(y.clone());
            for x in [0.03, 0.31, 0.5, 0.77, 0.99] {
                let h = sys.hat_vector(x).unwrap();
                assert_relative_eq!(h.sum(), 1.0, epsilon = 1e-10);
                assert_relative_eq!(h.dot(&yv), natural_cubic(&nodes, &y, x), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn spline_reproduces_low_degree_polynomials() {
        let nodes = equispaced(8);
        let sys = SplineSystem::new(&nodes, 3).unwrap();
        let y = DVector::from_iterator(8, nodes.iter().map(|&x| 1.0 - 2.0 * x + 3.0 * x * x));
        for x in [0.1, 0.45, 0.8] {
            let h = sys.hat_vector(x).unwrap();
            assert_relative_eq!(h.dot(&y), 1.0 - 2.0 * x + 3.0 * x * x, epsilon = 1e-9);
        }
    }

    #[test]
    fn spline_rejects_bad_nodes() {
        assert!(SplineSystem::new(&[0.0, 0.5], 2).is_err());
        assert!(SplineSystem::new(&[0.0, 0.6, 0.5, 1.0], 1).is_err());
    }
}
