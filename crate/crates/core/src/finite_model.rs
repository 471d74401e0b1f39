//! Finite-dimensional approximations of a Gaussian process on a regular knot grid.
//!
//! In one dimension the process is `Y(x) = eta + sum_j xi_j * phi_j(x)` where
//! `phi_j` integrates the hat function centred at knot `u_j`; the coefficient
//! vector is `(eta, xi_0, ..., xi_N)` and `xi_j = Y'(u_j)`. Monotonicity then
//! reduces to sign constraints on `xi`. In two dimensions the process is a
//! tensor of hat functions with coefficients `xi_{i,j} = Y(u_i, v_j)`, stored
//! flat at index `(N_t + 1) * i + j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Direction of the monotonicity constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    #[default]
    NonIncreasing,
    NonDecreasing,
    Unconstrained,
}

impl std::str::FromStr for Monotonicity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "non_increasing" | "decreasing" => Ok(Monotonicity::NonIncreasing),
            "non_decreasing" | "increasing" => Ok(Monotonicity::NonDecreasing),
            "unconstrained" | "none" => Ok(Monotonicity::Unconstrained),
            other => Err(Error::Parse(format!("unknown monotonicity `{other}`"))),
        }
    }
}

/// Homogeneous linear inequalities `sum_k c_k * xi_{idx_k} <= 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearCone {
    pub dim: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl LinearCone {
    pub fn unconstrained(dim: usize) -> Self {
        LinearCone { dim, rows: Vec::new() }
    }

    /// `sign * xi_k <= 0` for every `k` in `slots`.
    pub fn signs(dim: usize, slots: impl IntoIterator<Item = usize>, sign: f64) -> Self {
        LinearCone { dim, rows: slots.into_iter().map(|k| vec![(k, sign)]).collect() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.rows.len(), self.dim);
        for (r, row) in self.rows.iter().enumerate() {
            for &(k, c) in row {
                g[(r, k)] += c;
            }
        }
        g
    }

    /// Values `g_r . xi` of every inequality.
    pub fn evaluate(&self, xi: &DVector<f64>) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(k, c)| c * xi[k]).sum()).collect()
    }

    /// Largest positive violation, zero when all inequalities hold.
    pub fn max_violation(&self, xi: &DVector<f64>) -> f64 {
        self.evaluate(xi).into_iter().fold(0.0, f64::max)
    }

    pub fn contains(&self, xi: &DVector<f64>) -> bool {
        self.rows.iter().all(|row| row.iter().map(|&(k, c)| c * xi[k]).sum::<f64>() <= 0.0)
    }

    /// Removes violations no larger than `tol` by moving the first variable of
    /// each offending row onto the boundary. Rows are visited in order, which
    /// settles chains such as `xi_i <= xi_{i-1}` in one pass. Returns the largest
    /// violation that exceeded `tol` (zero when everything was snapped).
    pub fn snap(&self, xi: &mut DVector<f64>, tol: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.rows {
            let v: f64 = row.iter().map(|&(k, c)| c * xi[k]).sum();
            if v <= 0.0 {
                continue;
            }
            if v > tol {
                worst = worst.max(v);
                continue;
            }
            let (k, c) = row[0];
            xi[k] -= v / c;
            // the subtraction can land one ulp on the wrong side
            let rest: f64 = row[1..].iter().map(|&(k2, c2)| c2 * xi[k2]).sum();
            if c * xi[k] + rest > 0.0 {
                xi[k] = -rest / c;
                if c * xi[k] + rest > 0.0 {
                    xi[k] = if c > 0.0 { xi[k].next_down() } else { xi[k].next_up() };
                }
            }
        }
        worst
    }
}

/// Regular subdivision `u_j = lower + j * delta`, `j = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid1D {
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl KnotGrid1D {
    pub fn new(lower: f64, upper: f64, n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidGrid("at least one subinterval is required".into()));
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::InvalidGrid(format!("bounds [{lower}, {upper}] are not an interval")));
        }
        Ok(KnotGrid1D { lower, upper, n })
    }

    pub fn delta(&self) -> f64 {
        (self.upper - self.lower) / self.n as f64
    }

    pub fn knot(&self, j: usize) -> f64 {
        if j == self.n {
            self.upper
        } else {
            self.lower + j as f64 * self.delta()
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..=self.n).map(|j| self.knot(j)).collect()
    }

    /// Returns `x` clipped into the domain when it lies within rounding distance, else an error.
    pub fn check(&self, x: f64) -> Result<f64> {
        let eps = 1e-12 * (self.upper - self.lower).abs().max(1.0);
        if x.is_nan() || x < self.lower - eps || x > self.upper + eps {
            return Err(Error::OutOfDomain(x));
        }
        Ok(x.clamp(self.lower, self.upper))
    }

    /// Knot indices whose hats can be nonzero at `x`.
    fn support(&self, x: f64) -> std::ops::RangeInclusive<usize> {
        let pos = ((x - self.lower) / self.delta()).floor().max(0.0) as usize;
        let lo = pos.saturating_sub(1);
        let hi = (pos + 1).min(self.n);
        lo..=hi
    }

    /// Uniform evaluation grid with `count` points spanning the domain.
    pub fn linspace(&self, count: usize) -> Vec<f64> {
        linspace(self.lower, self.upper, count)
    }
}

pub fn linspace(lower: f64, upper: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lower],
        _ => (0..count)
            .map(|i| if i + 1 == count { upper } else { lower + (upper - lower) * i as f64 / (count - 1) as f64 })
            .collect(),
    }
}

/// Triangle of half-width `delta` centred at `center`.
pub fn hat(x: f64, center: f64, delta: f64) -> f64 {
    (1.0 - (x - center).abs() / delta).max(0.0)
}

/// Integral of the unclipped unit hat from minus infinity to `y` (lag from the apex).
fn hat_primitive(y: f64, delta: f64) -> f64 {
    if y <= -delta {
        0.0
    } else if y <= 0.0 {
        (y + delta) * (y + delta) / (2.0 * delta)
    } else if y < delta {
        delta - (delta - y) * (delta - y) / (2.0 * delta)
    } else {
        delta
    }
}

/// `phi_j(x)`: integral of `h_j` from the lower bound to `x`.
pub fn phi(x: f64, j: usize, grid: &KnotGrid1D) -> Result<f64> {
    let x = grid.check(x)?;
    if j > grid.n {
        return Err(Error::InvalidGrid(format!("basis index {j} exceeds {}", grid.n)));
    }
    Ok(phi_unchecked(x, j, grid))
}

fn phi_unchecked(x: f64, j: usize, grid: &KnotGrid1D) -> f64 {
    let d = grid.delta();
    let u = grid.knot(j);
    hat_primitive(x - u, d) - hat_primitive(grid.lower - u, d)
}

/// Basis matrix for `A * Phi * xi = b`: first column ones, then `phi_j(x_i)`.
pub fn build_phi_matrix(grid: &KnotGrid1D, xs: &[f64]) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(xs.len(), grid.n + 2);
    for (i, &x) in xs.iter().enumerate() {
        let x = grid.check(x)?;
        m[(i, 0)] = 1.0;
        for j in 0..=grid.n {
            m[(i, j + 1)] = phi_unchecked(x, j, grid);
        }
    }
    Ok(m)
}

/// One-dimensional finite model with its coefficient covariance.
#[derive(Debug, Clone)]
pub struct FiniteModel1D {
    pub grid: KnotGrid1D,
    pub kernel: KernelSpec,
    /// Covariance of `(eta, xi_0, ..., xi_N)`, nugget included.
    pub gamma: DMatrix<f64>,
    pub cone: Monotonicity,
}

impl FiniteModel1D {
    pub fn new(grid: KnotGrid1D, kernel: KernelSpec, cone: Monotonicity) -> Result<Self> {
        kernel.validate()?;
        let u = grid.knots();
        let n = grid.n + 2;
        let mut gamma = DMatrix::zeros(n, n);
        gamma[(0, 0)] = kernel.cov_derivs(u[0], u[0])?.k;
        for j in 0..=grid.n {
            let d = kernel.cov_derivs(u[0], u[j])?;
            gamma[(0, j + 1)] = d.dk_dxp;
            gamma[(j + 1, 0)] = kernel.cov_derivs(u[j], u[0])?.dk_dx;
        }
        for i in 0..=grid.n {
            for j in 0..=i {
                let v = kernel.cov_derivs(u[i], u[j])?.d2k_dxdxp;
                gamma[(i + 1, j + 1)] = v;
                gamma[(j + 1, i + 1)] = v;
            }
        }
        for i in 0..n {
            gamma[(i, i)] += kernel.diagonal_jitter();
        }
        if gamma.clone().cholesky().is_none() {
            return Err(Error::SingularCovariance);
        }
        Ok(FiniteModel1D { grid, kernel, gamma, cone })
    }

    pub fn n_coeffs(&self) -> usize {
        self.grid.n + 2
    }

    pub fn phi_matrix(&self, xs: &[f64]) -> Result<DMatrix<f64>> {
        build_phi_matrix(&self.grid, xs)
    }

    /// Monotonicity inequalities over the coefficient vector.
    pub fn cone_constraints(&self) -> LinearCone {
        let dim = self.n_coeffs();
        match self.cone {
            Monotonicity::NonIncreasing => LinearCone::signs(dim, 1..dim, 1.0),
            Monotonicity::NonDecreasing => LinearCone::signs(dim, 1..dim, -1.0),
            Monotonicity::Unconstrained => LinearCone::unconstrained(dim),
        }
    }

    fn check_coeffs(&self, xi: &DVector<f64>) -> Result<()> {
        if xi.len() != self.n_coeffs() {
            return Err(Error::DimensionMismatch(format!("expected {} coefficients, got {}", self.n_coeffs(), xi.len())));
        }
        Ok(())
    }

    /// Curve with coefficients `xi`.
    pub fn path(&self, xi: DVector<f64>) -> Result<Path1D> {
        self.check_coeffs(&xi)?;
        Ok(Path1D { grid: self.grid, coeffs: xi })
    }

    /// `Y(x)` for coefficient vector `xi`.
    pub fn eval(&self, xi: &DVector<f64>, x: f64) -> Result<f64> {
        self.check_coeffs(xi)?;
        Ok(eval_path(&self.grid, xi, self.grid.check(x)?))
    }

    /// Analytic derivative `Y'(x) = sum_j xi_j h_j(x)`.
    pub fn derivative(&self, xi: &DVector<f64>, x: f64) -> Result<f64> {
        self.check_coeffs(xi)?;
        Ok(eval_slope(&self.grid, xi, self.grid.check(x)?))
    }

    pub fn eval_many(&self, xi: &DVector<f64>, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.eval(xi, x)).collect()
    }
}

fn eval_path(grid: &KnotGrid1D, xi: &DVector<f64>, x: f64) -> f64 {
    // phi_j saturates at its full area once x is past the support of h_j
    let d = grid.delta();
    let support = grid.support(x);
    let mut v = xi[0];
    for j in 0..=grid.n {
        let p = if j < *support.start() {
            d - hat_primitive(grid.lower - grid.knot(j), d)
        } else if j > *support.end() {
            break;
        } else {
            phi_unchecked(x, j, grid)
        };
        v += xi[j + 1] * p;
    }
    v
}

fn eval_slope(grid: &KnotGrid1D, xi: &DVector<f64>, x: f64) -> f64 {
    let d = grid.delta();
    grid.support(x).map(|j| xi[j + 1] * hat(x, grid.knot(j), d)).sum()
}

/// A one-dimensional curve: knot grid plus coefficients `(eta, xi_0, ..., xi_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path1D {
    pub grid: KnotGrid1D,
    pub coeffs: DVector<f64>,
}

impl Path1D {
    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(eval_path(&self.grid, &self.coeffs, self.grid.check(x)?))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(eval_slope(&self.grid, &self.coeffs, self.grid.check(x)?))
    }

    pub fn eval_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }

    pub fn derivative_many(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.derivative(x)).collect()
    }
}

/// Two-dimensional finite model over maturities `x` and quotation dates `t`.
#[derive(Debug, Clone)]
pub struct FiniteModel2D {
    pub x_grid: KnotGrid1D,
    pub t_grid: KnotGrid1D,
    pub kernel: KernelSpec,
    pub gamma: DMatrix<f64>,
    /// Monotonicity along `x`.
    pub cone: Monotonicity,
}

impl FiniteModel2D {
    pub fn new(x_grid: KnotGrid1D, t_grid: KnotGrid1D, kernel: KernelSpec, cone: Monotonicity) -> Result<Self> {
        kernel.validate()?;
        if kernel.dim() != 2 {
            return Err(Error::DimensionMismatch(format!("surface kernel needs 2 length parameters, got {}", kernel.dim())));
        }
        let nodes: Vec<Vec<f64>> = (0..=x_grid.n)
            .flat_map(|i| (0..=t_grid.n).map(move |j| (i, j)))
            .map(|(i, j)| vec![x_grid.knot(i), t_grid.knot(j)])
            .collect();
        let gamma = kernel.gram(&nodes)?;
        if gamma.clone().cholesky().is_none() {
            return Err(Error::SingularCovariance);
        }
        Ok(FiniteModel2D { x_grid, t_grid, kernel, gamma, cone })
    }

    pub fn n_coeffs(&self) -> usize {
        (self.x_grid.n + 1) * (self.t_grid.n + 1)
    }

    /// Flat position of `xi_{i,j}`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        (self.t_grid.n + 1) * i + j
    }

    /// Inverse of [`FiniteModel2D::index`].
    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        (k / (self.t_grid.n + 1), k % (self.t_grid.n + 1))
    }

    /// Rows `g_i(x_k) h_j(t)` mapping coefficients to curve values at date `t`.
    pub fn h_matrix(&self, xs: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let t = self.t_grid.check(t)?;
        let mut h = DMatrix::zeros(xs.len(), self.n_coeffs());
        let (dx, dt) = (self.x_grid.delta(), self.t_grid.delta());
        for (k, &x) in xs.iter().enumerate() {
            let x = self.x_grid.check(x)?;
            for i in self.x_grid.support(x) {
                let gx = hat(x, self.x_grid.knot(i), dx);
                if gx == 0.0 {
                    continue;
                }
                for j in self.t_grid.support(t) {
                    h[(k, self.index(i, j))] = gx * hat(t, self.t_grid.knot(j), dt);
                }
            }
        }
        Ok(h)
    }

    pub fn eval(&self, xi: &DVector<f64>, x: f64, t: f64) -> Result<f64> {
        if xi.len() != self.n_coeffs() {
            return Err(Error::DimensionMismatch(format!("expected {} coefficients, got {}", self.n_coeffs(), xi.len())));
        }
        Ok((self.h_matrix(&[x], t)? * xi)[0])
    }

    /// `xi_{i,j} <= xi_{i-1,j}` (non-increasing in `x`) or the reverse.
    pub fn cone_constraints(&self) -> LinearCone {
        let dim = self.n_coeffs();
        let sign = match self.cone {
            Monotonicity::NonIncreasing => 1.0,
            Monotonicity::NonDecreasing => -1.0,
            Monotonicity::Unconstrained => return LinearCone::unconstrained(dim),
        };
        let mut rows = Vec::with_capacity(self.x_grid.n * (self.t_grid.n + 1));
        for i in 1..=self.x_grid.n {
            for j in 0..=self.t_grid.n {
                rows.push(vec![(self.index(i, j), sign), (self.index(i - 1, j), -sign)]);
            }
        }
        LinearCone { dim, rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;
    use proptest::prelude::*;

    fn grid(n: usize) -> KnotGrid1D {
        KnotGrid1D::new(0.0, 4.0, n).unwrap()
    }

    #[test]
    fn hat_values() {
        assert_eq!(hat(2.0, 2.0, 0.5), 1.0);
        assert_eq!(hat(2.5, 2.0, 0.5), 0.0);
        assert_eq!(hat(1.5, 2.0, 0.5), 0.0);
        assert_eq!(hat(2.25, 2.0, 0.5), 0.5);
    }

    #[test]
    fn phi_interior_values() {
        let g = grid(8);
        let d = g.delta();
        let j = 4;
        assert_eq!(phi(g.knot(j - 1), j, &g).unwrap(), 0.0);
        assert_eq!(phi(0.3, j, &g).unwrap(), 0.0);
        assert!((phi(g.knot(j), j, &g).unwrap() - d / 2.0).abs() < 1e-15);
        assert!((phi(g.knot(j + 1), j, &g).unwrap() - d).abs() < 1e-15);
        assert!((phi(4.0, j, &g).unwrap() - d).abs() < 1e-15);
        assert!(matches!(phi(4.5, j, &g), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn phi_matrix_rows() {
        let g = grid(5);
        let d = g.delta();
        let m = build_phi_matrix(&g, &[0.0, 4.0]).unwrap();
        assert_eq!(m.ncols(), 7);
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let expected = [1.0, d / 2.0, d, d, d, d, d / 2.0];
        for (a, b) in m.row(1).iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        let empty = build_phi_matrix(&g, &[]).unwrap();
        assert_eq!(empty.shape(), (0, 7));
    }

    #[test]
    fn gamma_small_case() {
        let spec = KernelSpec::with_nugget(KernelFamily::Gaussian, vec![1.0], 1.0, 0.0).unwrap();
        let model = FiniteModel1D::new(KnotGrid1D::new(0.0, 1.0, 1).unwrap(), spec, Monotonicity::NonIncreasing).unwrap();
        assert_eq!(model.gamma.shape(), (3, 3));
        assert_eq!(model.gamma[(0, 0)], 1.0);
        assert_eq!(model.gamma[(0, 1)], 0.0);
        assert_eq!(model.gamma[(1, 1)], 1.0);
        // dK/dx'(0, 1) = C(-1) * (-1) for theta = 1
        assert!((model.gamma[(0, 2)] - (-(-0.5f64).exp())).abs() < 1e-15);
        assert_eq!(model.gamma[(0, 2)], model.gamma[(2, 0)]);
    }

    #[test]
    fn gamma_symmetric_and_factorizable() {
        for theta in [0.7, 2.3, 9.0] {
            let spec = KernelSpec::one_dim(KernelFamily::Matern52, theta, 1.7).unwrap();
            let model = FiniteModel1D::new(KnotGrid1D::new(0.0, 10.0, 10).unwrap(), spec, Monotonicity::NonIncreasing).unwrap();
            assert_eq!(model.gamma, model.gamma.transpose());
        }
        let spec = KernelSpec::one_dim(KernelFamily::Gaussian, 25.0, 1.0).unwrap();
        let model = FiniteModel1D::new(KnotGrid1D::new(0.0, 40.0, 50).unwrap(), spec, Monotonicity::NonIncreasing).unwrap();
        assert!(model.gamma.clone().cholesky().is_some());
        let rough = KernelSpec::one_dim(KernelFamily::Matern32, 1.0, 1.0).unwrap();
        assert!(matches!(
            FiniteModel1D::new(grid(4), rough, Monotonicity::NonIncreasing),
            Err(Error::UnsupportedDerivative(_))
        ));
    }

    fn model(n: usize) -> FiniteModel1D {
        FiniteModel1D::new(grid(n), KernelSpec::one_dim(KernelFamily::Matern52, 2.0, 1.0).unwrap(), Monotonicity::NonIncreasing).unwrap()
    }

    #[test]
    fn intercept_only_path_is_constant() {
        let m = model(6);
        let mut xi = DVector::zeros(8);
        xi[0] = 1.0;
        for x in m.grid.linspace(50) {
            assert_eq!(m.eval(&xi, x).unwrap(), 1.0);
        }
    }

    #[test]
    fn knot_derivative_equals_coefficient() {
        let m = model(6);
        let xi = DVector::from_fn(8, |i, _| (i as f64 * 0.7).sin());
        for k in 0..=6 {
            assert!((m.derivative(&xi, m.grid.knot(k)).unwrap() - xi[k + 1]).abs() < 1e-14);
        }
    }

    #[test]
    fn eval_matches_phi_matrix() {
        let m = model(7);
        let xi = DVector::from_fn(9, |i, _| ((i * 3) as f64).cos());
        let xs = m.grid.linspace(37);
        let phi = m.phi_matrix(&xs).unwrap();
        let dense = &phi * &xi;
        for (k, &x) in xs.iter().enumerate() {
            assert!((m.eval(&xi, x).unwrap() - dense[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn cone_enumeration() {
        let m = FiniteModel1D::new(KnotGrid1D::new(0.0, 1.0, 2).unwrap(), KernelSpec::one_dim(KernelFamily::Matern52, 1.0, 1.0).unwrap(), Monotonicity::NonIncreasing).unwrap();
        let c = m.cone_constraints();
        assert_eq!(c.len(), 3);
        assert_eq!(c.rows.iter().map(|r| r[0].0).collect::<Vec<_>>(), vec![1, 2, 3]);
        let mut free = m.clone();
        free.cone = Monotonicity::Unconstrained;
        assert!(free.cone_constraints().is_empty());

        let k2 = KernelSpec::new(KernelFamily::Gaussian, vec![1.0, 1.0], 1.0).unwrap();
        let m2 = FiniteModel2D::new(KnotGrid1D::new(0.0, 1.0, 1).unwrap(), KnotGrid1D::new(0.0, 1.0, 1).unwrap(), k2, Monotonicity::NonIncreasing).unwrap();
        assert_eq!(m2.cone_constraints().len(), 2);
    }

    #[test]
    fn surface_gamma_is_corner_gram() {
        let k2 = KernelSpec::with_nugget(KernelFamily::Matern52, vec![2.0, 0.5], 1.3, 1e-6).unwrap();
        let m2 = FiniteModel2D::new(KnotGrid1D::new(0.0, 3.0, 1).unwrap(), KnotGrid1D::new(0.0, 1.0, 1).unwrap(), k2.clone(), Monotonicity::NonIncreasing).unwrap();
        let corners = [[0.0, 0.0], [0.0, 1.0], [3.0, 0.0], [3.0, 1.0]];
        for a in 0..4 {
            for b in 0..4 {
                let mut expected = k2.cov(&corners[a], &corners[b]).unwrap();
                if a == b {
                    expected += 1.3e-6;
                    assert!((m2.gamma[(a, a)] - (1.3 + 1.3e-6)).abs() < 1e-15);
                }
                assert!((m2.gamma[(a, b)] - expected).abs() < 1e-15);
            }
        }
        assert_eq!(m2.gamma, m2.gamma.transpose());
    }

    #[test]
    fn h_matrix_properties() {
        let k2 = KernelSpec::new(KernelFamily::Gaussian, vec![5.0, 0.7], 1.0).unwrap();
        let m2 = FiniteModel2D::new(KnotGrid1D::new(0.0, 10.0, 10).unwrap(), KnotGrid1D::new(0.0, 1.0, 4).unwrap(), k2, Monotonicity::NonIncreasing).unwrap();
        let h = m2.h_matrix(&[3.0], 0.5).unwrap();
        assert_eq!(h.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(h[(0, m2.index(3, 2))], 1.0);
        let h = m2.h_matrix(&[3.3, 7.91, 0.0, 10.0], 0.613).unwrap();
        for r in 0..4 {
            assert!((h.row(r).sum() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(m2.h_matrix(&[1.0], 1.2), Err(Error::OutOfDomain(_))));
        for k in 0..m2.n_coeffs() {
            let (i, j) = m2.unflatten(k);
            assert_eq!(m2.index(i, j), k);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..4.0, n in 1usize..30) {
            let g = grid(n);
            let total: f64 = (0..=n).map(|j| hat(x, g.knot(j), g.delta())).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn phi_nondecreasing(a in 0.0f64..4.0, b in 0.0f64..4.0, j in 0usize..9) {
            let g = grid(8);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(phi(lo, j, &g).unwrap() <= phi(hi, j, &g).unwrap() + 1e-15);
        }

        #[test]
        fn nonpositive_slopes_give_nonincreasing_paths(seed in proptest::collection::vec(-1.0f64..0.0, 12)) {
            let m = model(10);
            let mut xi = DVector::from_vec(seed);
            xi[0] = 0.5;
            let xs = m.grid.linspace(2000);
            let ys = m.eval_many(&xi, &xs).unwrap();
            prop_assert!(ys.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        }

        #[test]
        fn one_positive_slope_breaks_monotonicity(k in 0usize..11, bump in 0.01f64..1.0) {
            let m = model(10);
            let mut xi = DVector::from_element(12, -0.0);
            xi[0] = 1.0;
            xi[k + 1] = bump;
            let xs = m.grid.linspace(10_001);
            let ys = m.eval_many(&xi, &xs).unwrap();
            prop_assert!(ys.windows(2).any(|w| w[1] > w[0]));
        }
    }
}
