//! Closed-form Gaussian-process posteriors under interpolation, linear
//! equality, and noisy linear observations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Prior mean of the process.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum MeanFunction {
    #[default]
    Zero,
    Constant(f64),
    Affine { intercept: f64, slope: Vec<f64> },
}

impl MeanFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            MeanFunction::Zero => 0.0,
            MeanFunction::Constant(c) => *c,
            MeanFunction::Affine { intercept, slope } => {
                intercept + slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
            }
        }
    }
}

/// Linear market constraints `A * f(X) = b`, optionally observed with noise of covariance `noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketFitSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Design points, each a `d`-vector.
    pub points: Vec<Vec<f64>>,
    pub noise: Option<DMatrix<f64>>,
}

/// Relative tolerance of the row-rank test.
pub const RANK_TOL: f64 = 1e-10;

impl MarketFitSystem {
    /// Validates shapes, `n <= m`, full row rank of `a`, and symmetry/PSD of `noise`.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        points: Vec<Vec<f64>>,
        noise: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let (n, m) = a.shape();
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!("A has {n} rows but b has {} entries", b.len())));
        }
        if points.len() != m {
            return Err(Error::DimensionMismatch(format!("A has {m} columns but {} points were given", points.len())));
        }
        if n > m {
            return Err(Error::InvalidSystem(format!("{n} constraints exceed {m} curve points")));
        }
        if let Some(d) = points.first().map(Vec::len) {
            if points.iter().any(|p| p.len() != d) {
                return Err(Error::DimensionMismatch("design points have mixed dimensions".into()));
            }
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("non-finite coefficient".into()));
        }
        let rank = row_rank(&a);
        if rank < n {
            return Err(Error::RankDeficient { rank, rows: n });
        }
        if let Some(s) = &noise {
            if s.shape() != (n, n) {
                return Err(Error::DimensionMismatch(format!("noise covariance must be {n}x{n}")));
            }
            let scale = s.amax().max(1.0);
            if (s - s.transpose()).amax() > 1e-12 * scale {
                return Err(Error::InvalidSystem("noise covariance is not symmetric".into()));
            }
            let eig = s.clone().symmetric_eigenvalues();
            if eig.iter().any(|e| *e < -1e-12 * scale) {
                return Err(Error::InvalidSystem("noise covariance is not positive semidefinite".into()));
            }
        }
        Ok(MarketFitSystem { a, b, points, noise })
    }

    /// Identity system `f(X) = y`.
    pub fn interpolation(points: Vec<Vec<f64>>, y: DVector<f64>) -> Result<Self> {
        let m = points.len();
        Self::new(DMatrix::identity(m, m), y, points, None)
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.a.ncols()
    }

    /// Scalar horizons of a one-dimensional system.
    pub fn horizons(&self) -> Result<Vec<f64>> {
        self.points
            .iter()
            .map(|p| match p.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::DimensionMismatch("expected one-dimensional design points".into())),
            })
            .collect()
    }

    /// `max_i |(A y - b)_i|`.
    pub fn residual_inf(&self, y: &DVector<f64>) -> f64 {
        (&self.a * y - &self.b).amax()
    }

    /// System without row `i` (noise rows/columns dropped accordingly).
    pub fn without_row(&self, i: usize) -> MarketFitSystem {
        let a = self.a.clone().remove_row(i);
        let b = self.b.clone().remove_row(i);
        let noise = self.noise.clone().map(|s| s.remove_row(i).remove_column(i));
        MarketFitSystem { a, b, points: self.points.clone(), noise }
    }

    /// Same system with a different right-hand side.
    pub fn with_rhs(&self, b: DVector<f64>) -> MarketFitSystem {
        MarketFitSystem { b, ..self.clone() }
    }

    /// Adds the pointwise condition `Y(x) = value` as the first row, reusing `x`
    /// if it is already a design point.
    pub fn with_point_value(&self, x: Vec<f64>, value: f64) -> Result<MarketFitSystem> {
        let mut points = self.points.clone();
        let mut a = self.a.clone();
        let col = match points.iter().position(|p| *p == x) {
            Some(c) => c,
            None => {
                points.insert(0, x);
                a = a.insert_column(0, 0.0);
                0
            }
        };
        a = a.insert_row(0, 0.0);
        a[(0, col)] = 1.0;
        let b = self.b.clone().insert_row(0, value);
        let noise = self.noise.clone().map(|s| s.insert_row(0, 0.0).insert_column(0, 0.0));
        MarketFitSystem::new(a, b, points, noise)
    }
}

/// Numerical row rank through column-pivoted QR.
pub fn row_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let norm = a.norm();
    if norm == 0.0 {
        return 0;
    }
    // rank(A) = rank(A^T); pivot over the rows of A
    let qr = a.transpose().col_piv_qr();
    let r = qr.r();
    (0..r.nrows().min(r.ncols())).filter(|&i| r[(i, i)].abs() > RANK_TOL * norm).count()
}

/// Diagonal noise covariance from bid/ask quotes: `(ask_i - mid_i)^2`.
pub fn noise_from_bid_ask(mid: &[f64], ask: &[f64]) -> Result<DMatrix<f64>> {
    if mid.len() != ask.len() {
        return Err(Error::DimensionMismatch("mid and ask lengths differ".into()));
    }
    let d: Vec<f64> = mid.iter().zip(ask).map(|(m, a)| (a - m) * (a - m)).collect();
    Ok(DMatrix::from_diagonal(&DVector::from_vec(d)))
}

/// Conditional Gaussian process given linear (possibly noisy) observations.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    spec: KernelSpec,
    mean: MeanFunction,
    points: Vec<Vec<f64>>,
    /// `None` stands for the identity (pure interpolation).
    a: Option<DMatrix<f64>>,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

impl GaussianPosterior {
    /// Classical kriging: condition on `f(X) = y`.
    pub fn interpolation(mean: MeanFunction, spec: &KernelSpec, points: Vec<Vec<f64>>, y: &DVector<f64>) -> Result<Self> {
        if y.len() != points.len() {
            return Err(Error::DimensionMismatch("one value per point is required".into()));
        }
        let gram = spec.gram(&points)?;
        let chol = gram.cholesky().ok_or(Error::SingularCovariance)?;
        let mu = DVector::from_iterator(points.len(), points.iter().map(|p| mean.eval(p)));
        let weights = chol.solve(&(y - mu));
        Ok(GaussianPosterior { spec: spec.clone(), mean, points, a: None, chol, weights })
    }

    /// Kriging under `A f(X) = b`, or `b = A f(X) + eps` when the system carries noise.
    pub fn linear(mean: MeanFunction, spec: &KernelSpec, sys: &MarketFitSystem) -> Result<Self> {
        let mut raw = spec.clone();
        raw.nugget = 0.0;
        let k = raw.gram(&sys.points)?;
        let mut s = &sys.a * k * sys.a.transpose();
        if let Some(noise) = &sys.noise {
            s += noise;
        }
        for i in 0..s.nrows() {
            s[(i, i)] += spec.diagonal_jitter();
        }
        let chol = s.cholesky().ok_or(Error::SingularConstraintMatrix)?;
        let mu = DVector::from_iterator(sys.points.len(), sys.points.iter().map(|p| mean.eval(p)));
        let weights = chol.solve(&(&sys.b - &sys.a * mu));
        Ok(GaussianPosterior {
            spec: spec.clone(),
            mean,
            points: sys.points.clone(),
            a: Some(sys.a.clone()),
            chol,
            weights,
        })
    }

    fn projected_cross(&self, x: &[f64]) -> Result<DVector<f64>> {
        let k = DVector::from_vec(self.spec.cross(x, &self.points)?);
        Ok(match &self.a {
            Some(a) => a * k,
            None => k,
        })
    }

    /// Posterior mean at `x`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.mean.eval(x) + self.projected_cross(x)?.dot(&self.weights))
    }

    /// Posterior covariance between `x` and `xp`.
    pub fn cov(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        let u = self.chol.l().solve_lower_triangular(&self.projected_cross(x)?).ok_or(Error::SingularCovariance)?;
        let v = self.chol.l().solve_lower_triangular(&self.projected_cross(xp)?).ok_or(Error::SingularCovariance)?;
        Ok(self.spec.cov(x, xp)? - u.dot(&v))
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        self.cov(x, x)
    }
}
