//! Stationary covariance kernels and their cross-derivatives.
//!
//! Every family is written as `K(x, x') = sigma2 * prod_i C(x_i - x'_i, theta_i)`.
//! The correlation `C` is exactly one at zero lag. The nugget never enters
//! [`KernelSpec::corr`]; it is only added to the diagonal of assembled
//! covariance matrices, as `sigma2 * nugget`, so that scaling `sigma2` scales
//! every assembled matrix by the same factor.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Correlation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Matern52,
    Matern32,
    Exponential,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Matern52 => "matern52",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Exponential => "exponential",
        }
    }

    /// Nugget used when none is given: `1e-5` for the Gaussian family, zero otherwise.
    pub fn default_nugget(self) -> f64 {
        match self {
            KernelFamily::Gaussian => 1e-5,
            _ => 0.0,
        }
    }

    /// Whether the family is at least twice differentiable at the origin.
    pub fn is_twice_differentiable(self) -> bool {
        matches!(self, KernelFamily::Gaussian | KernelFamily::Matern52)
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' ', '/'], "").as_str() {
            "gaussian" | "se" | "squaredexponential" => Ok(KernelFamily::Gaussian),
            "matern52" => Ok(KernelFamily::Matern52),
            "matern32" => Ok(KernelFamily::Matern32),
            "exponential" | "exp" => Ok(KernelFamily::Exponential),
            other => Err(Error::InvalidKernel(format!("unknown family `{other}`"))),
        }
    }
}

/// Kernel family plus hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Length parameter per input dimension.
    pub theta: Vec<f64>,
    pub sigma2: f64,
    /// Relative diagonal inflation; the absolute amount added is `sigma2 * nugget`.
    pub nugget: f64,
}

/// `K`, `dK/dx`, `dK/dx'` and `d2K/dxdx'` at one pair of scalar inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovDerivs {
    pub k: f64,
    pub dk_dx: f64,
    pub dk_dxp: f64,
    pub d2k_dxdxp: f64,
}

impl KernelSpec {
    /// Builds a validated spec with the family's default nugget.
    pub fn new(family: KernelFamily, theta: Vec<f64>, sigma2: f64) -> Result<Self> {
        Self::with_nugget(family, theta, sigma2, family.default_nugget())
    }

    pub fn with_nugget(family: KernelFamily, theta: Vec<f64>, sigma2: f64, nugget: f64) -> Result<Self> {
        let spec = KernelSpec { family, theta, sigma2, nugget };
        spec.validate()?;
        Ok(spec)
    }

    /// One-dimensional shorthand.
    pub fn one_dim(family: KernelFamily, theta: f64, sigma2: f64) -> Result<Self> {
        Self::new(family, vec![theta], sigma2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::InvalidKernel("theta must have at least one dimension".into()));
        }
        if let Some(t) = self.theta.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidKernel(format!("theta must be positive, got {t}")));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::InvalidKernel(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::InvalidKernel(format!("nugget must be nonnegative, got {}", self.nugget)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Same spec with a different variance.
    pub fn with_sigma2(&self, sigma2: f64) -> Self {
        KernelSpec { sigma2, ..self.clone() }
    }

    /// Same spec with different length parameters.
    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        KernelSpec { theta, ..self.clone() }
    }

    /// Absolute amount added to covariance diagonals.
    pub fn diagonal_jitter(&self) -> f64 {
        self.sigma2 * self.nugget
    }

    /// Correlation along the first dimension at signed lag `h`.
    pub fn corr(&self, h: f64) -> f64 {
        corr(self.family, h, self.theta[0])
    }

    /// Covariance and cross-derivatives for scalar inputs (first dimension).
    pub fn cov_derivs(&self, x: f64, xp: f64) -> Result<CovDerivs> {
        let theta = self.theta[0];
        let h = x - xp;
        let (c, dc, d2c) = match self.family {
            KernelFamily::Gaussian => {
                let t2 = theta * theta;
                let c = (-h * h / (2.0 * t2)).exp();
                (c, -h / t2 * c, (h * h / (t2 * t2) - 1.0 / t2) * c)
            }
            KernelFamily::Matern52 => {
                let s = SQRT5 * h.abs() / theta;
                let e = (-s).exp();
                let a = 5.0 / (3.0 * theta * theta);
                ((1.0 + s + s * s / 3.0) * e, -a * h * (1.0 + s) * e, -a * (1.0 + s - s * s) * e)
            }
            other => return Err(Error::UnsupportedDerivative(other.name())),
        };
        let s2 = self.sigma2;
        Ok(CovDerivs { k: s2 * c, dk_dx: s2 * dc, dk_dxp: -s2 * dc, d2k_dxdxp: -s2 * d2c })
    }

    /// Tensor-product covariance between two `d`-dimensional points.
    pub fn cov(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        if x.len() != self.dim() || xp.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "kernel has {} dimensions, points have {} and {}",
                self.dim(),
                x.len(),
                xp.len()
            )));
        }
        Ok(self.cov_unchecked(x, xp))
    }

    pub(crate) fn cov_unchecked(&self, x: &[f64], xp: &[f64]) -> f64 {
        let prod: f64 = x
            .iter()
            .zip(xp)
            .zip(&self.theta)
            .map(|((a, b), t)| corr(self.family, a - b, *t))
            .product();
        self.sigma2 * prod
    }

    /// Gram matrix over `points`, with the nugget on the diagonal.
    pub fn gram(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        for p in points {
            if p.len() != self.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "kernel has {} dimensions, point has {}",
                    self.dim(),
                    p.len()
                )));
            }
        }
        let m = points.len();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = self.cov_unchecked(&points[i], &points[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
            g[(i, i)] += self.diagonal_jitter();
        }
        Ok(g)
    }

    /// Covariance vector between `x` and each of `points` (no nugget).
    pub fn cross(&self, x: &[f64], points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.iter().map(|p| self.cov(x, p)).collect()
    }
}

/// Correlation `C(h, theta)` for one dimension.
pub fn corr(family: KernelFamily, h: f64, theta: f64) -> f64 {
    let r = h.abs() / theta;
    match family {
        KernelFamily::Gaussian => (-0.5 * r * r).exp(),
        KernelFamily::Matern52 => {
            let s = SQRT5 * r;
            (1.0 + s + s * s / 3.0) * (-s).exp()
        }
        KernelFamily::Matern32 => {
            let s = SQRT3 * r;
            (1.0 + s) * (-s).exp()
        }
        KernelFamily::Exponential => (-r).exp(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const FAMILIES: [KernelFamily; 4] = [
        KernelFamily::Gaussian,
        KernelFamily::Matern52,
        KernelFamily::Matern32,
        KernelFamily::Exponential,
    ];

    #[test]
    fn unit_correlation_at_zero_lag() {
        for f in FAMILIES {
            assert_eq!(corr(f, 0.0, 0.3), 1.0);
            assert_eq!(corr(f, 0.0, 1.0), 1.0);
        }
    }

    #[test]
    fn exponential_at_one_length() {
        assert_relative_eq!(corr(KernelFamily::Exponential, 0.7, 0.7), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(corr(KernelFamily::Exponential, 0.7, 0.7), 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_derivatives_at_center() {
        let spec = KernelSpec::one_dim(KernelFamily::Gaussian, 0.3, 2.0).unwrap();
        let d = spec.cov_derivs(1.2, 1.2).unwrap();
        assert_eq!(d.dk_dx, 0.0);
        assert_relative_eq!(d.d2k_dxdxp, 2.0 / 0.09, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_first_derivative_matches_central_difference() {
        let spec = KernelSpec::one_dim(KernelFamily::Gaussian, 0.3, 1.0).unwrap();
        let (x, xp) = (0.6, 0.5);
        let step = 1e-6;
        let fd = (spec.cov(&[x + step], &[xp]).unwrap() - spec.cov(&[x - step], &[xp]).unwrap()) / (2.0 * step);
        assert!((spec.cov_derivs(x, xp).unwrap().dk_dx - fd).abs() < 1e-6);
    }

    #[test]
    fn rough_families_refuse_derivatives() {
        for f in [KernelFamily::Matern32, KernelFamily::Exponential] {
            let spec = KernelSpec::one_dim(f, 1.0, 1.0).unwrap();
            assert!(matches!(spec.cov_derivs(0.0, 0.5), Err(Error::UnsupportedDerivative(_))));
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(KernelSpec::one_dim(KernelFamily::Gaussian, 0.0, 1.0).is_err());
        assert!(KernelSpec::one_dim(KernelFamily::Gaussian, 1.0, -1.0).is_err());
        assert!(KernelSpec::with_nugget(KernelFamily::Gaussian, vec![1.0], 1.0, -1e-3).is_err());
        assert!(KernelSpec::new(KernelFamily::Gaussian, vec![], 1.0).is_err());
    }

    #[test]
    fn default_nuggets() {
        assert_eq!(KernelSpec::one_dim(KernelFamily::Gaussian, 1.0, 1.0).unwrap().nugget, 1e-5);
        assert_eq!(KernelSpec::one_dim(KernelFamily::Matern52, 1.0, 1.0).unwrap().nugget, 0.0);
    }

    #[test]
    fn tensor_product() {
        let spec = KernelSpec::new(KernelFamily::Gaussian, vec![25.0, 0.5], 1.0).unwrap();
        assert_eq!(spec.cov(&[3.0, 0.2], &[3.0, 0.2]).unwrap(), 1.0);
        let expected = corr(KernelFamily::Gaussian, 5.0, 25.0) * corr(KernelFamily::Gaussian, 0.1, 0.5);
        assert_relative_eq!(spec.cov(&[10.0, 0.4], &[5.0, 0.3]).unwrap(), expected, max_relative = 1e-14);
        let spec = spec.with_sigma2(3.0);
        assert_relative_eq!(spec.cov(&[10.0, 0.4], &[5.0, 0.3]).unwrap(), 3.0 * expected, max_relative = 1e-14);

        let one = KernelSpec::one_dim(KernelFamily::Matern32, 2.0, 4.0).unwrap();
        assert_relative_eq!(one.cov(&[1.0], &[0.2]).unwrap(), 4.0 * one.corr(0.8), max_relative = 1e-15);
        assert!(matches!(one.cov(&[1.0, 2.0], &[0.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn family_names_round_trip() {
        for f in FAMILIES {
            assert_eq!(f.name().parse::<KernelFamily>().unwrap(), f);
        }
        assert_eq!("Matern 5/2".parse::<KernelFamily>().unwrap(), KernelFamily::Matern52);
    }

    #[test]
    fn derivative_consistency_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for family in [KernelFamily::Gaussian, KernelFamily::Matern52] {
            for _ in 0..100 {
                let theta: f64 = rng.random_range(0.2..5.0);
                let spec = KernelSpec::one_dim(family, theta, rng.random_range(0.5..3.0)).unwrap();
                let x: f64 = rng.random_range(-3.0..3.0);
                // keep Matern pairs off the kink at zero lag
                let mut xp: f64 = rng.random_range(-3.0..3.0);
                if (x - xp).abs() < 0.05 * theta {
                    xp = x + 0.1 * theta;
                }
                let step = 1e-5 * theta;
                let d = spec.cov_derivs(x, xp).unwrap();
                let k = |a: f64, b: f64| spec.cov_derivs(a, b).unwrap().k;
                let fd_x = (k(x + step, xp) - k(x - step, xp)) / (2.0 * step);
                let fd_xp = (k(x, xp + step) - k(x, xp - step)) / (2.0 * step);
                let dkdx = |a: f64, b: f64| spec.cov_derivs(a, b).unwrap().dk_dx;
                let fd_cross = (dkdx(x, xp + step) - dkdx(x, xp - step)) / (2.0 * step);
                let scale = spec.sigma2 / (theta * theta);
                assert!((d.dk_dx - fd_x).abs() <= 1e-5 * d.dk_dx.abs().max(spec.sigma2 / theta), "{family:?}");
                assert!((d.dk_dxp - fd_xp).abs() <= 1e-5 * d.dk_dxp.abs().max(spec.sigma2 / theta));
                assert!((d.d2k_dxdxp - fd_cross).abs() <= 1e-5 * d.d2k_dxdxp.abs().max(scale));
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_decaying(h in -10.0f64..10.0, theta in 0.1f64..20.0, extra in 0.0f64..5.0) {
            for f in FAMILIES {
                prop_assert_eq!(corr(f, h, theta), corr(f, -h, theta));
                let near = corr(f, h.abs(), theta);
                let far = corr(f, h.abs() + extra, theta);
                prop_assert!(far <= near);
                prop_assert!((0.0..=1.0).contains(&near));
            }
        }

        #[test]
        fn mixed_derivative_symmetric(x in -5.0f64..5.0, xp in -5.0f64..5.0, theta in 0.2f64..10.0) {
            for f in [KernelFamily::Gaussian, KernelFamily::Matern52] {
                let spec = KernelSpec::one_dim(f, theta, 1.3).unwrap();
                let a = spec.cov_derivs(x, xp).unwrap();
                let b = spec.cov_derivs(xp, x).unwrap();
                prop_assert!((a.d2k_dxdxp - b.d2k_dxdxp).abs() <= 1e-14 * a.d2k_dxdxp.abs().max(1.0));
                prop_assert!((a.dk_dx - b.dk_dxp).abs() <= 1e-14);
            }
        }

        #[test]
        fn gram_admits_cholesky(pts in proptest::collection::vec(-10.0f64..10.0, 1..20), theta in 0.3f64..8.0) {
            for f in FAMILIES {
                let spec = KernelSpec::with_nugget(f, vec![theta], 1.0, 1e-6).unwrap();
                let points: Vec<Vec<f64>> = pts.iter().map(|p| vec![*p]).collect();
                let g = spec.gram(&points).unwrap();
                prop_assert!(g.clone().cholesky().is_some());
                prop_assert_eq!(g.clone(), g.transpose());
            }
        }
    }
}
