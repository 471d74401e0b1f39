//! Quantities derived from discount-type curves: spot and forward rates,
//! annuity values, pointwise bands, and parametric reference fits.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_model::{Monotonicity, Path1D};
use crate::gp_linear::MarketFitSystem;

/// Anything that can be evaluated along the maturity axis.
pub trait Curve {
    fn value(&self, x: f64) -> Result<f64>;
}

/// A curve with an analytic first derivative.
pub trait SmoothCurve: Curve {
    fn slope(&self, x: f64) -> Result<f64>;
}

impl Curve for Path1D {
    fn value(&self, x: f64) -> Result<f64> {
        self.eval(x)
    }
}

impl SmoothCurve for Path1D {
    fn slope(&self, x: f64) -> Result<f64> {
        self.derivative(x)
    }
}

/// Adapter for closures.
pub struct FnCurve<F>(pub F);

impl<F: Fn(f64) -> f64> Curve for FnCurve<F> {
    fn value(&self, x: f64) -> Result<f64> {
        Ok((self.0)(x))
    }
}

/// `-(1/x) log Y(x)`.
pub fn spot_rate(curve: &impl Curve, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::ZeroHorizon);
    }
    let y = curve.value(x)?;
    if !(y > 0.0) {
        return Err(Error::NonPositiveValue(y));
    }
    Ok(-y.ln() / x)
}

/// `-Y'(x) / Y(x)`.
pub fn forward_rate(curve: &impl SmoothCurve, x: f64) -> Result<f64> {
    let y = curve.value(x)?;
    if !(y > 0.0) {
        return Err(Error::NonPositiveValue(y));
    }
    Ok(-curve.slope(x)? / y)
}

/// Present value of an annuity-due paying `1/p` at `k/p` for `k = 0..p*n`.
pub fn annuity_pv(curve: &impl Curve, years: f64, per_year: u32) -> Result<f64> {
    let periods = years * per_year as f64;
    let count = periods.round();
    if per_year == 0 || count < 1.0 || (periods - count).abs() > 1e-9 {
        return Err(Error::InvalidGrid(format!("{years} years at {per_year} payments per year")));
    }
    let p = per_year as f64;
    let mut total = 0.0;
    for k in 0..count as usize {
        total += curve.value(k as f64 / p)?;
    }
    Ok(total / p)
}

/// Counts grid steps that move against the expected direction by more than `tol`.
pub fn count_violations(values: &[f64], direction: Monotonicity, tol: f64) -> usize {
    values
        .windows(2)
        .filter(|w| match direction {
            Monotonicity::NonIncreasing => w[1] > w[0] + tol,
            Monotonicity::NonDecreasing => w[1] < w[0] - tol,
            Monotonicity::Unconstrained => false,
        })
        .count()
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pointwise envelope of sampled curves around the mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBand {
    pub x: Vec<f64>,
    pub mode: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub median: Vec<f64>,
    pub level: f64,
    pub samples: usize,
}

/// Band from already evaluated curves; `samples[s][i]` is draw `s` at `x[i]`.
pub fn band_from_values(x: &[f64], mode: Vec<f64>, samples: &[Vec<f64>], level: f64) -> Result<CurveBand> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidGrid(format!("band level {level} outside [0, 1)")));
    }
    if mode.len() != x.len() || samples.iter().any(|s| s.len() != x.len()) {
        return Err(Error::DimensionMismatch("sampled curves and grid differ in length".into()));
    }
    let columns: Vec<[f64; 3]> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            col.sort_by(f64::total_cmp);
            [quantile(&col, (1.0 - level) / 2.0), quantile(&col, (1.0 + level) / 2.0), quantile(&col, 0.5)]
        })
        .collect();
    Ok(CurveBand {
        x: x.to_vec(),
        mode,
        lower: columns.iter().map(|c| c[0]).collect(),
        upper: columns.iter().map(|c| c[1]).collect(),
        median: columns.iter().map(|c| c[2]).collect(),
        level,
        samples: samples.len(),
    })
}

/// Evaluates the mode and sampled curves on `x` and summarizes them.
pub fn bands(mode: &Path1D, samples: &[Path1D], x: &[f64], level: f64) -> Result<CurveBand> {
    let values: Vec<Vec<f64>> = samples.par_iter().map(|p| p.eval_many(x)).collect::<Result<_>>()?;
    band_from_values(x, mode.eval_many(x)?, &values, level)
}

impl CurveBand {
    /// Applies `f(x, y)` to every column; used for spot-rate bands.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> CurveBand {
        let apply = |v: &[f64]| self.x.iter().zip(v).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
        CurveBand {
            x: self.x.clone(),
            mode: apply(&self.mode),
            lower: apply(&self.lower),
            upper: apply(&self.upper),
            median: apply(&self.median),
            level: self.level,
            samples: self.samples,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,mode,lower,upper,median")?;
        for i in 0..self.x.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_num(self.x[i]),
                fmt_num(self.mode[i]),
                fmt_num(self.lower[i]),
                fmt_num(self.upper[i]),
                fmt_num(self.median[i])
            )?;
        }
        Ok(())
    }
}

/// Twelve significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.11e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametricFamily {
    NelsonSiegel,
    Svensson,
}

impl ParametricFamily {
    fn n_params(self) -> usize {
        match self {
            ParametricFamily::NelsonSiegel => 4,
            ParametricFamily::Svensson => 6,
        }
    }
}

impl std::str::FromStr for ParametricFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "ns" | "nelsonsiegel" => Ok(ParametricFamily::NelsonSiegel),
            "nss" | "svensson" | "nelsonsiegelsvensson" => Ok(ParametricFamily::Svensson),
            other => Err(Error::Parse(format!("unknown parametric family `{other}`"))),
        }
    }
}

/// Nelson-Siegel or Svensson zero-coupon yield curve, continuously compounded.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricCurve {
    pub family: ParametricFamily,
    pub lambda1: f64,
    /// Unused by Nelson-Siegel.
    pub lambda2: f64,
    /// `beta[3]` is zero for Nelson-Siegel.
    pub beta: [f64; 4],
}

/// `(1 - e^{-u}) / u`, stable near zero.
fn slope_loading(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        1.0 - u / 2.0
    } else {
        -(-u).exp_m1() / u
    }
}

impl ParametricCurve {
    pub fn nelson_siegel(lambda1: f64, b1: f64, b2: f64, b3: f64) -> Result<Self> {
        ParametricCurve { family: ParametricFamily::NelsonSiegel, lambda1, lambda2: 1.0, beta: [b1, b2, b3, 0.0] }.validated()
    }

    pub fn svensson(lambda1: f64, lambda2: f64, beta: [f64; 4]) -> Result<Self> {
        ParametricCurve { family: ParametricFamily::Svensson, lambda1, lambda2, beta }.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite()) {
            return Err(Error::NonPositiveValue(self.lambda1.min(self.lambda2)));
        }
        Ok(self)
    }

    fn yield_unchecked(&self, x: f64) -> f64 {
        let [b1, b2, b3, b4] = self.beta;
        let u1 = x / self.lambda1;
        let l1 = slope_loading(u1);
        let mut y = b1 + b2 * l1 + b3 * (l1 - (-u1).exp());
        if self.family == ParametricFamily::Svensson {
            let u2 = x / self.lambda2;
            y += b4 * (slope_loading(u2) - (-u2).exp());
        }
        y
    }

    /// Zero-coupon yield at maturity `x > 0`.
    pub fn yield_at(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Err(Error::ZeroHorizon);
        }
        Ok(self.yield_unchecked(x))
    }

    /// Instantaneous forward `d/dx (x y(x))`.
    pub fn forward_at(&self, x: f64) -> f64 {
        let [b1, b2, b3, b4] = self.beta;
        let u1 = x / self.lambda1;
        let e1 = (-u1).exp();
        let mut f = b1 + b2 * e1 + b3 * u1 * e1;
        if self.family == ParametricFamily::Svensson {
            let u2 = x / self.lambda2;
            f += b4 * u2 * (-u2).exp();
        }
        f
    }

    /// `exp(-y(x) x)`, equal to one at `x = 0`.
    pub fn discount(&self, x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            (-self.yield_unchecked(x) * x).exp()
        }
    }

    fn from_params(family: ParametricFamily, p: &[f64]) -> Self {
        match family {
            ParametricFamily::NelsonSiegel => {
                ParametricCurve { family, lambda1: p[0].exp(), lambda2: 1.0, beta: [p[1], p[2], p[3], 0.0] }
            }
            ParametricFamily::Svensson => {
                ParametricCurve { family, lambda1: p[0].exp(), lambda2: p[4].exp(), beta: [p[1], p[2], p[3], p[5]] }
            }
        }
    }

    /// Parameter names and values in table order.
    pub fn table(&self) -> Vec<(&'static str, f64)> {
        let mut t = vec![("lambda1", self.lambda1)];
        if self.family == ParametricFamily::Svensson {
            t.push(("lambda2", self.lambda2));
        }
        t.extend([("beta1", self.beta[0]), ("beta2", self.beta[1]), ("beta3", self.beta[2])]);
        if self.family == ParametricFamily::Svensson {
            t.push(("beta4", self.beta[3]));
        }
        t
    }

    pub fn write_params_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let t = self.table();
        writeln!(w, "{}", t.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(","))?;
        writeln!(w, "{}", t.iter().map(|(_, v)| fmt_num(*v)).collect::<Vec<_>>().join(","))
    }
}

impl Curve for ParametricCurve {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.discount(x))
    }
}

impl SmoothCurve for ParametricCurve {
    fn slope(&self, x: f64) -> Result<f64> {
        Ok(-self.forward_at(x) * self.discount(x))
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Holds the second curvature coefficient of a Svensson fit at this value.
    pub fixed_beta4: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { restarts: 50, max_iter: 5000, fixed_beta4: None }
    }
}

#[derive(Debug, Clone)]
pub struct ParametricFit {
    pub curve: ParametricCurve,
    /// Sum of squared pricing errors.
    pub objective: f64,
}

fn fit_residuals(family: ParametricFamily, p: &[f64], sys: &MarketFitSystem, xs: &[f64]) -> DVector<f64> {
    let curve = ParametricCurve::from_params(family, p);
    let disc = DVector::from_iterator(xs.len(), xs.iter().map(|&x| curve.discount(x)));
    &sys.a * disc - &sys.b
}

fn levenberg_marquardt(family: ParametricFamily, start: Vec<f64>, free: &[usize], sys: &MarketFitSystem, xs: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let mut p = start;
    let mut r = fit_residuals(family, &p, sys, xs);
    let mut obj = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        if !obj.is_finite() || obj < 1e-28 {
            break;
        }
        let mut jac = DMatrix::zeros(r.len(), free.len());
        for (c, &k) in free.iter().enumerate() {
            let h = 1e-6 * p[k].abs().max(1e-2);
            let mut up = p.clone();
            up[k] += h;
            let mut dn = p.clone();
            dn[k] -= h;
            let col = (fit_residuals(family, &up, sys, xs) - fit_residuals(family, &dn, sys, xs)) / (2.0 * h);
            jac.set_column(c, &col);
        }
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        while mu < 1e16 {
            let mut lhs = jtj.clone();
            for i in 0..free.len() {
                lhs[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let mut cand = p.clone();
            for (c, &k) in free.iter().enumerate() {
                cand[k] += step[c];
            }
            let rc = fit_residuals(family, &cand, sys, xs);
            let oc = rc.norm_squared();
            if oc.is_finite() && oc < obj {
                let small = step.norm() <= 1e-15 * (1.0 + p.iter().map(|v| v * v).sum::<f64>().sqrt());
                p = cand;
                r = rc;
                obj = oc;
                mu = (mu / 3.0).max(1e-12);
                improved = !small;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    (p, obj)
}

/// Least-squares fit of a parametric yield curve to a discount-factor system
/// (`A P(X) = b`), best of several random starts.
pub fn parametric_fit(sys: &MarketFitSystem, family: ParametricFamily, seed: u64, cfg: &FitConfig) -> Result<ParametricFit> {
    let xs = sys.horizons()?;
    let n_params = family.n_params();
    let free: Vec<usize> = match (family, cfg.fixed_beta4) {
        (ParametricFamily::Svensson, Some(_)) => (0..5).collect(),
        _ => (0..n_params).collect(),
    };
    let fits: Vec<(Vec<f64>, f64)> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut start = vec![
                rng.random_range(0.5f64..20.0).ln(),
                rng.random_range(0.0..0.08),
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.1..0.1),
            ];
            if family == ParametricFamily::Svensson {
                start.push(rng.random_range(0.5f64..30.0).ln());
                start.push(cfg.fixed_beta4.unwrap_or_else(|| rng.random_range(-0.1..0.1)));
            }
            levenberg_marquardt(family, start, &free, sys, &xs, cfg.max_iter)
        })
        .collect();
    let (best, objective) = fits
        .into_iter()
        .filter(|(_, o)| o.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::NonConvergence("no restart produced a finite fit".into()))?;
    Ok(ParametricFit { curve: ParametricCurve::from_params(family, &best), objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_model::{FiniteModel1D, KnotGrid1D};
    use crate::instruments::{annual_grid, assemble_system, AssembleOptions, Quote};
    use crate::kernels::{KernelFamily, KernelSpec};
    use crate::solver::{conditional_moments, sample_paths, solve_mode, ConstrainedProblem};
    use proptest::{prop_assert, proptest};

    #[test]
    fn spot_and_forward_of_exponential() {
        let c = ParametricCurve::nelson_siegel(1.0, 0.02, 0.0, 0.0).unwrap();
        for x in [0.5, 3.0, 30.0] {
            assert!((spot_rate(&c, x).unwrap() - 0.02).abs() < 1e-15);
            assert!((forward_rate(&c, x).unwrap() - 0.02).abs() < 1e-15);
        }
        let one = FnCurve(|_| 1.0);
        assert_eq!(spot_rate(&one, 2.0).unwrap(), 0.0);
        assert!(matches!(spot_rate(&FnCurve(|_| -0.1), 2.0), Err(Error::NonPositiveValue(_))));
        assert_eq!(spot_rate(&one, 0.0), Err(Error::ZeroHorizon));
    }

    #[test]
    fn annuity_values() {
        let one = FnCurve(|_| 1.0);
        assert_eq!(annuity_pv(&one, 40.0, 12).unwrap(), 40.0);
        let c = FnCurve(|x: f64| (-0.03 * x).exp() + 0.5);
        assert_eq!(annuity_pv(&c, 1.0, 1).unwrap(), 1.5);
        let grid = KnotGrid1D::new(0.0, 10.0, 10).unwrap();
        let short = Path1D { grid, coeffs: DVector::from_element(12, 0.0) };
        assert!(matches!(annuity_pv(&short, 40.0, 12), Err(Error::OutOfDomain(_))));
    }

    #[test]
    fn band_degenerate_cases() {
        let x = vec![0.0, 1.0, 2.0];
        let curve = vec![1.0, 0.9, 0.8];
        let b = band_from_values(&x, curve.clone(), &[curve.clone(), curve.clone()], 0.95).unwrap();
        assert_eq!(b.lower, curve);
        assert_eq!(b.upper, curve);
        let samples = vec![vec![1.0, 0.5, 0.1], vec![1.0, 0.7, 0.2], vec![1.0, 0.9, 0.6]];
        let b = band_from_values(&x, curve.clone(), &samples, 0.0).unwrap();
        assert_eq!(b.lower, b.median);
        assert_eq!(b.upper, b.median);
        assert_eq!(b.median, vec![1.0, 0.7, 0.2]);
        assert!(matches!(band_from_values(&x, curve.clone(), &samples[..1], 0.9), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn quantiles_follow_linear_interpolation() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.025) - 1.075).abs() < 1e-15);
    }

    #[test]
    fn unconstrained_band_matches_gaussian_quantiles() {
        let grid = KnotGrid1D::new(0.0, 10.0, 10).unwrap();
        let model = FiniteModel1D::new(grid, KernelSpec::one_dim(KernelFamily::Matern52, 4.0, 1.0).unwrap(), Monotonicity::Unconstrained).unwrap();
        let sys = MarketFitSystem::interpolation(vec![vec![2.0], vec![7.0]], DVector::from_vec(vec![0.3, -0.2])).unwrap();
        let p = ConstrainedProblem::for_curve(&model, &sys, None).unwrap();
        let mode = model.path(solve_mode(&p).unwrap().coeffs).unwrap();
        let draws = sample_paths(&p, 10_000, 3).unwrap();
        let paths: Vec<Path1D> = draws.draws.into_iter().map(|c| model.path(c).unwrap()).collect();
        let xs = vec![0.5, 4.5, 9.5];
        let band = bands(&mode, &paths, &xs, 0.95).unwrap();
        let (_, cov) = conditional_moments(&p.gamma, &p.constraints, &p.rhs).unwrap();
        let phi = model.phi_matrix(&xs).unwrap();
        let var = &phi * cov * phi.transpose();
        for i in 0..xs.len() {
            let half = 1.959964 * var[(i, i)].sqrt();
            let width = (band.upper[i] - band.lower[i]) / 2.0;
            assert!((width - half).abs() < 0.1 * half, "x={} {width} vs {half}", xs[i]);
        }
    }

    #[test]
    fn nelson_siegel_limits() {
        let c = ParametricCurve::nelson_siegel(7.4615, 0.0189, -0.0160, 0.0487).unwrap();
        assert!(c.yield_at(10.0).unwrap().is_finite());
        assert!((c.yield_at(1e-10).unwrap() - (0.0189 - 0.0160)).abs() < 1e-12);
        assert_eq!(c.yield_at(0.0), Err(Error::ZeroHorizon));
        let flat = ParametricCurve::svensson(2.0, 5.0, [0.03, 0.0, 0.0, 0.0]).unwrap();
        assert!((flat.yield_at(17.0).unwrap() - 0.03).abs() < 1e-15);
        assert!(ParametricCurve::nelson_siegel(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn parametric_forward_matches_finite_difference() {
        let c = ParametricCurve::svensson(3.0, 9.0, [0.03, -0.01, 0.02, -0.015]).unwrap();
        for x in [0.3, 1.0, 5.0, 20.0] {
            let h = 1e-5;
            let fd = -(c.discount(x + h).ln() - c.discount(x - h).ln()) / (2.0 * h);
            assert!((forward_rate(&c, x).unwrap() - fd).abs() < 1e-8);
        }
    }

    fn ns_system(curve: &ParametricCurve) -> MarketFitSystem {
        // OIS quotes priced off the curve, so a perfect fit exists
        let e = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 15, 20, 30, 40];
        let quotes: Vec<Quote> = e
            .iter()
            .map(|&t| {
                let annuity: f64 = (1..=t).map(|k| curve.discount(k as f64)).sum();
                Quote::ois(t as f64, (1.0 - curve.discount(t as f64)) / annuity)
            })
            .collect();
        assert_eq!(quotes.len(), 14);
        assemble_system(&quotes, &annual_grid(40), &AssembleOptions::default()).unwrap()
    }

    #[test]
    fn nelson_siegel_round_trip() {
        let truth = ParametricCurve::nelson_siegel(2.5, 0.035, -0.02, 0.01).unwrap();
        let sys = ns_system(&truth);
        let cfg = FitConfig { restarts: 12, ..Default::default() };
        let fit = parametric_fit(&sys, ParametricFamily::NelsonSiegel, 7, &cfg).unwrap();
        for t in [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0] {
            assert!((fit.curve.yield_at(t).unwrap() - truth.yield_at(t).unwrap()).abs() < 1e-4);
        }
        let again = parametric_fit(&sys, ParametricFamily::NelsonSiegel, 7, &cfg).unwrap();
        assert_eq!(fit.curve, again.curve);

        let nested = FitConfig { fixed_beta4: Some(0.0), ..cfg };
        let sv = parametric_fit(&sys, ParametricFamily::Svensson, 7, &nested).unwrap();
        assert_eq!(sv.curve.beta[3], 0.0);
        assert!((sv.objective - fit.objective).abs() < 1e-10);
    }

    #[test]
    fn params_csv_order() {
        let c = ParametricCurve::svensson(1.0, 2.0, [0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut buf = Vec::new();
        c.write_params_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lambda1,lambda2,beta1,beta2,beta3,beta4\n"));
    }

    #[test]
    fn violation_counts() {
        assert_eq!(count_violations(&[1.0, 0.9, 0.95, 0.8, 0.85], Monotonicity::NonIncreasing, 0.0), 2);
        assert_eq!(count_violations(&[1.0, 1.0 + 1e-13], Monotonicity::NonIncreasing, 1e-12), 0);
    }

    proptest! {
        #[test]
        fn annuity_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, r1 in 0.0f64..0.1, r2 in 0.0f64..0.1) {
            let y1 = |x: f64| (-r1 * x).exp();
            let y2 = |x: f64| 1.0 / (1.0 + r2 * x);
            let mix = FnCurve(|x| a * y1(x) + b * y2(x));
            let lhs = annuity_pv(&mix, 10.0, 4).unwrap();
            let rhs = a * annuity_pv(&FnCurve(y1), 10.0, 4).unwrap() + b * annuity_pv(&FnCurve(y2), 10.0, 4).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn decreasing_positive_curves_have_nonnegative_rates(slopes in proptest::collection::vec(-0.05f64..0.0, 12)) {
            let grid = KnotGrid1D::new(0.0, 10.0, 10).unwrap();
            let mut coeffs = DVector::from_vec(slopes);
            coeffs[0] = 1.0;
            let path = Path1D { grid, coeffs };
            for x in grid.linspace(101).into_iter().skip(1) {
                prop_assert!(spot_rate(&path, x).unwrap() >= 0.0);
                prop_assert!(forward_rate(&path, x).unwrap() >= 0.0);
            }
        }
    }
}
