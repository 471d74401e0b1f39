//! Cross-validation estimates of the kernel length scale and variance.
//!
//! The length scale minimizes the leave-one-out error of the constrained mode,
//! which does not depend on the variance. The variance then solves the
//! standardized-residual equation, with the denominators estimated by
//! constrained sampling.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finite_model::{FiniteModel1D, KnotGrid1D, Monotonicity};
use crate::gp_linear::MarketFitSystem;
use crate::kernels::{KernelFamily, KernelSpec};
use crate::solver::{sample_paths_with, solve_mode, ConstrainedProblem, SamplerConfig};

/// Everything about the model except the hyperparameters being estimated.
#[derive(Debug, Clone)]
pub struct ModelTemplate {
    pub grid: KnotGrid1D,
    pub family: KernelFamily,
    /// Relative nugget; the family default when `None`.
    pub nugget: Option<f64>,
    pub cone: Monotonicity,
    /// Value pinned at the lower end of the grid in every fold.
    pub anchor: Option<f64>,
}

impl ModelTemplate {
    pub fn build(&self, theta: f64, sigma2: f64) -> Result<FiniteModel1D> {
        let nugget = self.nugget.unwrap_or(self.family.default_nugget());
        let spec = KernelSpec::with_nugget(self.family, vec![theta], sigma2, nugget)?;
        FiniteModel1D::new(self.grid, spec, self.cone)
    }
}

#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub grid_points: usize,
    pub refine_steps: usize,
    /// Initial bracket for the variance equation, widened by decades on failure.
    pub sigma_bracket: (f64, f64),
    pub sigma_limits: (f64, f64),
    pub max_bisections: usize,
    /// Relative width at which bisection stops.
    pub sigma_tol: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            theta_min: 0.5,
            theta_max: 60.0,
            grid_points: 30,
            refine_steps: 20,
            sigma_bracket: (1e-2, 1e2),
            sigma_limits: (1e-8, 1e8),
            max_bisections: 60,
            sigma_tol: 1e-6,
            mc_samples: 2000,
            seed: 0,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_min > 0.0 && self.theta_max > self.theta_min && self.theta_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("length-scale range [{}, {}]", self.theta_min, self.theta_max)));
        }
        if self.grid_points < 3 {
            return Err(Error::InvalidGrid("length-scale grid needs at least 3 points".into()));
        }
        if self.mc_samples < 1000 {
            return Err(Error::TooFewSamples { needed: 1000, got: self.mc_samples });
        }
        let (lo, hi) = self.sigma_bracket;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::InvalidGrid(format!("variance bracket [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// Mode fitted without constraint `i`, evaluated through that constraint.
struct Fold {
    problem: ConstrainedProblem,
    /// Row of `A Phi`: maps coefficients to the held-out constraint.
    held_out: DVector<f64>,
    prediction: f64,
}

fn fold(model: &FiniteModel1D, sys: &MarketFitSystem, anchor: Option<f64>, i: usize) -> Result<Fold> {
    let phi = model.phi_matrix(&sys.horizons()?)?;
    let held_out = (sys.a.row(i) * &phi).transpose();
    let problem = ConstrainedProblem::for_curve(model, &sys.without_row(i), anchor)?;
    let mode = solve_mode(&problem).map_err(|e| match e {
        Error::Infeasible => Error::InfeasibleFold { fold: i },
        other => other,
    })?;
    let prediction = held_out.dot(&mode.coeffs);
    Ok(Fold { problem, held_out, prediction })
}

/// Held-out residuals `b_i - (A M_{-i}(X))_i`.
pub fn loo_residuals(theta: f64, sys: &MarketFitSystem, template: &ModelTemplate) -> Result<Vec<f64>> {
    let model = template.build(theta, 1.0)?;
    (0..sys.n_constraints())
        .into_par_iter()
        .map(|i| Ok(sys.b[i] - fold(&model, sys, template.anchor, i)?.prediction))
        .collect()
}

/// Sum of squared held-out residuals of the constrained mode.
pub fn loo_objective(theta: f64, sys: &MarketFitSystem, template: &ModelTemplate) -> Result<f64> {
    Ok(loo_residuals(theta, sys, template)?.iter().map(|r| r * r).sum())
}

#[derive(Debug, Clone)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub objective: f64,
    /// Every evaluated `(theta, objective)`, sorted by `theta`.
    pub trace: Vec<(f64, f64)>,
    /// The coarse log-spaced scan alone, in order.
    pub grid: Vec<(f64, f64)>,
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == count => hi,
            _ => (a + (b - a) * i as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Log-spaced scan followed by golden-section refinement around the best point.
pub fn estimate_theta(sys: &MarketFitSystem, template: &ModelTemplate, cfg: &EstimationConfig) -> Result<ThetaEstimate> {
    cfg.validate()?;
    let thetas = log_grid(cfg.theta_min, cfg.theta_max, cfg.grid_points);
    let values: Vec<f64> = thetas.par_iter().map(|&t| loo_objective(t, sys, template)).collect::<Result<_>>()?;
    let grid: Vec<(f64, f64)> = thetas.iter().copied().zip(values.iter().copied()).collect();
    let mut trace = grid.clone();
    let best = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("grid is non-empty");
    let mut lo = thetas[best.saturating_sub(1)].ln();
    let mut hi = thetas[(best + 1).min(thetas.len() - 1)].ln();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |u: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = loo_objective(u.exp(), sys, template)?;
        trace.push((u.exp(), v));
        Ok(v)
    };
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let mut fc = eval(c, &mut trace)?;
    let mut fd = eval(d, &mut trace)?;
    for _ in 2..cfg.refine_steps {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = eval(c, &mut trace)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = eval(d, &mut trace)?;
        }
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    let &(theta, objective) = trace.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("trace is non-empty");
    Ok(ThetaEstimate { theta, objective, trace, grid })
}

/// Writes `theta,objective` rows.
pub fn write_trace_csv<W: std::io::Write>(mut w: W, trace: &[(f64, f64)]) -> std::io::Result<()> {
    writeln!(w, "theta,objective")?;
    for (t, v) in trace {
        writeln!(w, "{},{}", crate::curves::fmt_num(*t), crate::curves::fmt_num(*v))?;
    }
    Ok(())
}

/// Denominators only need averages, so Gibbs takes over well before rejection
/// becomes hopeless.
fn denominator_sampler() -> SamplerConfig {
    SamplerConfig { min_acceptance: 1e-2, ..SamplerConfig::default() }
}

/// Folds of the variance equation: fixed numerators, and problems whose
/// denominators are re-simulated for each candidate variance.
pub struct SigmaCriterion {
    folds: Vec<Fold>,
    numerators: Vec<f64>,
    samples: usize,
    seed: u64,
}

impl SigmaCriterion {
    pub fn new(sys: &MarketFitSystem, template: &ModelTemplate, theta: f64, samples: usize, seed: u64) -> Result<Self> {
        let model = template.build(theta, 1.0)?;
        let folds: Vec<Fold> = (0..sys.n_constraints())
            .into_par_iter()
            .map(|i| fold(&model, sys, template.anchor, i))
            .collect::<Result<_>>()?;
        let numerators = folds.iter().enumerate().map(|(i, f)| (sys.b[i] - f.prediction).powi(2)).collect();
        Ok(SigmaCriterion { folds, numerators, samples, seed })
    }

    /// `E[((A Y(X))_i - (A M_{-i}(X))_i)^2 | D_i]` under variance `sigma^2`.
    pub fn denominators(&self, sigma: f64) -> Result<Vec<f64>> {
        self.folds
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let problem = f.problem.scaled(sigma * sigma)?;
                let mode = solve_mode(&problem).map_err(|_| Error::InfeasibleFold { fold: i })?;
                // common random numbers: the same streams for every sigma
                let draws = sample_paths_with(&problem, &mode, self.samples, self.seed.wrapping_add(i as u64), &denominator_sampler())?;
                Ok(draws.draws.iter().map(|xi| (f.held_out.dot(xi) - f.prediction).powi(2)).sum::<f64>() / self.samples as f64)
            })
            .collect()
    }

    /// Mean standardized squared residual.
    pub fn value(&self, sigma: f64) -> Result<f64> {
        let den = self.denominators(sigma)?;
        Ok(self.numerators.iter().zip(&den).map(|(n, d)| n / d).sum::<f64>() / den.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub iterations: usize,
    /// Criterion value at the returned `sigma`.
    pub criterion: f64,
}

/// Solves "mean standardized LOO residual = 1" by bisection on `log sigma`.
pub fn estimate_sigma(sys: &MarketFitSystem, template: &ModelTemplate, theta: f64, cfg: &EstimationConfig) -> Result<SigmaEstimate> {
    cfg.validate()?;
    if sys.n_constraints() == 0 {
        return Err(Error::EmptyInput("no constraints to cross-validate".into()));
    }
    let crit = SigmaCriterion::new(sys, template, theta, cfg.mc_samples, cfg.seed)?;
    let (mut lo, mut hi) = cfg.sigma_bracket;
    let mut f_lo = crit.value(lo)? - 1.0;
    while f_lo < 0.0 && lo / 10.0 >= cfg.sigma_limits.0 {
        hi = lo;
        lo /= 10.0;
        f_lo = crit.value(lo)? - 1.0;
    }
    let mut f_hi = crit.value(hi)? - 1.0;
    while f_hi > 0.0 && hi * 10.0 <= cfg.sigma_limits.1 {
        lo = hi;
        f_lo = f_hi;
        hi *= 10.0;
        f_hi = crit.value(hi)? - 1.0;
    }
    if !(f_lo >= 0.0 && f_hi <= 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    let mut iterations = 0;
    while hi / lo > 1.0 + cfg.sigma_tol {
        if iterations == cfg.max_bisections {
            return Err(Error::MaxIterations(cfg.max_bisections));
        }
        iterations += 1;
        let mid = (lo * hi).sqrt();
        let f_mid = crit.value(mid)? - 1.0;
        if f_mid == 0.0 {
            return Ok(SigmaEstimate { sigma: mid, iterations, criterion: 1.0 });
        }
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sigma = (lo * hi).sqrt();
    Ok(SigmaEstimate { sigma, iterations, criterion: crit.value(sigma)? })
}

/// Unconstrained leave-one-out statistics of the constraint values `A Y(X)`.
#[derive(Debug, Clone)]
pub struct ClassicalLoo {
    pub residuals: Vec<f64>,
    /// Predictive variances at unit process variance.
    pub variances: Vec<f64>,
}

impl ClassicalLoo {
    pub fn objective(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    /// Variance making the mean standardized squared residual equal one.
    pub fn sigma2(&self) -> f64 {
        self.residuals.iter().zip(&self.variances).map(|(r, v)| r * r / v).sum::<f64>() / self.residuals.len() as f64
    }
}

/// Closed-form LOO for the zero-mean Gaussian vector `A Y(X) ~ N(0, A K A^T)`:
/// residual `[S^{-1} b]_i / [S^{-1}]_ii`, variance `1 / [S^{-1}]_ii`.
pub fn classical_loo(sys: &MarketFitSystem, family: KernelFamily, theta: f64, nugget: Option<f64>) -> Result<ClassicalLoo> {
    let spec = KernelSpec::with_nugget(family, vec![theta], 1.0, nugget.unwrap_or(family.default_nugget()))?;
    let k = spec.gram(&sys.points)?;
    let mut s = &sys.a * k * sys.a.transpose();
    if let Some(noise) = &sys.noise {
        s += noise;
    }
    let n = s.nrows();
    let inv = s.cholesky().ok_or(Error::SingularConstraintMatrix)?.inverse();
    let alpha = &inv * &sys.b;
    Ok(ClassicalLoo {
        residuals: (0..n).map(|i| alpha[i] / inv[(i, i)]).collect(),
        variances: (0..n).map(|i| 1.0 / inv[(i, i)]).collect(),
    })
}

/// Classical estimates: grid-plus-golden search of the unconstrained LOO error,
/// then the closed-form variance.
pub fn estimate_classical(sys: &MarketFitSystem, family: KernelFamily, nugget: Option<f64>, cfg: &EstimationConfig) -> Result<(ThetaEstimate, f64)> {
    cfg.validate()?;
    let objective = |t: f64| classical_loo(sys, family, t, nugget).map(|l| l.objective());
    let thetas = log_grid(cfg.theta_min, cfg.theta_max, cfg.grid_points);
    let grid: Vec<(f64, f64)> = thetas.iter().map(|&t| Ok((t, objective(t)?))).collect::<Result<_>>()?;
    let mut trace = grid.clone();
    let best = (0..grid.len()).min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1)).expect("grid is non-empty");
    let (mut lo, mut hi) = (thetas[best.saturating_sub(1)].ln(), thetas[(best + 1).min(thetas.len() - 1)].ln());
    for _ in 0..cfg.refine_steps {
        let third = (hi - lo) / 3.0;
        let (c, d) = (lo + third, hi - third);
        let (fc, fd) = (objective(c.exp())?, objective(d.exp())?);
        trace.push((c.exp(), fc));
        trace.push((d.exp(), fd));
        if fc <= fd {
            hi = d;
        } else {
            lo = c;
        }
    }
    trace.sort_by(|a, b| a.0.total_cmp(&b.0));
    let &(theta, value) = trace.iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("trace is non-empty");
    let sigma2 = classical_loo(sys, family, theta, nugget)?.sigma2();
    Ok((ThetaEstimate { theta, objective: value, trace, grid }, sigma2))
}

/// `true` when the sequence falls then rises, ignoring wiggles below `tol` relative.
pub fn is_unimodal(values: &[f64], tol: f64) -> bool {
    let Some(k) = (0..values.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])) else { return true };
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    values[..=k].windows(2).all(|w| w[1] <= w[0] + tol * scale) && values[k..].windows(2).all(|w| w[1] >= w[0] - tol * scale)
}
