//! Constrained inference on the finite-dimensional coefficients.
//!
//! Everything works in whitened coordinates: with `Gamma = L L^T` and
//! `xi = L z`, the prior is `z ~ N(0, I)`, the equalities become `(B L) z = b`
//! and the cone becomes `(G L) z <= 0`. The mode is then the minimum-norm point
//! of a polyhedron, found with a dual active-set method, and sampling happens in
//! an orthonormal basis of the equality null space.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finite_model::{FiniteModel1D, FiniteModel2D, LinearCone, Path1D};
use crate::gp_linear::{row_rank, MarketFitSystem};

/// Equality residual accepted for a mode or a draw.
pub const EQ_TOL: f64 = 1e-8;
/// Cone slack below which violations are snapped back onto the boundary.
pub const CONE_TOL: f64 = 1e-10;

/// `xi ~ N(0, Gamma)` restricted to `B xi = b` and the cone.
#[derive(Debug, Clone)]
pub struct ConstrainedProblem {
    pub gamma: DMatrix<f64>,
    pub constraints: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub cone: LinearCone,
    chol: DMatrix<f64>,
}

impl ConstrainedProblem {
    pub fn new(gamma: DMatrix<f64>, constraints: DMatrix<f64>, rhs: DVector<f64>, cone: LinearCone) -> Result<Self> {
        let n = gamma.nrows();
        if gamma.ncols() != n || constraints.ncols() != n || cone.dim != n {
            return Err(Error::DimensionMismatch(format!(
                "covariance {}x{}, constraints with {} columns, cone over {}",
                gamma.nrows(),
                gamma.ncols(),
                constraints.ncols(),
                cone.dim
            )));
        }
        if constraints.nrows() != rhs.len() {
            return Err(Error::DimensionMismatch(format!("{} constraint rows but {} right-hand sides", constraints.nrows(), rhs.len())));
        }
        if constraints.nrows() > n {
            return Err(Error::RankDeficient { rank: n, rows: constraints.nrows() });
        }
        if constraints.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("non-finite constraint entry".into()));
        }
        let rank = row_rank(&constraints);
        if rank < constraints.nrows() {
            return Err(Error::RankDeficient { rank, rows: constraints.nrows() });
        }
        let chol = gamma.clone().cholesky().ok_or(Error::SingularCovariance)?.unpack();
        Ok(ConstrainedProblem { gamma, constraints, rhs, cone, chol })
    }

    /// `A Phi xi = b` for a one-dimensional model, plus `Y(lower) = anchor` when given.
    pub fn for_curve(model: &FiniteModel1D, sys: &MarketFitSystem, anchor: Option<f64>) -> Result<Self> {
        let phi = model.phi_matrix(&sys.horizons()?)?;
        let mut b_mat = &sys.a * phi;
        let mut rhs = sys.b.clone();
        if let Some(value) = anchor {
            b_mat = b_mat.insert_row(0, 0.0);
            b_mat[(0, 0)] = 1.0;
            rhs = rhs.insert_row(0, value);
        }
        ConstrainedProblem::new(model.gamma.clone(), b_mat, rhs, model.cone_constraints())
    }

    /// Stacks `A_t H_t xi = b_t` across quotation dates; the anchor pins
    /// `Y(lower, t)` on every date.
    pub fn for_surface(model: &FiniteModel2D, slices: &[(f64, MarketFitSystem)], anchor: Option<f64>) -> Result<Self> {
        let dim = model.n_coeffs();
        let mut rows: Vec<DMatrix<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        for (t, sys) in slices {
            if let Some(value) = anchor {
                rows.push(model.h_matrix(&[model.x_grid.lower], *t)?);
                rhs.push(value);
            }
            rows.push(&sys.a * model.h_matrix(&sys.horizons()?, *t)?);
            rhs.extend(sys.b.iter());
        }
        let total: usize = rows.iter().map(|r| r.nrows()).sum();
        let mut b_mat = DMatrix::zeros(total, dim);
        let mut at = 0;
        for r in rows {
            b_mat.rows_mut(at, r.nrows()).copy_from(&r);
            at += r.nrows();
        }
        ConstrainedProblem::new(model.gamma.clone(), b_mat, DVector::from_vec(rhs), model.cone_constraints())
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn n_equalities(&self) -> usize {
        self.constraints.nrows()
    }

    /// Lower Cholesky factor of the covariance.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Same problem with the covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::NonPositiveValue(factor));
        }
        let mut out = self.clone();
        out.gamma *= factor;
        out.chol *= factor.sqrt();
        Ok(out)
    }

    /// Same problem without equality row `i`.
    pub fn without_equality(&self, i: usize) -> Result<Self> {
        if i >= self.n_equalities() {
            return Err(Error::DimensionMismatch(format!("no equality row {i}")));
        }
        let mut out = self.clone();
        out.constraints = self.constraints.clone().remove_row(i);
        out.rhs = self.rhs.clone().remove_row(i);
        Ok(out)
    }

    pub fn equality_residual(&self, xi: &DVector<f64>) -> f64 {
        if self.n_equalities() == 0 {
            return 0.0;
        }
        (&self.constraints * xi - &self.rhs).amax()
    }

    fn whitened(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (&self.constraints * &self.chol, self.cone.to_dense() * &self.chol)
    }
}

/// Mean and covariance of `xi | B xi = b` ignoring the cone.
pub fn conditional_moments(gamma: &DMatrix<f64>, b: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if b.ncols() != gamma.nrows() || b.nrows() != rhs.len() {
        return Err(Error::DimensionMismatch("constraint shape does not match covariance".into()));
    }
    if b.nrows() == 0 {
        return Ok((DVector::zeros(gamma.nrows()), gamma.clone()));
    }
    let gb = gamma * b.transpose();
    let s = b * &gb;
    let chol = s.cholesky().ok_or(Error::SingularConstraintMatrix)?;
    let mean = &gb * chol.solve(rhs);
    let mut cov = gamma - &gb * chol.solve(&gb.transpose());
    cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// Minimizer of `0.5 xi^T Gamma^{-1} xi` over the feasible set.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub coeffs: DVector<f64>,
    /// Indices of cone rows active at the solution.
    pub active: Vec<usize>,
    /// Lagrange multipliers: `Gamma^{-1} xi = B^T eq - sum_active G_r^T cone_r`.
    pub eq_multipliers: DVector<f64>,
    pub cone_multipliers: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    whitened: DVector<f64>,
}

struct DualActiveSet {
    z: DVector<f64>,
    /// Constraint ids: `0..m` equalities, `m..m+q` cone rows.
    active: Vec<usize>,
    multipliers: Vec<f64>,
    signs: Vec<f64>,
    iterations: usize,
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

fn rotate_columns(j: &mut DMatrix<f64>, k: usize, c: f64, s: f64) {
    for r in 0..j.nrows() {
        let (x, y) = (j[(r, k)], j[(r, k + 1)]);
        j[(r, k)] = c * x + s * y;
        j[(r, k + 1)] = -s * x + c * y;
    }
}

/// Solves `R[..q, ..q] x = d[..q]`.
fn upper_solve(r: &DMatrix<f64>, d: &DVector<f64>, q: usize) -> DVector<f64> {
    let mut x = DVector::zeros(q);
    for i in (0..q).rev() {
        let mut v = d[i];
        for k in i + 1..q {
            v -= r[(i, k)] * x[k];
        }
        x[i] = v / r[(i, i)];
    }
    x
}

/// Solves `R[..q, ..q]^T x = d`.
fn upper_transpose_solve(r: &DMatrix<f64>, d: &DVector<f64>, q: usize) -> DVector<f64> {
    let mut x = DVector::zeros(q);
    for i in 0..q {
        let mut v = d[i];
        for k in 0..i {
            v -= r[(k, i)] * x[k];
        }
        x[i] = v / r[(i, i)];
    }
    x
}

/// Minimum-norm `z` with `E z = b` and `F z <= 0` (Goldfarb-Idnani, identity Hessian).
fn dual_active_set(e: &DMatrix<f64>, b: &DVector<f64>, f: &DMatrix<f64>) -> Result<DualActiveSet> {
    let n = e.ncols();
    let m = e.nrows();
    let q = f.nrows();
    let mut signs = vec![1.0; m];
    let normal = |k: usize, signs: &[f64]| -> DVector<f64> {
        if k < m {
            e.row(k).transpose() * signs[k]
        } else {
            -f.row(k - m).transpose()
        }
    };
    let bound = |k: usize, signs: &[f64]| if k < m { b[k] * signs[k] } else { 0.0 };
    let row_norms: Vec<f64> = (0..q).map(|r| f.row(r).norm()).collect();

    let mut z = DVector::zeros(n);
    let mut j = DMatrix::identity(n, n);
    let mut r = DMatrix::zeros(n, n);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let max_iter = 20 * (n + m + q) + 100;

    loop {
        let next_eq = (0..m).find(|k| !active.contains(k));
        let p = match next_eq {
            Some(k) => {
                signs[k] = if e.row(k).dot(&z.transpose()) - b[k] > 0.0 { -1.0 } else { 1.0 };
                Some(k)
            }
            None => {
                let scale = 1.0 + z.norm();
                let mut best: Option<(usize, f64)> = None;
                let fz = f * &z;
                for rr in 0..q {
                    let k = m + rr;
                    if active.contains(&k) || row_norms[rr] == 0.0 {
                        continue;
                    }
                    let slack = -fz[rr] / row_norms[rr];
                    if slack < -1e-14 * scale && best.is_none_or(|(_, s)| slack < s) {
                        best = Some((k, slack));
                    }
                }
                best.map(|(k, _)| k)
            }
        };
        let Some(p) = p else { break };
        let np = normal(p, &signs);
        let bp = bound(p, &signs);
        let np_norm = np.norm();
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::MaxIterations(max_iter));
            }
            let qa = active.len();
            let d = j.tr_mul(&np);
            let tail = d.rows(qa, n - qa);
            let step = j.columns(qa, n - qa) * tail;
            let rdir = upper_solve(&r, &d, qa);
            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (idx, &k) in active.iter().enumerate() {
                if k >= m && rdir[idx] > 0.0 {
                    let t = u[idx] / rdir[idx];
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(idx);
                    }
                }
            }
            let tail_norm = tail.norm();
            let t2 = if tail_norm > 1e-12 * np_norm {
                let slack = np.dot(&z) - bp;
                (-slack / (tail_norm * tail_norm)).max(0.0)
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::Infeasible);
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                z.axpy(t, &step, 1.0);
            }
            for (idx, val) in u.iter_mut().enumerate() {
                *val -= t * rdir[idx];
            }
            up += t;
            if t2 <= t1 {
                // add p: rotate d so only its first qa+1 entries survive
                let mut d = d;
                for i in (qa + 1..n).rev() {
                    let (c, s, h) = givens(d[i - 1], d[i]);
                    if s != 0.0 || c != 1.0 {
                        rotate_columns(&mut j, i - 1, c, s);
                    }
                    d[i - 1] = h;
                    d[i] = 0.0;
                }
                for i in 0..=qa {
                    r[(i, qa)] = d[i];
                }
                active.push(p);
                u.push(up);
                break;
            }
            let l = drop_at.expect("partial step always names a constraint");
            active.remove(l);
            u.remove(l);
            for c in l..qa - 1 {
                for i in 0..=c + 1 {
                    r[(i, c)] = r[(i, c + 1)];
                }
            }
            for i in 0..n {
                r[(i, qa - 1)] = 0.0;
            }
            for c in l..qa - 1 {
                let (cs, sn, h) = givens(r[(c, c)], r[(c + 1, c)]);
                r[(c, c)] = h;
                r[(c + 1, c)] = 0.0;
                for col in c + 1..qa - 1 {
                    let (x, y) = (r[(c, col)], r[(c + 1, col)]);
                    r[(c, col)] = cs * x + sn * y;
                    r[(c + 1, col)] = -sn * x + cs * y;
                }
                rotate_columns(&mut j, c, cs, sn);
            }
        }
    }

    // polish on the final active set: z = J1 R^{-T} b_act, multipliers R^{-1} (R^{-T} b_act)
    let qa = active.len();
    let b_act = DVector::from_iterator(qa, active.iter().map(|&k| bound(k, &signs)));
    let w = upper_transpose_solve(&r, &b_act, qa);
    let z = if qa == 0 { DVector::zeros(n) } else { j.columns(0, qa) * &w };
    let mut wpad = DVector::zeros(n);
    wpad.rows_mut(0, qa).copy_from(&w);
    let multipliers = upper_solve(&r, &wpad, qa).iter().copied().collect();
    Ok(DualActiveSet { z, active, multipliers, signs, iterations })
}

/// Mode of the constrained Gaussian: the most likely coefficient vector.
pub fn solve_mode(problem: &ConstrainedProblem) -> Result<ModeSolution> {
    let (e, f) = problem.whitened();
    let m = e.nrows();
    let gi = dual_active_set(&e, &problem.rhs, &f)?;
    let mut coeffs = &problem.chol * &gi.z;
    let worst = problem.cone.snap(&mut coeffs, CONE_TOL);
    if worst > 0.0 {
        return Err(Error::NonConvergence(format!("cone violated by {worst:e} at the mode")));
    }
    let residual = problem.equality_residual(&coeffs);
    if residual > EQ_TOL * (1.0 + problem.rhs.amax()) {
        return Err(Error::NonConvergence(format!("equality residual {residual:e} at the mode")));
    }
    let mut eq_multipliers = DVector::zeros(m);
    let mut active = Vec::new();
    let mut cone_multipliers = Vec::new();
    for (&k, &u) in gi.active.iter().zip(&gi.multipliers) {
        if k < m {
            eq_multipliers[k] = u * gi.signs[k];
        } else {
            active.push(k - m);
            cone_multipliers.push(u);
        }
    }
    let order = {
        let mut idx: Vec<usize> = (0..active.len()).collect();
        idx.sort_by_key(|&i| active[i]);
        idx
    };
    let active_sorted = order.iter().map(|&i| active[i]).collect();
    let mult_sorted = order.iter().map(|&i| cone_multipliers[i]).collect();
    Ok(ModeSolution {
        objective: 0.5 * gi.z.norm_squared(),
        coeffs,
        active: active_sorted,
        eq_multipliers,
        cone_multipliers: mult_sorted,
        iterations: gi.iterations,
        whitened: gi.z,
    })
}

/// Mode curve of a one-dimensional model under a market-fit system.
pub fn mode_curve(model: &FiniteModel1D, sys: &MarketFitSystem, anchor: Option<f64>) -> Result<Path1D> {
    let problem = ConstrainedProblem::for_curve(model, sys, anchor)?;
    model.path(solve_mode(&problem)?.coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    /// Rejection from the conditional Gaussian recentred at the mode.
    Rejection,
    /// Coordinate-wise Gibbs on the truncated conditional distribution.
    Gibbs,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub pilot_proposals: usize,
    pub pilot_accepts: usize,
    pub min_acceptance: f64,
    /// Proposal budget for a single rejection draw.
    pub max_proposals_per_draw: u64,
    pub burn_in: usize,
    pub thinning: usize,
    /// Draws produced by each independent Gibbs chain.
    pub chain_length: usize,
    /// Skip the pilot and use this sampler.
    pub force: Option<SamplerKind>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            pilot_proposals: 100_000,
            pilot_accepts: 100,
            min_acceptance: 1e-4,
            max_proposals_per_draw: 10_000_000,
            burn_in: 100,
            thinning: 10,
            chain_length: 50,
            force: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleSet {
    pub draws: Vec<DVector<f64>>,
    pub kind: SamplerKind,
    pub proposals: u64,
    pub accepted: u64,
}

impl SampleSet {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// The feasible set in null-space coordinates: `z = z0 + Q2 y`, cone `W y <= h`.
struct NullSpace {
    z0: DVector<f64>,
    q2: DMatrix<f64>,
    w: DMatrix<f64>,
    h: DVector<f64>,
    y_mode: DVector<f64>,
}

impl NullSpace {
    fn build(problem: &ConstrainedProblem, mode: &ModeSolution) -> Self {
        let (e, f) = problem.whitened();
        let n = problem.dim();
        let m = e.nrows();
        let (z0, q2) = if m == 0 {
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            let mut padded = DMatrix::zeros(n, n);
            padded.columns_mut(0, m).copy_from(&e.transpose());
            let qr = padded.qr();
            let q = qr.q();
            let r = qr.r();
            let w = upper_transpose_solve(&r, &problem.rhs, m);
            (q.columns(0, m) * w, q.columns(m, n - m).into_owned())
        };
        let w = &f * &q2;
        let h = -(&f * &z0);
        let y_mode = q2.tr_mul(&mode.whitened);
        NullSpace { z0, q2, w, h, y_mode }
    }

    fn dim(&self) -> usize {
        self.q2.ncols()
    }

    fn coeffs(&self, problem: &ConstrainedProblem, y: &DVector<f64>) -> DVector<f64> {
        &problem.chol * (&self.z0 + &self.q2 * y)
    }

    /// One accepted rejection draw and the number of proposals it took.
    fn rejection_draw(&self, problem: &ConstrainedProblem, rng: &mut ChaCha8Rng, budget: u64) -> Option<(DVector<f64>, u64)> {
        let d = self.dim();
        for tries in 1..=budget {
            let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = &self.y_mode + &eps;
            // the exponent is nonnegative on the cone; clamp round-off
            let tilt = self.y_mode.dot(&eps).max(0.0);
            let u: f64 = rng.random();
            if u >= (-tilt).exp() {
                continue;
            }
            let wy = &self.w * &y;
            if wy.iter().zip(self.h.iter()).any(|(a, b)| a > b) {
                continue;
            }
            let xi = self.coeffs(problem, &y);
            if problem.cone.contains(&xi) {
                return Some((xi, tries));
            }
        }
        None
    }

    fn gibbs_chain(&self, problem: &ConstrainedProblem, rng: &mut ChaCha8Rng, count: usize, cfg: &SamplerConfig) -> Vec<DVector<f64>> {
        let d = self.dim();
        let mut y = self.y_mode.clone();
        let mut out = Vec::with_capacity(count);
        let recip = self.w.map(|c| if c != 0.0 { 1.0 / c } else { 0.0 });
        let sweep = |y: &mut DVector<f64>, rng: &mut ChaCha8Rng| {
            let mut slack = &self.h - &self.w * &*y;
            for i in 0..d {
                let col = self.w.column(i);
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for (&r, &s) in recip.column(i).iter().zip(slack.iter()) {
                    if r > 0.0 {
                        hi = hi.min(s.max(0.0) * r);
                    } else if r < 0.0 {
                        lo = lo.max(s.max(0.0) * r);
                    }
                }
                let (lo, hi) = (y[i] + lo, y[i] + hi);
                let new = if lo <= hi { truncated_standard_normal(lo, hi, rng) } else { y[i] };
                let delta = new - y[i];
                if delta != 0.0 {
                    slack.axpy(-delta, &col, 1.0);
                    y[i] = new;
                }
            }
        };
        for _ in 0..cfg.burn_in {
            sweep(&mut y, rng);
        }
        for _ in 0..count {
            for _ in 0..cfg.thinning.max(1) {
                sweep(&mut y, rng);
            }
            let mut xi = self.coeffs(problem, &y);
            problem.cone.snap(&mut xi, CONE_TOL);
            out.push(xi);
        }
        out
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws from `N(0, Gamma)` conditioned on the equalities and truncated to the cone.
pub fn sample_paths(problem: &ConstrainedProblem, n_samples: usize, seed: u64) -> Result<SampleSet> {
    let mode = solve_mode(problem)?;
    sample_paths_with(problem, &mode, n_samples, seed, &SamplerConfig::default())
}

pub fn sample_paths_with(
    problem: &ConstrainedProblem,
    mode: &ModeSolution,
    n_samples: usize,
    seed: u64,
    cfg: &SamplerConfig,
) -> Result<SampleSet> {
    let ns = NullSpace::build(problem, mode);
    if ns.dim() == 0 {
        let xi = ns.coeffs(problem, &DVector::zeros(0));
        return Ok(SampleSet { draws: vec![xi; n_samples], kind: SamplerKind::Rejection, proposals: 0, accepted: 0 });
    }
    let kind = match cfg.force {
        Some(k) => k,
        None => {
            let mut rng = stream_rng(seed, 0);
            let mut proposals = 0u64;
            let mut accepts = 0usize;
            // past this many proposals the rate is known to be below the floor
            let cap = (cfg.pilot_proposals as f64).min((cfg.pilot_accepts as f64 / cfg.min_acceptance).ceil()) as u64;
            while proposals < cap && accepts < cfg.pilot_accepts {
                let budget = cap - proposals;
                match ns.rejection_draw(problem, &mut rng, budget) {
                    Some((_, tries)) => {
                        proposals += tries;
                        accepts += 1;
                    }
                    None => proposals += budget,
                }
            }
            if (accepts as f64) < cfg.min_acceptance * proposals as f64 || accepts == 0 {
                SamplerKind::Gibbs
            } else {
                SamplerKind::Rejection
            }
        }
    };
    match kind {
        SamplerKind::Rejection => {
            let results: Vec<Option<(DVector<f64>, u64)>> = (0..n_samples)
                .into_par_iter()
                .map(|k| ns.rejection_draw(problem, &mut stream_rng(seed, k as u64 + 1), cfg.max_proposals_per_draw))
                .collect();
            let mut draws = Vec::with_capacity(n_samples);
            let mut proposals = 0;
            for res in results {
                match res {
                    Some((xi, tries)) => {
                        proposals += tries;
                        draws.push(xi);
                    }
                    None => {
                        return Err(Error::AcceptanceTooLow {
                            rate: draws.len() as f64 / (proposals + cfg.max_proposals_per_draw) as f64,
                            floor: cfg.min_acceptance,
                        })
                    }
                }
            }
            Ok(SampleSet { accepted: draws.len() as u64, draws, kind, proposals })
        }
        SamplerKind::Gibbs => {
            let per_chain = cfg.chain_length.max(1);
            let chains = n_samples.div_ceil(per_chain);
            let draws: Vec<DVector<f64>> = (0..chains)
                .into_par_iter()
                .flat_map_iter(|c| {
                    let count = per_chain.min(n_samples - c * per_chain);
                    let mut rng = stream_rng(seed, (1u64 << 40) + c as u64);
                    ns.gibbs_chain(problem, &mut rng, count, cfg)
                })
                .collect();
            let n = draws.len() as u64;
            Ok(SampleSet { draws, kind, proposals: n, accepted: n })
        }
    }
}

/// Standard normal restricted to `[lo, hi]`.
pub fn truncated_standard_normal<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo <= hi);
    if lo == hi {
        return lo;
    }
    if hi <= 0.0 {
        return -truncated_standard_normal(-hi, -lo, rng);
    }
    if lo < 0.0 && hi > 0.0 {
        if hi - lo < 2.5 {
            loop {
                let x = lo + (hi - lo) * rng.random::<f64>();
                if rng.random::<f64>() < (-0.5 * x * x).exp() {
                    return x;
                }
            }
        }
        loop {
            let x: f64 = rng.sample(StandardNormal);
            if x >= lo && x <= hi {
                return x;
            }
        }
    }
    // one-sided tail [lo, hi] with lo >= 0
    let alpha = 0.5 * (lo + (lo * lo + 4.0).sqrt());
    if hi - lo < 1.0 / alpha {
        loop {
            let x = lo + (hi - lo) * rng.random::<f64>();
            if rng.random::<f64>() < (0.5 * (lo * lo - x * x)).exp() {
                return x;
            }
        }
    }
    loop {
        let e: f64 = Exp1.sample(rng);
        let x = lo + e / alpha;
        if x > hi {
            continue;
        }
        if rng.random::<f64>() < (-0.5 * (x - alpha) * (x - alpha)).exp() {
            return x;
        }
    }
}
