use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gpcurve::curves::{band_from_values, bands, count_violations, fmt_num, forward_rate, parametric_fit, spot_rate, CurveBand, FitConfig};
use gpcurve::estimation::{estimate_classical, estimate_sigma, estimate_theta, write_trace_csv, EstimationConfig, ModelTemplate, ThetaEstimate};
use gpcurve::finite_model::{linspace, FiniteModel1D, FiniteModel2D, KnotGrid1D, Path1D};
use gpcurve::gp_linear::{GaussianPosterior, MarketFitSystem, MeanFunction};
use gpcurve::instruments::{assemble_system, horizon_grid, read_quotes, AssembleOptions, DiscountCurve, DiscountInput, QuoteKind};
use gpcurve::kernels::KernelSpec;
use gpcurve::solver::{sample_paths_with, solve_mode, ConstrainedProblem, ModeSolution, SampleSet, SamplerConfig};
use nalgebra::DVector;

use crate::config::RunConfig;
use crate::CliError;

/// Tolerance for quote horizons sitting exactly on a domain bound.
const DOMAIN_TOL: f64 = 1e-9;

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok((path, BufWriter::new(file)))
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_table(dir: &Path, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let (path, mut w) = create(dir, name)?;
    let err = io_at(&path);
    writeln!(w, "{}", header.join(",")).map_err(&err)?;
    for row in rows {
        writeln!(w, "{}", row.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(",")).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

fn write_band(dir: &Path, name: &str, band: &CurveBand) -> Result<(), CliError> {
    let (path, mut w) = create(dir, name)?;
    band.write_csv(&mut w).and_then(|_| w.flush()).map_err(io_at(&path))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    std::fs::create_dir_all(&cfg.output).map_err(io_at(&cfg.output))?;
    Ok(&cfg.output)
}

/// Quotes of one quotation date turned into a market-fit system.
struct CurveInput {
    kind: QuoteKind,
    n_quotes: usize,
    sys: MarketFitSystem,
    horizons: Vec<f64>,
}

fn load_curve(cfg: &RunConfig, path: &Path) -> Result<CurveInput, CliError> {
    let quotes = read_quotes(open(path)?)?;
    let kind = quotes.first().map(|q| q.kind).ok_or_else(|| CliError::Config(format!("{}: no quotes", path.display())))?;
    let discount = match &cfg.discount {
        Some(p) => Some(DiscountInput::from_csv(open(p)?)?),
        None => None,
    };
    let horizons = horizon_grid(&quotes, cfg.floating_frequency)?;
    let opts = AssembleOptions {
        discount: discount.as_ref().map(|d| d as &dyn DiscountCurve),
        floating_frequency: cfg.floating_frequency,
        bid_ask_noise: cfg.bid_ask_noise,
    };
    let sys = assemble_system(&quotes, &horizons, &opts)?;
    Ok(CurveInput { kind, n_quotes: quotes.len(), sys, horizons })
}

fn domain(cfg: &RunConfig, horizons: &[f64]) -> Result<(f64, f64), CliError> {
    let longest = horizons.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let upper = cfg.upper.unwrap_or(longest);
    if !(upper > cfg.lower) {
        return Err(CliError::Config(format!("empty domain [{}, {upper}]", cfg.lower)));
    }
    if let Some(x) = horizons.iter().find(|&&x| x < cfg.lower - DOMAIN_TOL || x > upper + DOMAIN_TOL) {
        return Err(CliError::Config(format!("quote horizon {x} lies outside the domain [{}, {upper}]", cfg.lower)));
    }
    Ok((cfg.lower, upper))
}

fn check_knots(n: usize, n_quotes: usize) -> Result<(), CliError> {
    if n + 2 < n_quotes {
        return Err(CliError::Config(format!("{n} knot intervals cannot fit {n_quotes} quotes (need n + 2 >= quotes)")));
    }
    Ok(())
}

fn template(cfg: &RunConfig, lower: f64, upper: f64) -> Result<ModelTemplate, CliError> {
    Ok(ModelTemplate {
        grid: KnotGrid1D::new(lower, upper, cfg.n)?,
        family: cfg.family()?,
        nugget: cfg.nugget,
        cone: cfg.monotonicity()?,
        anchor: cfg.anchor(),
    })
}

fn estimation_config(cfg: &RunConfig) -> Result<EstimationConfig, CliError> {
    let e = EstimationConfig { theta_min: cfg.theta_min, theta_max: cfg.theta_max, mc_samples: cfg.mc_samples, seed: cfg.seed, ..EstimationConfig::default() };
    e.validate().map_err(|err| CliError::Config(err.to_string()))?;
    Ok(e)
}

struct Estimate {
    theta: ThetaEstimate,
    sigma2: Option<f64>,
    bisections: Option<usize>,
}

fn run_estimation(cfg: &RunConfig, sys: &MarketFitSystem, tpl: &ModelTemplate) -> Result<Estimate, CliError> {
    let ecfg = estimation_config(cfg)?;
    match cfg.method.as_str() {
        "acv" => {
            let theta = estimate_theta(sys, tpl, &ecfg)?;
            let sigma = if cfg.estimate_sigma { Some(estimate_sigma(sys, tpl, theta.theta, &ecfg)?) } else { None };
            Ok(Estimate { sigma2: sigma.as_ref().map(|s| s.sigma * s.sigma), bisections: sigma.map(|s| s.iterations), theta })
        }
        "classical" => {
            let (theta, sigma2) = estimate_classical(sys, tpl.family, tpl.nugget, &ecfg)?;
            Ok(Estimate { theta, sigma2: Some(sigma2), bisections: None })
        }
        other => Err(CliError::Config(format!("unknown estimation method `{other}` (acv or classical)"))),
    }
}

/// Kernel from the configuration, estimating its parameters when asked to.
fn kernel(cfg: &RunConfig, sys: &MarketFitSystem, tpl: &ModelTemplate, notes: &mut Vec<String>) -> Result<KernelSpec, CliError> {
    let (theta, sigma2) = match cfg.scalar_theta()? {
        Some(theta) => (theta, cfg.sigma2),
        None => {
            let est = run_estimation(cfg, sys, tpl)?;
            notes.push(format!("estimated theta {}", fmt_num(est.theta.theta)));
            if let Some(s2) = est.sigma2 {
                notes.push(format!("estimated sigma2 {}", fmt_num(s2)));
            }
            (est.theta.theta, est.sigma2.unwrap_or(cfg.sigma2))
        }
    };
    let family = cfg.family()?;
    Ok(KernelSpec::with_nugget(family, vec![theta], sigma2, cfg.nugget.unwrap_or(family.default_nugget()))?)
}

struct CurveFit {
    input: CurveInput,
    model: FiniteModel1D,
    problem: ConstrainedProblem,
    solution: ModeSolution,
    mode: Path1D,
    lower: f64,
    upper: f64,
    notes: Vec<String>,
}

fn fit_curve(cfg: &RunConfig) -> Result<CurveFit, CliError> {
    let input = load_curve(cfg, cfg.quotes_path()?)?;
    let (lower, upper) = domain(cfg, &input.horizons)?;
    check_knots(cfg.n, input.n_quotes)?;
    let tpl = template(cfg, lower, upper)?;
    let mut notes = Vec::new();
    let spec = kernel(cfg, &input.sys, &tpl, &mut notes)?;
    let model = FiniteModel1D::new(tpl.grid, spec, tpl.cone)?;
    let problem = ConstrainedProblem::for_curve(&model, &input.sys, tpl.anchor)?;
    let solution = solve_mode(&problem)?;
    let mode = model.path(solution.coeffs.clone())?;
    Ok(CurveFit { input, model, problem, solution, mode, lower, upper, notes })
}

fn market_residual(sys: &MarketFitSystem, path: &Path1D) -> Result<f64, CliError> {
    let y = DVector::from_vec(path.eval_many(&sys.horizons()?)?);
    Ok(sys.residual_inf(&y))
}

fn draw_paths(cfg: &RunConfig, fit: &CurveFit) -> Result<(SampleSet, Vec<Path1D>), CliError> {
    let set = sample_paths_with(&fit.problem, &fit.solution, cfg.samples, cfg.seed, &SamplerConfig::default())?;
    let paths = set.draws.iter().map(|xi| fit.model.path(xi.clone())).collect::<Result<Vec<_>, _>>()?;
    Ok((set, paths))
}

fn sampler_summary(set: &SampleSet) -> String {
    format!("sampler {:?}, acceptance rate {:.3e}", set.kind, set.acceptance_rate()).to_lowercase()
}

/// Band of a transformed curve over the points where the transform is defined.
fn derived_band(x: &[f64], mode: &Path1D, samples: &[Path1D], level: f64, f: impl Fn(&Path1D, f64) -> gpcurve::Result<f64>) -> Result<CurveBand, CliError> {
    let eval = |p: &Path1D| x.iter().map(|&xi| f(p, xi)).collect::<gpcurve::Result<Vec<f64>>>();
    let values = samples.iter().map(eval).collect::<gpcurve::Result<Vec<_>>>()?;
    Ok(band_from_values(x, eval(mode)?, &values, level)?)
}

pub fn build(cfg: &RunConfig) -> Result<String, CliError> {
    let fit = fit_curve(cfg)?;
    let (set, samples) = draw_paths(cfg, &fit)?;
    let dir = output_dir(cfg)?;
    let x = linspace(fit.lower, fit.upper, cfg.grid_points);
    let band = bands(&fit.mode, &samples, &x, cfg.level)?;
    write_band(dir, "band.csv", &band)?;
    let slopes = fit.mode.derivative_many(&x)?;
    write_table(dir, "mode.csv", &["x", "value", "slope"], x.iter().zip(&band.mode).zip(&slopes).map(|((x, v), s)| vec![*x, *v, *s]))?;
    let positive: Vec<f64> = x.iter().copied().filter(|&v| v > 0.0).collect();
    write_band(dir, "spot.csv", &derived_band(&positive, &fit.mode, &samples, cfg.level, |p, v| spot_rate(p, v))?)?;
    write_band(dir, "forward.csv", &derived_band(&x, &fit.mode, &samples, cfg.level, |p, v| forward_rate(p, v))?)?;
    if fit.input.kind == QuoteKind::Cds {
        write_band(dir, "survival.csv", &band)?;
    }
    let mut residual = market_residual(&fit.input.sys, &fit.mode)?;
    for p in &samples {
        residual = residual.max(market_residual(&fit.input.sys, p)?);
    }
    Ok(summary("build", &fit, residual, &set, dir))
}

fn summary(cmd: &str, fit: &CurveFit, residual: f64, set: &SampleSet, dir: &Path) -> String {
    let mut parts = vec![format!("{cmd}: {} {} quotes", fit.input.n_quotes, fit.input.kind)];
    parts.extend(fit.notes.iter().cloned());
    parts.push(format!("market-fit residual {residual:.3e}"));
    parts.push(sampler_summary(set));
    parts.push(format!("outputs in {}", dir.display()));
    parts.join("; ")
}

pub fn sample(cfg: &RunConfig) -> Result<String, CliError> {
    let fit = fit_curve(cfg)?;
    let (set, samples) = draw_paths(cfg, &fit)?;
    let dir = output_dir(cfg)?;
    let x = linspace(fit.lower, fit.upper, cfg.grid_points);
    let mode = fit.mode.eval_many(&x)?;
    let columns = samples.iter().map(|p| p.eval_many(&x)).collect::<gpcurve::Result<Vec<_>>>()?;
    let names: Vec<String> = (1..=samples.len()).map(|k| format!("sample_{k}")).collect();
    let mut header = vec!["x", "mode"];
    header.extend(names.iter().map(String::as_str));
    write_table(
        dir,
        "samples.csv",
        &header,
        (0..x.len()).map(|i| [x[i], mode[i]].into_iter().chain(columns.iter().map(|c| c[i])).collect()),
    )?;
    let mut residual = market_residual(&fit.input.sys, &fit.mode)?;
    for p in &samples {
        residual = residual.max(market_residual(&fit.input.sys, p)?);
    }
    Ok(summary("sample", &fit, residual, &set, dir))
}

pub fn estimate(cfg: &RunConfig) -> Result<String, CliError> {
    let input = load_curve(cfg, cfg.quotes_path()?)?;
    let (lower, upper) = domain(cfg, &input.horizons)?;
    check_knots(cfg.n, input.n_quotes)?;
    let tpl = template(cfg, lower, upper)?;
    let est = run_estimation(cfg, &input.sys, &tpl)?;
    let dir = output_dir(cfg)?;
    let (trace_path, mut w) = create(dir, "trace.csv")?;
    write_trace_csv(&mut w, &est.theta.trace).and_then(|_| w.flush()).map_err(io_at(&trace_path))?;
    let (path, mut w) = create(dir, "estimate.csv")?;
    let mut rows = vec![("theta", fmt_num(est.theta.theta)), ("objective", fmt_num(est.theta.objective))];
    if let Some(s2) = est.sigma2 {
        rows.push(("sigma", fmt_num(s2.sqrt())));
        rows.push(("sigma2", fmt_num(s2)));
    }
    if let Some(b) = est.bisections {
        rows.push(("bisections", b.to_string()));
    }
    let err = io_at(&path);
    writeln!(w, "parameter,value").map_err(&err)?;
    for (k, v) in &rows {
        writeln!(w, "{k},{v}").map_err(&err)?;
    }
    w.flush().map_err(&err)?;
    let sigma = est.sigma2.map_or("not estimated".to_string(), |s2| fmt_num(s2.sqrt()));
    Ok(format!(
        "estimate ({}): theta {} (objective {}); sigma {sigma}; trace written to {}",
        cfg.method,
        fmt_num(est.theta.theta),
        fmt_num(est.theta.objective),
        trace_path.display()
    ))
}

/// Reads `file,t` rows; files resolve against the panel's directory.
fn read_panel(path: &Path) -> Result<Vec<(PathBuf, f64)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_at(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut dates = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || CliError::Config(format!("{}: line {}: expected `file,t`", path.display(), k + 1));
        let (file, t) = line.split_once(',').ok_or_else(bad)?;
        let t: f64 = t.trim().parse().map_err(|_| bad())?;
        dates.push((base.join(file.trim()), t));
    }
    dates.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(dates)
}

pub fn surface(cfg: &RunConfig) -> Result<String, CliError> {
    let panel = cfg.panel.as_deref().ok_or_else(|| CliError::Config("missing `panel`".into()))?;
    let dates = read_panel(panel)?;
    match dates.len() {
        0 => return Err(CliError::Config(format!("{}: no quotation dates", panel.display()))),
        1 => {
            eprintln!("warning: a single quotation date; building a one-dimensional curve instead");
            let single = RunConfig { quotes: Some(dates[0].0.clone()), ..cfg.clone() };
            return build(&single);
        }
        _ => {}
    }
    let inputs = dates.iter().map(|(file, _)| load_curve(cfg, file)).collect::<Result<Vec<_>, _>>()?;
    let all: Vec<f64> = inputs.iter().flat_map(|i| i.horizons.iter().copied()).collect();
    let (lower, upper) = domain(cfg, &all)?;
    let rows: usize = inputs.iter().map(|i| i.n_quotes + usize::from(cfg.pin_lower)).sum();
    let n_tot = (cfg.n_x + 1) * (cfg.n_t + 1);
    if n_tot < rows {
        return Err(CliError::Config(format!("{n_tot} surface coefficients cannot fit {rows} conditions; raise n_x or n_t")));
    }
    let (t_lo, t_hi) = (dates[0].1, dates[dates.len() - 1].1);
    let family = cfg.family()?;
    let spec = KernelSpec::with_nugget(family, cfg.surface_theta()?, cfg.sigma2, cfg.nugget.unwrap_or(family.default_nugget()))?;
    let model = FiniteModel2D::new(KnotGrid1D::new(lower, upper, cfg.n_x)?, KnotGrid1D::new(t_lo, t_hi, cfg.n_t)?, spec, cfg.monotonicity()?)?;
    let slices: Vec<(f64, MarketFitSystem)> = dates.iter().zip(inputs).map(|((_, t), i)| (*t, i.sys)).collect();
    let problem = ConstrainedProblem::for_surface(&model, &slices, cfg.anchor())?;
    let xi = solve_mode(&problem)?.coeffs;
    let mut residual = 0.0f64;
    for (t, sys) in &slices {
        let y = sys.horizons()?.iter().map(|&h| model.eval(&xi, h, *t)).collect::<gpcurve::Result<Vec<_>>>()?;
        residual = residual.max(sys.residual_inf(&DVector::from_vec(y)));
    }
    let x = linspace(lower, upper, cfg.grid_points);
    let ts = model.t_grid.knots();
    let mut table = Vec::with_capacity(x.len() * ts.len());
    let mut violations = 0;
    for &t in &ts {
        let column = x.iter().map(|&xx| model.eval(&xi, xx, t)).collect::<gpcurve::Result<Vec<_>>>()?;
        violations += count_violations(&column, cfg.monotonicity()?, 1e-10);
        table.extend(x.iter().zip(column).map(|(&xx, v)| vec![xx, t, v]));
    }
    let dir = output_dir(cfg)?;
    write_table(dir, "surface.csv", &["x", "t", "mode"], table)?;
    Ok(format!(
        "surface: {} dates, {} coefficients; max per-date residual {residual:.3e}; {violations} monotonicity violations; outputs in {}",
        slices.len(),
        model.n_coeffs(),
        dir.display()
    ))
}

pub fn compare(cfg: &RunConfig) -> Result<String, CliError> {
    let fit = fit_curve(cfg)?;
    let x = linspace(fit.lower, fit.upper, cfg.grid_points);
    let spec = &fit.model.kernel;
    let kriging_sys = match cfg.anchor() {
        Some(a) => fit.input.sys.with_point_value(vec![fit.lower], a)?,
        None => fit.input.sys.clone(),
    };
    let kriging = GaussianPosterior::linear(MeanFunction::Zero, spec, &kriging_sys)?;
    let mut names = vec!["constrained".to_string(), "kriging".to_string()];
    let mut columns = vec![fit.mode.eval_many(&x)?, x.iter().map(|&v| kriging.mean(&[v])).collect::<gpcurve::Result<Vec<_>>>()?];
    let dir = output_dir(cfg)?;
    let fit_cfg = FitConfig { restarts: cfg.restarts, ..FitConfig::default() };
    for family in cfg.parametric_families()? {
        let p = parametric_fit(&fit.input.sys, family, cfg.seed, &fit_cfg)?;
        let name = match family {
            gpcurve::curves::ParametricFamily::NelsonSiegel => "nelson_siegel",
            gpcurve::curves::ParametricFamily::Svensson => "svensson",
        };
        let (path, mut w) = create(dir, &format!("{name}_params.csv"))?;
        p.curve.write_params_csv(&mut w).and_then(|_| w.flush()).map_err(io_at(&path))?;
        columns.push(x.iter().map(|&v| p.curve.discount(v)).collect());
        names.push(name.to_string());
    }
    let mut header = vec!["x"];
    header.extend(names.iter().map(String::as_str));
    write_table(dir, "compare.csv", &header, (0..x.len()).map(|i| std::iter::once(x[i]).chain(columns.iter().map(|c| c[i])).collect()))?;
    let cone = cfg.monotonicity()?;
    let counts: Vec<usize> = columns.iter().map(|c| count_violations(c, cone, 1e-12)).collect();
    let (path, mut w) = create(dir, "violations.csv")?;
    let err = io_at(&path);
    writeln!(w, "curve,violations").map_err(&err)?;
    for (n, c) in names.iter().zip(&counts) {
        writeln!(w, "{n},{c}").map_err(&err)?;
    }
    w.flush().map_err(&err)?;
    Ok(format!(
        "compare: kriging mean has {} monotonicity violations, constrained mode {}; outputs in {}",
        counts[1],
        counts[0],
        dir.display()
    ))
}
