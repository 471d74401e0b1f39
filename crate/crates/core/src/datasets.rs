//! Synthetic market data generated from known smooth curves, so that every
//! bundled quote file has a ground truth.

use std::path::Path;

use nalgebra::DVector;

use crate::curves::ParametricCurve;
use crate::error::{Error, Result};
use crate::finite_model::{FiniteModel1D, KnotGrid1D, Monotonicity, Path1D};
use crate::gp_linear::MarketFitSystem;
use crate::instruments::{write_quotes, DiscountCurve, DiscountInput, Quote};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::solver::{sample_paths, ConstrainedProblem};

/// Quoted maturities of the swap and OIS sets.
pub const RATE_MATURITIES: [f64; 14] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 15.0, 20.0, 30.0, 40.0];
/// Quoted CDS maturities.
pub const CDS_MATURITIES: [f64; 7] = [1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0];
pub const CDS_RECOVERY: f64 = 0.4;
/// Quotation dates of the swap panel, in years from the first date.
pub const PANEL_DATES: [f64; 9] = [0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0];
/// Maturities of the sparse long-end set.
pub const SPARSE_MATURITIES: [f64; 6] = [1.0, 2.0, 3.0, 5.0, 30.0, 40.0];

/// Reference OIS discount curve: an upward-sloping Nelson-Siegel yield curve.
pub fn ois_curve() -> ParametricCurve {
    ParametricCurve::nelson_siegel(3.0, 0.032, -0.022, 0.012).expect("valid parameters")
}

/// Reference swap curve on quotation date `t` (years after the first date).
pub fn swap_curve(t: f64) -> ParametricCurve {
    ParametricCurve::nelson_siegel(4.0 - t, 0.030 - 0.004 * t, -0.018 + 0.003 * t, 0.015 - 0.004 * t).expect("valid parameters")
}

/// Par rate `(1 - P(T)) / sum_{k <= T} P(k)` of an annual fixed leg.
fn par_rate(curve: &impl Fn(f64) -> f64, maturity: f64) -> f64 {
    let annuity: f64 = (1..=maturity as usize).map(|k| curve(k as f64)).sum();
    (1.0 - curve(maturity)) / annuity
}

/// OIS quotes on the fourteen reference maturities with a half-basis-point spread.
pub fn ois_quotes() -> Vec<Quote> {
    let c = ois_curve();
    RATE_MATURITIES
        .iter()
        .map(|&t| {
            let s = par_rate(&|x| c.discount(x), t);
            Quote::ois(t, s).with_bid_ask(s - 5e-5, s + 5e-5)
        })
        .collect()
}

/// Par swap quotes on each panel date.
pub fn swap_panel() -> Vec<(f64, Vec<Quote>)> {
    PANEL_DATES
        .iter()
        .map(|&t| {
            let c = swap_curve(t);
            (t, RATE_MATURITIES.iter().map(|&m| Quote::ois(m, par_rate(&|x| c.discount(x), m))).collect())
        })
        .collect()
}

/// Reference curve of the sparse set: forwards hump near four years and decay
/// towards 20bp, so the long end is nearly flat.
pub fn long_end_curve() -> ParametricCurve {
    ParametricCurve::nelson_siegel(4.0, 0.002, 0.01, 0.05).expect("valid parameters")
}

/// Quotes on a few short and very long maturities, with a gap in between.
pub fn sparse_long_quotes() -> Vec<Quote> {
    let c = long_end_curve();
    SPARSE_MATURITIES.iter().map(|&t| Quote::ois(t, par_rate(&|x| c.discount(x), t))).collect()
}

/// Treasury-style zero rates used to discount CDS legs.
pub fn treasury_input() -> DiscountInput {
    let tenors = vec![0.25, 0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0];
    let rates = tenors.iter().map(|&t| 0.015 + 0.01 * (1.0 - (-t / 4.0f64).exp())).collect();
    DiscountInput::new(tenors, rates).expect("increasing tenors")
}

/// Reference survival curve with hazard rate `0.01 + 0.002 t`.
pub fn survival_curve(t: f64) -> f64 {
    (-(0.01 * t + 0.001 * t * t)).exp()
}

/// Spreads that make the discretized CDS relation hold exactly for [`survival_curve`].
pub fn cds_quotes() -> Vec<Quote> {
    let disc = treasury_input();
    let lgd = 1.0 - CDS_RECOVERY;
    CDS_MATURITIES
        .iter()
        .map(|&t| {
            let p = (4.0 * t).round() as usize;
            let df = |k: usize| if k == 0 { 1.0 } else { disc.discount(k as f64 / 4.0).expect("non-empty input") };
            let mut protection = 0.0;
            let mut premium = 0.0;
            for k in 1..=p {
                let q = survival_curve(k as f64 / 4.0);
                premium += 0.25 * df(k) * q;
                protection += if k < p { (df(k - 1) - df(k)) * q } else { df(k - 1) * q };
            }
            Quote::cds(t, lgd * (1.0 - protection) / premium, CDS_RECOVERY)
        })
        .collect()
}

/// A curve drawn from the Matérn 5/2 process restricted to `cone`, with
/// length scale `theta`, pinned to one at zero, observed at `points`.
pub fn simulated_curve(theta: f64, sigma2: f64, cone: Monotonicity, n_knots: usize, points: &[f64], seed: u64) -> Result<(Path1D, MarketFitSystem)> {
    let upper = points.iter().fold(0.0f64, |m, &x| m.max(x));
    let grid = KnotGrid1D::new(0.0, upper, n_knots)?;
    let model = FiniteModel1D::new(grid, KernelSpec::one_dim(KernelFamily::Matern52, theta, sigma2)?, cone)?;
    let mut b = nalgebra::DMatrix::zeros(1, model.n_coeffs());
    b[(0, 0)] = 1.0;
    let problem = ConstrainedProblem::new(model.gamma.clone(), b, DVector::from_element(1, 1.0), model.cone_constraints())?;
    let draw = sample_paths(&problem, 1, seed)?.draws.pop().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let path = model.path(draw)?;
    let values = DVector::from_vec(path.eval_many(points)?);
    let sys = MarketFitSystem::interpolation(points.iter().map(|&x| vec![x]).collect(), values)?;
    Ok((path, sys))
}

/// Writes every bundled file into `dir`.
pub fn write_bundle(dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Parse(e.to_string());
    std::fs::create_dir_all(dir.join("swap_panel")).map_err(io)?;
    let create = |name: &str| std::fs::File::create(dir.join(name)).map_err(io);
    write_quotes(create("ois.csv")?, &ois_quotes())?;
    write_quotes(create("cds.csv")?, &cds_quotes())?;
    write_quotes(create("sparse_long.csv")?, &sparse_long_quotes())?;
    let mut w = create("treasury.csv")?;
    let t = treasury_input();
    use std::io::Write;
    writeln!(w, "tenor_years,rate").map_err(io)?;
    for (tenor, rate) in t.tenors.iter().zip(&t.rates) {
        writeln!(w, "{tenor},{rate:.11e}").map_err(io)?;
    }
    let mut dates = create("swap_panel/dates.csv")?;
    writeln!(dates, "file,t").map_err(io)?;
    for (k, (t, quotes)) in swap_panel().iter().enumerate() {
        let name = format!("date_{}.csv", k + 1);
        write_quotes(create(&format!("swap_panel/{name}"))?, quotes)?;
        writeln!(dates, "{name},{t}").map_err(io)?;
    }
    Ok(())
}
