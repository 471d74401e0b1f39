//! Linearization of instrument quotes into market-fit rows.
//!
//! Bonds, OIS and CDS give rows over discount or survival factors on a grid of
//! curve horizons; IRS quotes give rows over forward rates once an exogenous
//! discount curve is known.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp_linear::MarketFitSystem;

/// Tolerance used to match schedule horizons with curve points.
pub const HORIZON_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuoteKind {
    Bond,
    Ois,
    Irs,
    Cds,
}

impl std::str::FromStr for QuoteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bond" => Ok(QuoteKind::Bond),
            "ois" => Ok(QuoteKind::Ois),
            "irs" | "swap" => Ok(QuoteKind::Irs),
            "cds" => Ok(QuoteKind::Cds),
            other => Err(Error::Parse(format!("unknown instrument kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for QuoteKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            QuoteKind::Bond => "bond",
            QuoteKind::Ois => "ois",
            QuoteKind::Irs => "irs",
            QuoteKind::Cds => "cds",
        })
    }
}

/// A single market quote. `rate` is the par rate, spread or price in decimals.
#[derive(Debug, Clone, PartialEq)]
pub struct Quote {
    pub kind: QuoteKind,
    pub maturity: f64,
    pub rate: f64,
    pub coupon: f64,
    pub recovery: f64,
    pub frequency: u32,
    pub bid: Option<f64>,
    pub ask: Option<f64>,
}

impl Quote {
    pub fn new(kind: QuoteKind, maturity: f64, rate: f64) -> Self {
        let frequency = if kind == QuoteKind::Cds { 4 } else { 1 };
        Quote { kind, maturity, rate, coupon: 0.0, recovery: 0.0, frequency, bid: None, ask: None }
    }

    pub fn bond(maturity: f64, price: f64, coupon: f64, frequency: u32) -> Self {
        Quote { coupon, frequency, ..Quote::new(QuoteKind::Bond, maturity, price) }
    }

    pub fn ois(maturity: f64, rate: f64) -> Self {
        Quote::new(QuoteKind::Ois, maturity, rate)
    }

    pub fn irs(maturity: f64, rate: f64, frequency: u32) -> Self {
        Quote { frequency, ..Quote::new(QuoteKind::Irs, maturity, rate) }
    }

    pub fn cds(maturity: f64, spread: f64, recovery: f64) -> Self {
        Quote { recovery, ..Quote::new(QuoteKind::Cds, maturity, spread) }
    }

    pub fn with_bid_ask(mut self, bid: f64, ask: f64) -> Self {
        self.bid = Some(bid);
        self.ask = Some(ask);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidQuote(format!("{} {}y: {msg}", self.kind, self.maturity)));
        if !(self.maturity.is_finite() && self.maturity > 0.0) {
            return bad("maturity must be positive".into());
        }
        if !self.rate.is_finite() || !self.coupon.is_finite() {
            return bad("non-finite rate".into());
        }
        if ![1, 2, 4, 12].contains(&self.frequency) {
            return bad(format!("unsupported frequency {}", self.frequency));
        }
        if !(0.0..1.0).contains(&self.recovery) {
            return bad(format!("recovery {} outside [0, 1)", self.recovery));
        }
        if let Some(bid) = self.bid {
            if bid > self.rate {
                return bad("bid above quote".into());
            }
        }
        if let Some(ask) = self.ask {
            if ask < self.rate {
                return bad("ask below quote".into());
            }
        }
        Ok(())
    }

    /// Regular payment schedule ending at maturity.
    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::regular(self.maturity, self.frequency)
    }
}

/// Payment horizons `tau_1 < ... < tau_p`, with `tau_0 = 0` implied.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    horizons: Vec<f64>,
}

impl Schedule {
    pub fn new(horizons: Vec<f64>) -> Result<Self> {
        if horizons.is_empty() {
            return Err(Error::InvalidGrid("empty schedule".into()));
        }
        let mut prev = 0.0;
        for &h in &horizons {
            if !(h.is_finite() && h > prev) {
                return Err(Error::InvalidGrid(format!("schedule horizon {h} does not follow {prev}")));
            }
            prev = h;
        }
        Ok(Schedule { horizons })
    }

    /// Horizons `k / frequency` up to `maturity`, which must fall on the lattice.
    pub fn regular(maturity: f64, frequency: u32) -> Result<Self> {
        let periods = maturity * frequency as f64;
        let p = periods.round();
        if p < 1.0 || (periods - p).abs() > HORIZON_TOL * periods.max(1.0) {
            return Err(Error::InvalidGrid(format!("maturity {maturity} is not a multiple of 1/{frequency}")));
        }
        let p = p as usize;
        let horizons = (1..=p).map(|k| if k == p { maturity } else { k as f64 / frequency as f64 }).collect();
        Schedule::new(horizons)
    }

    pub fn horizons(&self) -> &[f64] {
        &self.horizons
    }

    pub fn maturity(&self) -> f64 {
        *self.horizons.last().expect("schedule is non-empty")
    }

    /// Year fractions `tau_k - tau_{k-1}`.
    pub fn fractions(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.horizons
            .iter()
            .map(|&h| {
                let d = h - prev;
                prev = h;
                d
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.horizons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }
}

/// Source of exogenous discount factors.
pub trait DiscountCurve {
    fn discount(&self, tau: f64) -> Result<f64>;
}

impl<F: Fn(f64) -> f64> DiscountCurve for F {
    fn discount(&self, tau: f64) -> Result<f64> {
        Ok(self(tau))
    }
}

/// Discount factors known only at listed horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDiscount {
    pub points: Vec<(f64, f64)>,
}

impl DiscountCurve for TabulatedDiscount {
    fn discount(&self, tau: f64) -> Result<f64> {
        if tau.abs() <= HORIZON_TOL {
            return Ok(1.0);
        }
        self.points
            .iter()
            .find(|(t, _)| (t - tau).abs() <= HORIZON_TOL * tau.max(1.0))
            .map(|&(_, p)| p)
            .ok_or(Error::MissingDiscount(tau))
    }
}

/// Zero rates at given tenors, linearly interpolated with flat extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountInput {
    pub tenors: Vec<f64>,
    pub rates: Vec<f64>,
}

impl DiscountInput {
    pub fn new(tenors: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if tenors.is_empty() {
            return Err(Error::EmptyInput("discount input has no tenors".into()));
        }
        if tenors.len() != rates.len() {
            return Err(Error::DimensionMismatch(format!("{} tenors but {} rates", tenors.len(), rates.len())));
        }
        if tenors.windows(2).any(|w| w[1] <= w[0]) || tenors.iter().chain(&rates).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("tenors must be increasing and rates finite".into()));
        }
        Ok(DiscountInput { tenors, rates })
    }

    pub fn flat(rate: f64) -> Self {
        DiscountInput { tenors: vec![1.0], rates: vec![rate] }
    }

    pub fn rate(&self, tau: f64) -> Result<f64> {
        interp_rate(&self.tenors, &self.rates, tau)
    }

    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            tenor_years: f64,
            rate: f64,
        }
        let mut tenors = Vec::new();
        let mut rates = Vec::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::Parse(format!("discount input line {}: {e}", i + 2)))?;
            tenors.push(row.tenor_years);
            rates.push(row.rate);
        }
        DiscountInput::new(tenors, rates)
    }
}

impl DiscountCurve for DiscountInput {
    fn discount(&self, tau: f64) -> Result<f64> {
        interp_discount(self, tau)
    }
}

fn interp_rate(tenors: &[f64], rates: &[f64], tau: f64) -> Result<f64> {
    if tenors.is_empty() {
        return Err(Error::EmptyInput("discount input has no tenors".into()));
    }
    if tau <= tenors[0] {
        return Ok(rates[0]);
    }
    let last = tenors.len() - 1;
    if tau >= tenors[last] {
        return Ok(rates[last]);
    }
    let k = tenors.partition_point(|&t| t <= tau);
    let (t0, t1) = (tenors[k - 1], tenors[k]);
    let w = (tau - t0) / (t1 - t0);
    Ok(rates[k - 1] + w * (rates[k] - rates[k - 1]))
}

/// `P(tau) = exp(-r(tau) * tau)` with `r` interpolated linearly in tenor.
pub fn interp_discount(input: &DiscountInput, tau: f64) -> Result<f64> {
    Ok((-input.rate(tau)? * tau).exp())
}

/// Column of `tau` in the curve grid `xs`.
pub fn locate(xs: &[f64], tau: f64) -> Result<usize> {
    xs.iter()
        .position(|&x| (x - tau).abs() <= HORIZON_TOL * tau.abs().max(1.0))
        .ok_or(Error::MissingCurvePoint(tau))
}

/// `c * sum delta_k P(tau_k) + P(T) = S`.
pub fn bond_row(quote: &Quote, xs: &[f64]) -> Result<(DVector<f64>, f64)> {
    quote.validate()?;
    let sched = quote.schedule()?;
    let mut row = DVector::zeros(xs.len());
    for (&tau, d) in sched.horizons().iter().zip(sched.fractions()) {
        row[locate(xs, tau)?] += quote.coupon * d;
    }
    row[locate(xs, quote.maturity)?] += 1.0;
    Ok((row, quote.rate))
}

/// `S * sum delta_k P(tau_k) + P(T) = 1`.
pub fn ois_row(quote: &Quote, xs: &[f64]) -> Result<(DVector<f64>, f64)> {
    quote.validate()?;
    let sched = quote.schedule()?;
    let mut row = DVector::zeros(xs.len());
    for (&tau, d) in sched.horizons().iter().zip(sched.fractions()) {
        row[locate(xs, tau)?] += quote.rate * d;
    }
    row[locate(xs, quote.maturity)?] += 1.0;
    Ok((row, 1.0))
}

/// Swap par condition over forward rates: `sum P(t_i) dt_i F(t_i) = S * sum delta_k P(tau_k)`.
///
/// The fixed leg follows the quote frequency; `floating` gives the floating
/// payment horizons, whose forwards are the unknowns located in `xs`.
pub fn irs_forward_row(quote: &Quote, discount: &dyn DiscountCurve, floating: &Schedule, xs: &[f64]) -> Result<(DVector<f64>, f64)> {
    quote.validate()?;
    let fixed = quote.schedule()?;
    if (floating.maturity() - quote.maturity).abs() > HORIZON_TOL * quote.maturity.max(1.0) {
        return Err(Error::InconsistentGrid(format!(
            "floating leg ends at {} but swap matures at {}",
            floating.maturity(),
            quote.maturity
        )));
    }
    let mut annuity = 0.0;
    for (&tau, d) in fixed.horizons().iter().zip(fixed.fractions()) {
        annuity += d * discount.discount(tau)?;
    }
    let mut row = DVector::zeros(xs.len());
    for (&tau, d) in floating.horizons().iter().zip(floating.fractions()) {
        row[locate(xs, tau)?] += discount.discount(tau)? * d;
    }
    Ok((row, quote.rate * annuity))
}

/// CDS rows over survival probabilities on a common quarterly grid.
///
/// Each quote contributes, for `k < p`, `S delta P_k + (1 - R)(P_{k-1} - P_k)` on
/// `Q(tau_k)` and `S delta P_T + (1 - R) P_{p-1}` on `Q(T)`, with rhs `1 - R`.
pub fn cds_rows(quotes: &[Quote], discount: &dyn DiscountCurve, xs: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let delta = 0.25;
    for (k, &x) in xs.iter().enumerate() {
        let expected = (k + 1) as f64 * delta;
        if (x - expected).abs() > HORIZON_TOL * expected {
            return Err(Error::InconsistentGrid(format!("CDS grid point {x} is not the quarterly date {expected}")));
        }
    }
    let mut a = DMatrix::zeros(quotes.len(), xs.len());
    let mut b = DVector::zeros(quotes.len());
    for (r, q) in quotes.iter().enumerate() {
        q.validate()?;
        if q.kind != QuoteKind::Cds {
            return Err(Error::InvalidQuote(format!("{} quote in a CDS system", q.kind)));
        }
        if q.frequency != 4 {
            return Err(Error::InconsistentGrid(format!("CDS premium frequency {} is not quarterly", q.frequency)));
        }
        let sched = q.schedule()?;
        let p = sched.len();
        let lgd = 1.0 - q.recovery;
        let mut prev_df = 1.0;
        for (k, &tau) in sched.horizons().iter().enumerate() {
            let col = locate(xs, tau)?;
            let df = discount.discount(tau)?;
            a[(r, col)] = if k + 1 < p {
                q.rate * delta * df + lgd * (prev_df - df)
            } else {
                q.rate * delta * df + lgd * prev_df
            };
            prev_df = df;
        }
        b[r] = lgd;
    }
    Ok((a, b))
}

pub fn cds_system(quotes: &[Quote], discount: &dyn DiscountCurve, xs: &[f64]) -> Result<MarketFitSystem> {
    let (a, b) = cds_rows(quotes, discount, xs)?;
    MarketFitSystem::new(a, b, xs.iter().map(|&x| vec![x]).collect(), None)
}

/// Extra inputs needed by some instrument kinds.
#[derive(Default)]
pub struct AssembleOptions<'a> {
    /// Exogenous discounting for IRS forwards and CDS survival systems.
    pub discount: Option<&'a dyn DiscountCurve>,
    /// Floating-leg frequency for IRS quotes; the forward grid otherwise.
    pub floating_frequency: Option<u32>,
    /// Turn bid/ask spreads into observation noise.
    pub bid_ask_noise: bool,
}

/// Stacks one row per quote into a market-fit system over the horizons `xs`.
pub fn assemble_system(quotes: &[Quote], xs: &[f64], options: &AssembleOptions<'_>) -> Result<MarketFitSystem> {
    let first = quotes.first().ok_or_else(|| Error::EmptyInput("no quotes".into()))?;
    if let Some(q) = quotes.iter().find(|q| q.kind != first.kind) {
        return Err(Error::InvalidQuote(format!("mixed instrument kinds {} and {}", first.kind, q.kind)));
    }
    let need_discount = || options.discount.ok_or_else(|| Error::InvalidQuote(format!("{} quotes need a discount curve", first.kind)));
    let (a, b) = match first.kind {
        QuoteKind::Cds => cds_rows(quotes, need_discount()?, xs)?,
        kind => {
            let mut a = DMatrix::zeros(quotes.len(), xs.len());
            let mut b = DVector::zeros(quotes.len());
            for (r, q) in quotes.iter().enumerate() {
                let (row, rhs) = match kind {
                    QuoteKind::Bond => bond_row(q, xs)?,
                    QuoteKind::Ois => ois_row(q, xs)?,
                    QuoteKind::Irs => {
                        let freq = options.floating_frequency.unwrap_or(q.frequency);
                        irs_forward_row(q, need_discount()?, &Schedule::regular(q.maturity, freq)?, xs)?
                    }
                    QuoteKind::Cds => unreachable!(),
                };
                a.set_row(r, &row.transpose());
                b[r] = rhs;
            }
            (a, b)
        }
    };
    let noise = if options.bid_ask_noise { quote_noise(quotes) } else { None };
    MarketFitSystem::new(a, b, xs.iter().map(|&x| vec![x]).collect(), noise)
}

/// Diagonal noise `(ask - mid)^2` when any quote carries an ask.
pub fn quote_noise(quotes: &[Quote]) -> Option<DMatrix<f64>> {
    if quotes.iter().all(|q| q.ask.is_none()) {
        return None;
    }
    let diag = DVector::from_iterator(quotes.len(), quotes.iter().map(|q| q.ask.map_or(0.0, |ask| (ask - q.rate).powi(2))));
    Some(DMatrix::from_diagonal(&diag))
}

#[derive(Debug, Deserialize)]
struct QuoteRecord {
    kind: String,
    maturity_years: f64,
    quote: f64,
    coupon: Option<f64>,
    recovery: Option<f64>,
    frequency: Option<u32>,
    bid: Option<f64>,
    ask: Option<f64>,
}

/// Reads quotes with header `kind,maturity_years,quote,coupon,recovery,frequency,bid,ask`.
pub fn read_quotes<R: Read>(reader: R) -> Result<Vec<Quote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<QuoteRecord>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse(format!("quotes line {line}: {e}")))?;
        let kind: QuoteKind = rec.kind.parse().map_err(|e| Error::Parse(format!("quotes line {line}: {e}")))?;
        let mut q = Quote::new(kind, rec.maturity_years, rec.quote);
        q.coupon = rec.coupon.unwrap_or(0.0);
        q.recovery = rec.recovery.unwrap_or(0.0);
        if let Some(f) = rec.frequency {
            q.frequency = f;
        }
        q.bid = rec.bid;
        q.ask = rec.ask;
        q.validate().map_err(|e| Error::Parse(format!("quotes line {line}: {e}")))?;
        out.push(q);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("quote file has no rows".into()));
    }
    Ok(out)
}

/// Writes quotes in the format accepted by [`read_quotes`].
pub fn write_quotes<W: std::io::Write>(writer: W, quotes: &[Quote]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["kind", "maturity_years", "quote", "coupon", "recovery", "frequency", "bid", "ask"]).map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.11e}")).unwrap_or_default();
    for q in quotes {
        w.write_record([
            q.kind.to_string(),
            format!("{}", q.maturity),
            format!("{:.11e}", q.rate),
            format!("{:.11e}", q.coupon),
            format!("{}", q.recovery),
            q.frequency.to_string(),
            opt(q.bid),
            opt(q.ask),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Annual horizons `1..=n`.
pub fn annual_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64).collect()
}

/// Quarterly horizons `0.25, 0.5, ..., years`.
pub fn quarterly_grid(years: usize) -> Vec<f64> {
    (1..=4 * years).map(|k| k as f64 / 4.0).collect()
}

/// Curve horizons referenced by a homogeneous quote set: every payment date,
/// plus floating dates for IRS; the quarterly grid up to the longest maturity
/// for CDS.
pub fn horizon_grid(quotes: &[Quote], floating_frequency: Option<u32>) -> Result<Vec<f64>> {
    let longest = quotes.iter().map(|q| q.maturity).fold(f64::NAN, f64::max);
    if quotes.is_empty() || !longest.is_finite() {
        return Err(Error::EmptyInput("no quotes".into()));
    }
    if quotes[0].kind == QuoteKind::Cds {
        let quarters = (4.0 * longest).round() as usize;
        return Ok((1..=quarters).map(|k| k as f64 / 4.0).collect());
    }
    let mut xs = Vec::new();
    for q in quotes {
        q.validate()?;
        xs.extend_from_slice(q.schedule()?.horizons());
        if q.kind == QuoteKind::Irs {
            xs.extend_from_slice(Schedule::regular(q.maturity, floating_frequency.unwrap_or(q.frequency))?.horizons());
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= HORIZON_TOL * b.abs().max(1.0));
    Ok(xs)
}
