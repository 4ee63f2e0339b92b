//! Synthetic panels with planted coefficients.
//!
//! Fundamentals are drawn per firm, then every regressor is computed with the
//! same variable functions the pipeline uses, so the planted equations hold
//! exactly in the data the pipeline sees:
//!
//! * value: `P = α_i + Σ a_k x_k + e`, with `e` a normal truncated at ±4σ;
//! * risk: the 60-month window beta equals `κ_i + Σ c_k x_k + u`.
//!
//! Window betas are made exact rather than noisy estimates. Market returns are
//! standardized within each calendar year, firm idiosyncratic returns are
//! orthogonalized to the market within each year, and each year's own
//! loading is solved from the previous four so that the five-year window
//! slope equals the planted target.
//!
//! Random draws come from ChaCha8 seeded with `seed_from_u64`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{write_fundamentals, write_prices, write_riskfree, PricePoint, PriceSeries};
use crate::models::{EstimationReport, MarinVariant, ModelId};
use crate::panel::{build_dataset, FirmId, FirmYearObservation, MarketId, PanelDataset, PanelError, RiskFreeSeries};
use crate::stats::normal_quantile;
use crate::variables::{abnormal_earnings, control_variables, marin, ownership_concentration};

/// Value-equation terms, in report order.
pub const VALUE_TERMS: [&str; 8] = ["B", "X", "Marin", "AGE", "Size", "Lev", "OW", "OW*Marin"];
/// Risk-equation terms, in report order.
pub const RISK_TERMS: [&str; 6] = ["Marin", "AGE", "Size", "Lev", "OW", "OW*Marin"];

/// Bounds of the marketing-intensity and ownership paths.
const MARIN_RANGE: (f64, f64) = (0.01, 0.43);
const OW_RANGE: (f64, f64) = (0.221, 0.899);
const LEV_RANGE: (f64, f64) = (0.04, 0.91);
const PRICE_FLOOR: f64 = 0.32;
/// Years of monthly returns needed before the first panel year.
const PRE_YEARS: i32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible targets: {0}")]
    InfeasibleTargets(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("generated panel failed validation: {0}")]
    Panel(#[from] PanelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub seed: u64,
    pub n_firms: usize,
    pub n_years: usize,
    pub start_year: i32,
    pub n_markets: usize,
    /// Planted value-equation slopes keyed by [`VALUE_TERMS`].
    pub value_coefficients: BTreeMap<String, f64>,
    /// Planted risk-equation slopes keyed by [`RISK_TERMS`].
    pub risk_coefficients: BTreeMap<String, f64>,
    /// Cross-firm standard deviation of firm price levels.
    pub effect_scale: f64,
    /// Standard deviation of the value-equation noise.
    pub noise_scale: f64,
    /// Standard deviation of the risk-equation noise.
    pub beta_noise_scale: f64,
    /// Targets keyed by variable label: P, B, X, Marin, Age, Total Assets, Lev, Bet, OW.
    pub moment_targets: BTreeMap<String, Moments>,
    pub months_per_year: usize,
    pub market_mean: f64,
    pub market_sd: f64,
    pub idio_sd: f64,
}

fn map(entries: &[(&str, f64)]) -> BTreeMap<String, f64> {
    entries.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect()
}

impl Default for DgpConfig {
    fn default() -> Self {
        let targets = [
            ("P", 1.7080, 1.2252),
            ("B", 1.2874, 1.6355),
            ("X", 0.1094, 0.1606),
            ("Marin", 0.2491, 0.1565),
            ("Age", 19.6834, 17.730),
            ("Total Assets", 20958.0, 30292.0),
            ("Lev", 0.5288, 0.2062),
            ("Bet", 0.8931, 0.3373),
            ("OW", 0.4400, 0.2213),
        ];
        Self {
            seed: 1,
            n_firms: 20,
            n_years: 10,
            start_year: 2010,
            n_markets: 4,
            value_coefficients: map(&[
                ("B", 1.0),
                ("X", 2.9186),
                ("Marin", 0.18),
                ("AGE", 0.0118),
                ("Size", -0.3504),
                ("Lev", -1.3985),
                ("OW", 0.1880),
                ("OW*Marin", 0.1143),
            ]),
            risk_coefficients: map(&[
                ("Marin", -0.20),
                ("AGE", -0.0101),
                ("Size", 0.2043),
                ("Lev", 0.5588),
                ("OW", -0.2573),
                ("OW*Marin", -1.7233),
            ]),
            effect_scale: 1.0,
            noise_scale: 0.1,
            beta_noise_scale: 0.01,
            moment_targets: targets
                .iter()
                .map(|&(k, mean, std)| (k.to_owned(), Moments { mean, std }))
                .collect(),
            months_per_year: 12,
            market_mean: 0.008,
            market_sd: 0.045,
            idio_sd: 0.06,
        }
    }
}

impl DgpConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn target(&self, key: &str) -> Result<Moments, SynthError> {
        self.moment_targets
            .get(key)
            .copied()
            .ok_or_else(|| SynthError::InvalidConfig(format!("missing moment target {key}")))
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_firms < 2 {
            return Err(SynthError::InfeasibleTargets(format!(
                "{} firm(s): panel estimation needs a cross-section of at least 2",
                self.n_firms
            )));
        }
        if self.n_years < 3 {
            return bad(format!("n_years = {} (need at least 3)", self.n_years));
        }
        if self.n_firms * self.n_years < 30 {
            return bad(format!("{} firm-years (need at least 30)", self.n_firms * self.n_years));
        }
        if self.n_markets == 0 || self.n_markets > self.n_firms {
            return bad(format!("n_markets = {} must lie in 1..={}", self.n_markets, self.n_firms));
        }
        if self.months_per_year != 12 {
            return bad(format!("months_per_year = {} (only 12 is supported)", self.months_per_year));
        }
        for (name, v) in [
            ("effect_scale", self.effect_scale),
            ("noise_scale", self.noise_scale),
            ("beta_noise_scale", self.beta_noise_scale),
            ("market_sd", self.market_sd),
            ("idio_sd", self.idio_sd),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        for (k, v) in self.value_coefficients.iter().chain(&self.risk_coefficients) {
            if !v.is_finite() {
                return bad(format!("coefficient {k} is not finite"));
            }
        }
        for k in self.value_coefficients.keys() {
            if !VALUE_TERMS.contains(&k.as_str()) {
                return bad(format!("unknown value coefficient {k}"));
            }
        }
        for k in self.risk_coefficients.keys() {
            if !RISK_TERMS.contains(&k.as_str()) {
                return bad(format!("unknown risk coefficient {k}"));
            }
        }
        for (k, m) in &self.moment_targets {
            if !(m.mean.is_finite() && m.std.is_finite() && m.std >= 0.0) {
                return bad(format!("moment target {k} must be finite with non-negative std"));
            }
        }
        Ok(())
    }
}

/// Planted window beta for one firm-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBeta {
    pub firm_id: String,
    pub year: i32,
    pub beta: f64,
}

/// Everything planted in a generated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    /// Model whose slopes `value` describes.
    pub value_model: String,
    pub risk_model: String,
    pub marin_variant: String,
    pub value: BTreeMap<String, f64>,
    pub risk: BTreeMap<String, f64>,
    /// Firm intercepts α_i of the value equation.
    pub value_firm_effects: BTreeMap<String, f64>,
    /// Firm intercepts κ_i of the risk equation.
    pub risk_firm_effects: BTreeMap<String, f64>,
    pub planted_betas: Vec<PlantedBeta>,
    pub effect_scale: f64,
    pub noise_scale: f64,
    pub beta_noise_scale: f64,
}

impl Truth {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("truth serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Planted slopes for `model`'s equation.
    pub fn coefficients(&self, model: ModelId) -> &BTreeMap<String, f64> {
        if model.is_value() {
            &self.value
        } else {
            &self.risk
        }
    }
}

/// A generated panel: the dataset, its three CSV files and the truth record.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: PanelDataset,
    pub prices: Vec<PriceSeries>,
    pub fundamentals_csv: String,
    pub prices_csv: String,
    pub riskfree_csv: String,
    pub truth: Truth,
}

/// Stratified uniforms: one draw inside each of n equal slices, shuffled.
fn strata(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    slots.into_iter().map(|s| (s as f64 + rng.random::<f64>()) / n as f64).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn truncated_normal(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    loop {
        let z = normal(rng);
        if z.abs() <= bound {
            return z;
        }
    }
}

/// (μ, σ) of the log of a lognormal with the given mean and standard deviation.
fn lognormal_params(m: Moments) -> (f64, f64) {
    let s2 = (1.0 + (m.std / m.mean).powi(2)).ln();
    (m.mean.ln() - s2 / 2.0, s2.sqrt())
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Stakes whose controlling part (≥ 5%) sums to `ow`: a dominant holder,
/// up to three minor controlling holders and up to two small holders.
fn draw_stakes(rng: &mut ChaCha8Rng, ow: f64) -> Vec<f64> {
    let max_minor = (((ow - 0.10) / 0.07).floor().max(0.0) as usize).min(3);
    let n_minor = rng.random_range(0..=max_minor);
    let mut minors: Vec<f64> = (0..n_minor).map(|_| rng.random_range(0.06..0.07)).collect();
    let dominant = ow - minors.iter().sum::<f64>();
    let mut stakes = vec![dominant];
    stakes.append(&mut minors);
    let n_small = rng.random_range(0..=2);
    stakes.extend((0..n_small).map(|_| rng.random_range(0.005..0.045)));
    stakes
}

/// Monthly market returns for `years` calendar years: each year's twelve
/// shocks are standardized to mean 0 and sum of squares 12, so every year
/// has the same realized variance and the window mean is `mean`.
pub fn simulate_market_returns(rng: &mut ChaCha8Rng, years: usize, mean: f64, sd: f64) -> (Vec<f64>, Vec<f64>) {
    let mut z = Vec::with_capacity(12 * years);
    for _ in 0..years {
        let draws: Vec<f64> = (0..12).map(|_| normal(rng)).collect();
        let m = draws.iter().sum::<f64>() / 12.0;
        let ss: f64 = draws.iter().map(|d| (d - m).powi(2)).sum();
        let scale = (12.0 / ss).sqrt();
        z.extend(draws.iter().map(|d| (d - m) * scale));
    }
    let returns = z.iter().map(|z| mean + sd * z).collect();
    (returns, z)
}

/// Firm returns `alpha + β_y·R_m + ε` with a loading per calendar year.
/// With `orthogonal`, each year's ε is projected off a constant and the
/// market shocks, so it adds nothing to a window covariance with the market.
pub fn simulate_firm_returns(
    rng: &mut ChaCha8Rng,
    market: &[f64],
    market_z: &[f64],
    loadings: &[f64],
    alpha: f64,
    idio_sd: f64,
    orthogonal: bool,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(market.len());
    for (y, &beta) in loadings.iter().enumerate() {
        let span = 12 * y..12 * (y + 1);
        let mut eps: Vec<f64> = (0..12).map(|_| idio_sd * normal(rng)).collect();
        if orthogonal {
            let z = &market_z[span.clone()];
            let m = eps.iter().sum::<f64>() / 12.0;
            let zz: f64 = z.iter().map(|v| v * v).sum();
            let ze: f64 = z.iter().zip(&eps).map(|(a, b)| a * b).sum();
            for (e, zv) in eps.iter_mut().zip(z) {
                *e -= m + ze / zz * zv;
            }
        }
        for (m, e) in market[span].iter().zip(eps) {
            out.push(alpha + beta * m + e);
        }
    }
    out
}

/// Closing prices from December before `first_year` through the last month.
fn price_path(id: &str, first_year: i32, start: f64, returns: &[f64]) -> PriceSeries {
    let mut points = Vec::with_capacity(returns.len() + 1);
    points.push(PricePoint { year: first_year - 1, month: 12, close: start });
    let mut close = start;
    for (i, r) in returns.iter().enumerate() {
        close *= 1.0 + r;
        points.push(PricePoint { year: first_year + (i / 12) as i32, month: (i % 12) as u32 + 1, close });
    }
    PriceSeries::from_points(id, points)
}

struct FirmDraws {
    rows: Vec<FirmYearObservation>,
}

/// Named regressor values of one firm-year, computed from the stored fields.
fn regressors(obs: &FirmYearObservation, book_prev: f64, rate: f64) -> Result<BTreeMap<&'static str, f64>, SynthError> {
    let infeasible = |e: crate::variables::VariableError| SynthError::InfeasibleTargets(e.to_string());
    let m = marin(obs.sga, obs.rd, obs.sales).map_err(infeasible)?;
    let x = abnormal_earnings(obs.eps, rate, book_prev).map_err(infeasible)?;
    let c = control_variables(obs);
    let ow = ownership_concentration(&obs.controlling_stakes);
    Ok(BTreeMap::from([
        ("B", obs.book_value),
        ("X", x),
        ("Marin", m),
        ("AGE", c.age),
        ("Size", c.size),
        ("Lev", c.lev),
        ("OW", ow),
        ("OW*Marin", ow * m),
    ]))
}

fn linear(coef: &BTreeMap<String, f64>, x: &BTreeMap<&'static str, f64>) -> f64 {
    coef.iter().map(|(k, c)| c * x[k.as_str()]).sum()
}

/// Draws a panel from `cfg`. The dataset is assembled through the same
/// validation as ingested data.
pub fn generate_panel(cfg: &DgpConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let n = cfg.n_firms;
    let t_count = cfg.n_years;
    let years: Vec<i32> = (0..t_count as i32).map(|t| cfg.start_year + t).collect();
    let mid = (t_count - 1) as f64 / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let p_t = cfg.target("P")?;
    let b_t = cfg.target("B")?;
    let x_t = cfg.target("X")?;
    let marin_t = cfg.target("Marin")?;
    let age_t = cfg.target("Age")?;
    let assets_t = cfg.target("Total Assets")?;
    let lev_t = cfg.target("Lev")?;
    let bet_t = cfg.target("Bet")?;
    let ow_t = cfg.target("OW")?;

    // Feasibility of the requested moments under this construction.
    let (mlo, mhi) = MARIN_RANGE;
    if !(marin_t.mean > mlo + 0.05 && marin_t.mean < mhi) {
        return Err(SynthError::InfeasibleTargets(format!("Marin mean {} outside ({}, {mhi})", marin_t.mean, mlo + 0.05)));
    }
    let ow_exp = (OW_RANGE.1 - OW_RANGE.0) / (ow_t.mean - OW_RANGE.0) - 1.0;
    if !(ow_exp.is_finite() && ow_exp > 0.0) {
        return Err(SynthError::InfeasibleTargets(format!("OW mean {} not reachable within {OW_RANGE:?}", ow_t.mean)));
    }
    if !(lev_t.mean > LEV_RANGE.0 && lev_t.mean < LEV_RANGE.1) {
        return Err(SynthError::InfeasibleTargets(format!("Lev mean {} outside {LEV_RANGE:?}", lev_t.mean)));
    }
    for (k, m) in [("P", p_t), ("B", b_t), ("Total Assets", assets_t)] {
        if !(m.mean > 0.0) {
            return Err(SynthError::InfeasibleTargets(format!("{k} mean {} must be positive", m.mean)));
        }
    }
    let age_spread = 3.0 * (age_t.mean - 3.0 - mid);
    if age_spread < 0.0 {
        return Err(SynthError::InfeasibleTargets(format!("Age mean {} below the minimum reachable", age_t.mean)));
    }

    // Markets and their risk-free rates.
    let markets: Vec<MarketId> = (1..=cfg.n_markets).map(|m| MarketId::new(format!("M{m}"))).collect();
    let mut risk_free = Vec::with_capacity(markets.len());
    for m in &markets {
        let base = rng.random_range(0.02..0.06);
        let mut s = RiskFreeSeries::new(m.clone());
        for &y in &years {
            s.rates.insert(y, (base + 0.004 * normal(&mut rng)).clamp(0.005, 0.2));
        }
        risk_free.push(s);
    }

    // Firm-level stratified quantiles.
    let q_marin = strata(&mut rng, n);
    let q_ow = strata(&mut rng, n);
    let q_beta = strata(&mut rng, n);
    let q_age = strata(&mut rng, n);
    let q_size = strata(&mut rng, n);
    let q_price = strata(&mut rng, n);

    let half = (marin_t.std * 3f64.sqrt()).min(marin_t.mean - mlo - 0.05).min(mhi - marin_t.mean);
    let (a_mu, a_sigma) = lognormal_params(assets_t);
    let (b_mu, b_sigma) = lognormal_params(b_t);
    let (p_mu, p_sigma) = lognormal_params(Moments { mean: p_t.mean, std: cfg.effect_scale });
    let lev_center = {
        let u = (lev_t.mean - LEV_RANGE.0) / (LEV_RANGE.1 - LEV_RANGE.0);
        (u / (1.0 - u)).ln()
    };
    let lev_spread = lev_t.std / (lev_t.mean * (1.0 - lev_t.mean));
    let x_between = 0.75 * x_t.std;
    let x_within = (x_t.std.powi(2) - x_between.powi(2)).sqrt();

    let firm_ids: Vec<FirmId> = (1..=n).map(|i| FirmId::new(format!("F{i:03}"))).collect();
    let mut firms = Vec::with_capacity(n);
    let mut levels = Vec::with_capacity(n);
    let mut firm_betas = Vec::with_capacity(n);
    for i in 0..n {
        let market = markets[i % cfg.n_markets].clone();
        let m_i = marin_t.mean - half + 2.0 * half * q_marin[i];
        let room = (m_i - mlo).min(mhi - m_i);
        let g_i = rng.random_range(-0.8..0.8) * room / mid.max(1.0);
        let ow_i = OW_RANGE.0 + (OW_RANGE.1 - OW_RANGE.0) * q_ow[i].powf(ow_exp);
        let h_i = rng.random_range(-0.004..0.004);
        let age0 = 3 + (age_spread * q_age[i] * q_age[i]).round() as i32;
        let mut assets = (a_mu + a_sigma * normal_quantile(q_size[i])).exp();
        let mut lev_logit = lev_center + lev_spread * normal(&mut rng);
        let turnover = rng.random_range(0.4..1.2);
        let rd_ratio = if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.005..0.04) };
        let mut book_prev = (b_mu + b_sigma * normal(&mut rng)).exp();
        let x_i = x_t.mean + x_between * normal(&mut rng);
        levels.push((p_mu + p_sigma * normal_quantile(q_price[i])).exp());
        firm_betas.push(bet_t.mean + bet_t.std * normal_quantile(q_beta[i]));

        let mut rows = Vec::with_capacity(t_count);
        for (t, &year) in years.iter().enumerate() {
            let dt = t as f64 - mid;
            if t > 0 {
                assets *= (0.03 + 0.02 * normal(&mut rng)).exp();
                lev_logit += 0.1 * normal(&mut rng);
            }
            let marin_it = (m_i + g_i * dt + 0.01 * normal(&mut rng)).clamp(mlo, mhi);
            let ow_it = (ow_i + h_i * dt + 0.003 * normal(&mut rng)).clamp(OW_RANGE.0, OW_RANGE.1);
            let lev = LEV_RANGE.0 + (LEV_RANGE.1 - LEV_RANGE.0) * logistic(lev_logit);
            let book = book_prev * (0.03 + 0.05 * normal(&mut rng)).exp();
            let rate = risk_free[i % cfg.n_markets].rates[&year];
            let eps = rate * book_prev + x_i + x_within * normal(&mut rng);
            let sales = assets * turnover;
            let rd = sales * rd_ratio;
            rows.push(FirmYearObservation {
                firm_id: firm_ids[i].clone(),
                market_id: market.clone(),
                year,
                price: f64::NAN,
                book_value: book,
                eps,
                sga: marin_it * sales + rd,
                rd,
                sales,
                total_assets: assets,
                total_equity: lev * assets,
                establishment_year: years[0] - age0,
                controlling_stakes: draw_stakes(&mut rng, ow_it),
                book_value_prev: (t == 0).then_some(book_prev),
            });
            book_prev = book;
        }
        firms.push(FirmDraws { rows });
    }

    // Planted equations on the computed regressors.
    let mut value_effects = BTreeMap::new();
    let mut risk_effects = BTreeMap::new();
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, firm) in firms.iter_mut().enumerate() {
        let rate_of = |year: i32| risk_free[i % cfg.n_markets].rates[&year];
        let mut xs = Vec::with_capacity(t_count);
        for (t, obs) in firm.rows.iter().enumerate() {
            let prev = if t == 0 { obs.book_value_prev.unwrap() } else { firm.rows[t - 1].book_value };
            xs.push(regressors(obs, prev, rate_of(obs.year))?);
        }
        let v: Vec<f64> = xs.iter().map(|x| linear(&cfg.value_coefficients, x)).collect();
        let r: Vec<f64> = xs.iter().map(|x| linear(&cfg.risk_coefficients, x)).collect();
        let v_mean = v.iter().sum::<f64>() / t_count as f64;
        let r_mean = r.iter().sum::<f64>() / t_count as f64;

        let min_dev = v.iter().map(|v| v - v_mean).fold(f64::INFINITY, f64::min);
        let level = levels[i].max(PRICE_FLOOR + 4.0 * cfg.noise_scale - min_dev);
        let alpha = level - v_mean;
        let kappa = firm_betas[i] - r_mean;
        value_effects.insert(firm_ids[i].to_string(), alpha);
        risk_effects.insert(firm_ids[i].to_string(), kappa);

        for (obs, v) in firm.rows.iter_mut().zip(&v) {
            obs.price = alpha + v + cfg.noise_scale * truncated_normal(&mut rng, 4.0);
        }
        targets.push(r.iter().map(|r| kappa + r + cfg.beta_noise_scale * normal(&mut rng)).collect());
    }

    // Monthly returns: four pre-sample years plus the panel years.
    let first_return_year = cfg.start_year - PRE_YEARS;
    let span = t_count + PRE_YEARS as usize;
    let mut prices = Vec::with_capacity(n + markets.len());
    let mut market_paths = Vec::with_capacity(markets.len());
    for m in &markets {
        let (ret, z) = simulate_market_returns(&mut rng, span, cfg.market_mean, cfg.market_sd);
        prices.push(price_path(m.as_str(), first_return_year, 1000.0, &ret));
        market_paths.push((ret, z));
    }
    let window = (PRE_YEARS + 1) as f64;
    for (i, target) in targets.iter().enumerate() {
        // Loadings such that every five-year mean equals the target.
        let mut loadings = vec![target[0]; PRE_YEARS as usize];
        for &b in target {
            let tail: f64 = loadings[loadings.len() - PRE_YEARS as usize..].iter().sum();
            loadings.push(window * b - tail);
        }
        let (ret, z) = &market_paths[i % cfg.n_markets];
        let firm_ret = simulate_firm_returns(&mut rng, ret, z, &loadings, 0.002, cfg.idio_sd, true);
        if let Some(r) = firm_ret.iter().find(|r| **r <= -0.95) {
            return Err(SynthError::InfeasibleTargets(format!(
                "firm {} monthly return {r} would wipe out the price path",
                firm_ids[i]
            )));
        }
        let start = 20.0 * (0.3 * normal(&mut rng)).exp();
        prices.push(price_path(firm_ids[i].as_str(), first_return_year, start, &firm_ret));
    }

    let rows: Vec<FirmYearObservation> = firms.into_iter().flat_map(|f| f.rows).collect();
    let dataset = build_dataset(rows.clone(), risk_free.clone())?;
    let planted_betas = firm_ids
        .iter()
        .zip(&targets)
        .flat_map(|(f, t)| {
            years.iter().zip(t).map(|(&year, &beta)| PlantedBeta { firm_id: f.to_string(), year, beta })
        })
        .collect();
    let truth = Truth {
        seed: cfg.seed,
        value_model: ModelId::ValueModerated.name().into(),
        risk_model: ModelId::RiskModerated.name().into(),
        marin_variant: MarinVariant::SalesRatio.name().into(),
        value: cfg.value_coefficients.clone(),
        risk: cfg.risk_coefficients.clone(),
        value_firm_effects: value_effects,
        risk_firm_effects: risk_effects,
        planted_betas,
        effect_scale: cfg.effect_scale,
        noise_scale: cfg.noise_scale,
        beta_noise_scale: cfg.beta_noise_scale,
    };

    Ok(SynthOutput {
        fundamentals_csv: write_fundamentals(&rows),
        prices_csv: write_prices(&prices),
        riskfree_csv: write_riskfree(&risk_free),
        dataset,
        prices,
        truth,
    })
}

/// One estimated slope compared with its planted value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientCheck {
    pub variable: String,
    pub estimate: f64,
    pub std_error: f64,
    pub truth: f64,
    /// |estimate − truth| / std_error.
    pub deviation_se: f64,
    pub pass: bool,
}

/// Number of standard errors within which an estimate passes.
pub const TRUTH_SE_BAND: f64 = 3.0;

impl CoefficientCheck {
    pub fn new(variable: &str, estimate: f64, std_error: f64, truth: f64) -> Self {
        let gap = (estimate - truth).abs();
        let deviation_se = if std_error > 0.0 {
            gap / std_error
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        // NaN estimates or errors fail.
        let pass = deviation_se <= TRUTH_SE_BAND;
        Self { variable: variable.to_owned(), estimate, std_error, truth, deviation_se, pass }
    }
}

/// Flags each reported slope as passing when it lies within three robust
/// standard errors of the planted value. Planted terms the report omits are
/// ignored; reported terms with no planted value are a mismatch.
pub fn truth_check(report: &EstimationReport, truth: &Truth) -> Result<Vec<CoefficientCheck>, SynthError> {
    let model = report.model_id();
    if report.spec.marin_variant != MarinVariant::SalesRatio {
        return Err(SynthError::ModelMismatch(format!(
            "{model} uses the {} variant; planted values refer to {}",
            report.spec.marin_variant.name(),
            truth.marin_variant
        )));
    }
    let planted = truth.coefficients(model);
    let mut out = Vec::new();
    for row in report.table.iter().filter(|r| r.variable != crate::regress::INTERCEPT) {
        let (Some(estimate), Some(std_error)) = (row.coefficient, row.std_error) else {
            continue;
        };
        let truth_value = *planted
            .get(&row.variable)
            .ok_or_else(|| SynthError::ModelMismatch(format!("{model} reports {} with no planted value", row.variable)))?;
        out.push(CoefficientCheck::new(&row.variable, estimate, std_error, truth_value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_fundamentals, parse_prices, parse_riskfree};

    #[test]
    fn default_shape() {
        let out = generate_panel(&DgpConfig::default()).unwrap();
        assert_eq!(out.dataset.len(), 200);
        assert_eq!(out.dataset.firms().len(), 20);
        assert_eq!(out.prices.len(), 24);
        assert_eq!(out.truth.planted_betas.len(), 200);
        for s in &out.prices {
            assert!(s.gaps.is_empty());
            assert_eq!(s.points.len(), 14 * 12 + 1);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_panel(&DgpConfig::default().with_seed(7)).unwrap();
        let b = generate_panel(&DgpConfig::default().with_seed(7)).unwrap();
        assert_eq!(a.fundamentals_csv, b.fundamentals_csv);
        assert_eq!(a.prices_csv, b.prices_csv);
        assert_eq!(a.riskfree_csv, b.riskfree_csv);
        assert_eq!(a.truth.to_json(), b.truth.to_json());
        let c = generate_panel(&DgpConfig::default().with_seed(8)).unwrap();
        assert_ne!(a.fundamentals_csv, c.fundamentals_csv);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let out = generate_panel(&DgpConfig::default().with_seed(3)).unwrap();
        let (rows, report) = parse_fundamentals(&out.fundamentals_csv).unwrap();
        assert_eq!(report.rows_rejected, 0);
        let rf = parse_riskfree(&out.riskfree_csv).unwrap();
        let ds = build_dataset(rows, rf).unwrap();
        assert_eq!(ds.observations().collect::<Vec<_>>(), out.dataset.observations().collect::<Vec<_>>());
        let mut parsed = parse_prices(&out.prices_csv).unwrap();
        let mut expected = out.prices.clone();
        parsed.sort_by(|a, b| a.series_id.cmp(&b.series_id));
        expected.sort_by(|a, b| a.series_id.cmp(&b.series_id));
        assert_eq!(parsed, expected);
    }

    #[test]
    fn single_firm_is_infeasible() {
        let cfg = DgpConfig { n_firms: 1, n_years: 40, ..DgpConfig::default() };
        assert!(matches!(generate_panel(&cfg), Err(SynthError::InfeasibleTargets(_))));
    }

    #[test]
    fn invalid_configs() {
        let cfg = DgpConfig { noise_scale: 0.0, ..DgpConfig::default() };
        assert!(matches!(generate_panel(&cfg), Err(SynthError::InvalidConfig(_))));
        let cfg = DgpConfig { n_firms: 2, n_years: 10, n_markets: 2, ..DgpConfig::default() };
        assert!(matches!(generate_panel(&cfg), Err(SynthError::InvalidConfig(_))));
        let mut cfg = DgpConfig::default();
        cfg.moment_targets.insert("OW".into(), Moments { mean: 0.95, std: 0.1 });
        assert!(matches!(generate_panel(&cfg), Err(SynthError::InfeasibleTargets(_))));
    }

    #[test]
    fn stakes_sum_to_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..500 {
            let ow = 0.221 + 0.678 * f64::from(i) / 500.0;
            let s = draw_stakes(&mut rng, ow);
            assert!((ownership_concentration(&s) - ow).abs() < 1e-12);
            assert!(s.iter().sum::<f64>() <= 1.0);
            assert!(s.iter().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }

    #[test]
    fn market_years_are_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (r, z) = simulate_market_returns(&mut rng, 5, 0.01, 0.05);
        for y in 0..5 {
            let s = &z[12 * y..12 * (y + 1)];
            assert!(s.iter().sum::<f64>().abs() < 1e-12);
            assert!((s.iter().map(|v| v * v).sum::<f64>() - 12.0).abs() < 1e-12);
        }
        assert!((r.iter().sum::<f64>() / 60.0 - 0.01).abs() < 1e-14);
    }
}
