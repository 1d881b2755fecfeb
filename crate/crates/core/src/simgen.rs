//! Seeded synthetic campaigns.
//!
//! [`generate_campaign`] simulates single-slot second-price auctions against
//! lognormal competitor bids and logs one observation row per bid level.
//! [`ground_truth_curve`] samples the logistic response directly, for fit
//! round-trip checks. Every generator owns its random stream, seeded with
//! ChaCha8, so identical configs reproduce identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvefit::SigmoidParams;
use crate::isotonic::pava_non_decreasing;
use crate::landscape::{AuctionObservation, BidLandscape, ClickCostCurve, LandscapePoint};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Market and campaign settings for the auction simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub seed: u64,
    pub n_campaigns: usize,
    pub n_bid_levels: usize,
    pub auctions_per_level: u64,
    /// Mean of log competitor bid (eCPM dollars).
    pub competitor_log_mean: f64,
    pub competitor_log_sd: f64,
    pub competitors_per_auction: usize,
    pub true_ctr: f64,
    /// Standard deviation of the multiplicative lognormal click noise.
    pub noise_sd: f64,
    pub min_bid: f64,
    pub max_bid: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_campaigns: 4,
            n_bid_levels: 30,
            auctions_per_level: 2000,
            competitor_log_mean: 1.0,
            competitor_log_sd: 0.5,
            competitors_per_auction: 3,
            true_ctr: 0.002,
            noise_sd: 0.05,
            min_bid: 0.5,
            max_bid: 10.0,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.n_campaigns == 0 || self.n_bid_levels == 0 || self.auctions_per_level == 0 {
            return bad("counts must be at least 1");
        }
        if self.competitors_per_auction == 0 {
            return bad("competitors_per_auction must be at least 1");
        }
        if !(self.competitor_log_sd > 0.0 && self.competitor_log_sd.is_finite()) {
            return bad("competitor_log_sd must be positive");
        }
        if !self.competitor_log_mean.is_finite() {
            return bad("competitor_log_mean must be finite");
        }
        if !(self.true_ctr > 0.0 && self.true_ctr <= 1.0) {
            return bad("true_ctr must be in (0, 1]");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise_sd must be non-negative");
        }
        if !(self.min_bid >= 0.01 && self.max_bid >= self.min_bid && self.max_bid.is_finite()) {
            return bad("need 0.01 <= min_bid <= max_bid");
        }
        Ok(())
    }

    /// Evenly spaced bid levels, rounded to cents.
    pub fn bid_levels(&self) -> Vec<f64> {
        let n = self.n_bid_levels;
        (0..n)
            .map(|i| {
                let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                ((self.min_bid + f * (self.max_bid - self.min_bid)) * 100.0).round() / 100.0
            })
            .collect()
    }
}

fn noise_dist(sd: f64) -> Option<LogNormal<f64>> {
    (sd > 0.0).then(|| LogNormal::new(0.0, sd).expect("sd validated"))
}

/// Simulates one campaign's auction log.
pub fn generate_campaign(config: &MarketConfig) -> Result<Vec<AuctionObservation>, SimError> {
    generate_campaign_with_id(config, &format!("sim-{}", config.seed))
}

fn generate_campaign_with_id(config: &MarketConfig, campaign_id: &str) -> Result<Vec<AuctionObservation>, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let competitors = LogNormal::new(config.competitor_log_mean, config.competitor_log_sd)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let noise = noise_dist(config.noise_sd);

    let mut out = Vec::with_capacity(config.n_bid_levels);
    let mut levels = config.bid_levels();
    levels.dedup();
    for bid in levels {
        let mut wins = 0_u64;
        let mut paid = 0.0_f64;
        for _ in 0..config.auctions_per_level {
            let top = (0..config.competitors_per_auction)
                .map(|_| competitors.sample(&mut rng))
                .fold(0.0_f64, f64::max);
            if bid > top {
                wins += 1;
                paid += top;
            }
        }
        let base = Binomial::new(wins, config.true_ctr)
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?
            .sample(&mut rng);
        let clicks = match &noise {
            Some(d) => ((base as f64 * d.sample(&mut rng)).round() as u64).min(wins),
            None => base,
        };
        out.push(AuctionObservation {
            campaign_id: campaign_id.to_string(),
            bid,
            auctions: config.auctions_per_level,
            wins,
            clicks,
            ecpm_cost: if wins == 0 { 0.0 } else { (paid / wins as f64).min(bid) },
            ctr: config.true_ctr,
        });
    }
    Ok(out)
}

/// Simulates `n_campaigns` campaigns with per-campaign seeds and a jittered
/// competitor market, in campaign-id order.
pub fn generate_market(config: &MarketConfig) -> Result<Vec<AuctionObservation>, SimError> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for i in 0..config.n_campaigns {
        let campaign = MarketConfig {
            seed: master.random(),
            competitor_log_mean: config.competitor_log_mean + master.random_range(-0.25..=0.25),
            ..config.clone()
        };
        let id = format!("sim-{}-{:03}", config.seed, i);
        out.extend(generate_campaign_with_id(&campaign, &id)?);
    }
    Ok(out)
}

/// Samples `n` evenly spaced costs in `(0, x_max]` from the logistic response,
/// with multiplicative lognormal noise.
pub fn ground_truth_curve(
    params: &SigmoidParams,
    n: usize,
    x_max: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<ClickCostCurve, SimError> {
    params.validate().map_err(|e| SimError::InvalidParams(e.to_string()))?;
    if n < 4 {
        return Err(SimError::InvalidParams(format!("need n >= 4, got {n}")));
    }
    if !(x_max > 0.0 && x_max.is_finite()) {
        return Err(SimError::InvalidParams("x_max must be positive".into()));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(SimError::InvalidParams("noise_sd must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = noise_dist(noise_sd);
    let pairs = (1..=n)
        .map(|i| {
            let x = x_max * i as f64 / n as f64;
            let factor = noise.as_ref().map_or(1.0, |d| d.sample(&mut rng));
            (x, params.value(x) * factor)
        })
        .collect();
    Ok(ClickCostCurve::new(pairs, 0.001, 0.0))
}

/// A monotone landscape reproducing `curve` at bids `markup x cost`.
///
/// Impressions are set so the largest click count maps to a win rate of 0.95;
/// win rates are made non-decreasing by pooling.
pub fn landscape_from_curve(campaign_id: &str, curve: &ClickCostCurve, markup: f64) -> BidLandscape {
    let ctr = curve.ctr;
    let max_clicks = curve.clicks().fold(0.0, f64::max).max(1e-12);
    let impressions = max_clicks / (0.95 * ctr);
    let raw: Vec<f64> = curve.clicks().map(|c| c / (impressions * ctr)).collect();
    let win_rates = pava_non_decreasing(&raw, &vec![1.0; raw.len()]);
    let points = curve
        .pairs
        .iter()
        .zip(win_rates)
        .map(|(&(cost, _), win_rate)| LandscapePoint {
            bid: cost * markup,
            win_rate,
            ecpm_cost: cost,
        })
        .collect();
    BidLandscape {
        campaign_id: campaign_id.to_string(),
        ctr,
        impressions,
        points,
        volumes: vec![],
    }
}
