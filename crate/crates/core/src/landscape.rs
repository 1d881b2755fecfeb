//! Bid landscapes: win rate and eCPM cost as functions of bid, built from
//! logged auction outcomes, plus the click and spend curves they imply.
//!
//! A landscape is a sorted grid of bid points. Between grid points both curves
//! are interpolated linearly; outside the grid they are clamped to the end
//! values. Monotonicity of both curves is enforced at construction with
//! weighted pool-adjacent-violators, since raw logs are noisy.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isotonic::pava_non_decreasing;

/// Minimum number of distinct bid buckets required to build a landscape.
pub const MIN_BUCKETS: usize = 4;

/// CSV header for observation logs, in column order.
pub const OBSERVATION_HEADER: [&str; 7] = ["campaign_id", "bid", "auctions", "wins", "clicks", "ecpm_cost", "ctr"];

#[derive(Debug, Error, PartialEq)]
pub enum LandscapeError {
    #[error("too few observations: {found} distinct bids, need at least {MIN_BUCKETS}")]
    TooFewObservations { found: usize },
    #[error("inconsistent campaign: {0}")]
    InconsistentCampaign(String),
    #[error("landscape has no points")]
    EmptyLandscape,
    #[error("ctr must be positive")]
    ZeroCtr,
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("io error: {0}")]
    Io(String),
}

/// One logged auction outcome row for a campaign at a single bid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionObservation {
    pub campaign_id: String,
    /// eCPM bid in dollars.
    pub bid: f64,
    pub auctions: u64,
    pub wins: u64,
    pub clicks: u64,
    /// Mean second price paid on won auctions, eCPM dollars.
    pub ecpm_cost: f64,
    pub ctr: f64,
}

impl AuctionObservation {
    pub fn validate(&self) -> Result<(), LandscapeError> {
        let bad = |msg: &str| Err(LandscapeError::InvalidObservation(msg.to_string()));
        if self.campaign_id.is_empty() {
            return bad("empty campaign_id");
        }
        if !(self.bid.is_finite() && self.bid > 0.0) {
            return bad("bid must be positive");
        }
        if self.auctions == 0 {
            return bad("auctions must be at least 1");
        }
        if self.wins > self.auctions {
            return bad("wins exceed auctions");
        }
        if self.clicks > self.wins {
            return bad("clicks exceed wins");
        }
        if !(self.ecpm_cost.is_finite() && self.ecpm_cost >= 0.0) {
            return bad("ecpm_cost must be non-negative");
        }
        // second price never exceeds the winner's own bid
        if self.ecpm_cost > self.bid {
            return bad("ecpm_cost exceeds bid");
        }
        if !(self.ctr > 0.0 && self.ctr <= 1.0) {
            return bad("ctr must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub bid: f64,
    pub win_rate: f64,
    pub ecpm_cost: f64,
}

/// Monotone win-rate and eCPM-cost curves over a bid grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidLandscape {
    pub campaign_id: String,
    pub ctr: f64,
    /// Exogenous supply per bid level (the auction count of the largest bucket).
    pub impressions: f64,
    pub points: Vec<LandscapePoint>,
    /// Auction volume per point, used to pick the campaign's current bid.
    #[serde(skip)]
    pub volumes: Vec<u64>,
}

/// The observed click-vs-cost pairs a response curve is fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickCostCurve {
    /// `(ecpm_cost, clicks)` sorted by cost.
    pub pairs: Vec<(f64, f64)>,
    pub ctr: f64,
    pub impressions: f64,
}

impl ClickCostCurve {
    /// Builds a curve from raw pairs, sorting by cost.
    pub fn new(mut pairs: Vec<(f64, f64)>, ctr: f64, impressions: f64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            pairs,
            ctr,
            impressions,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.0)
    }

    pub fn clicks(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().map(|p| p.1)
    }

    /// The curve with the pair at `index` removed.
    pub fn without(&self, index: usize) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.remove(index);
        Self {
            pairs,
            ctr: self.ctr,
            impressions: self.impressions,
        }
    }
}

fn bucket_key(bid: f64) -> i64 {
    (bid * 100.0).round() as i64
}

#[derive(Default)]
struct Bucket {
    auctions: u64,
    wins: u64,
    cost_weighted: f64,
}

/// Builds a monotone landscape for one campaign.
pub fn build_landscape(observations: &[AuctionObservation]) -> Result<BidLandscape, LandscapeError> {
    let first = observations
        .first()
        .ok_or(LandscapeError::TooFewObservations { found: 0 })?;
    for obs in observations {
        obs.validate()?;
        if obs.campaign_id != first.campaign_id {
            return Err(LandscapeError::InconsistentCampaign(format!(
                "mixed campaign ids {:?} and {:?}",
                first.campaign_id, obs.campaign_id
            )));
        }
        if obs.ctr != first.ctr {
            return Err(LandscapeError::InconsistentCampaign(format!(
                "mixed ctr {} and {} in campaign {:?}",
                first.ctr, obs.ctr, first.campaign_id
            )));
        }
    }

    let mut buckets: BTreeMap<i64, Bucket> = BTreeMap::new();
    for obs in observations {
        let b = buckets.entry(bucket_key(obs.bid)).or_default();
        b.auctions += obs.auctions;
        b.wins += obs.wins;
        b.cost_weighted += obs.ecpm_cost * obs.wins as f64;
    }
    if buckets.len() < MIN_BUCKETS {
        return Err(LandscapeError::TooFewObservations { found: buckets.len() });
    }

    let raw: Vec<LandscapePoint> = buckets
        .iter()
        .map(|(&key, b)| aggregate_bucket(key as f64 / 100.0, b))
        .collect();
    let volumes: Vec<u64> = buckets.values().map(|b| b.auctions).collect();
    let weights: Vec<f64> = volumes.iter().map(|&a| a as f64).collect();

    let win_rates: Vec<f64> = raw.iter().map(|p| p.win_rate).collect();
    let costs: Vec<f64> = raw.iter().map(|p| p.ecpm_cost).collect();
    let win_rates = pava_non_decreasing(&win_rates, &weights);
    let costs = pava_non_decreasing(&costs, &weights);

    let points = raw
        .iter()
        .zip(win_rates.iter().zip(&costs))
        .map(|(p, (&win_rate, &ecpm_cost))| LandscapePoint {
            bid: p.bid,
            win_rate: win_rate.clamp(0.0, 1.0),
            // pooled blocks never exceed their first bid, the min is for rounding
            ecpm_cost: ecpm_cost.min(p.bid).max(0.0),
        })
        .collect();

    Ok(BidLandscape {
        campaign_id: first.campaign_id.clone(),
        ctr: first.ctr,
        impressions: volumes.iter().copied().max().unwrap_or(0) as f64,
        points,
        volumes,
    })
}

fn aggregate_bucket(bid: f64, b: &Bucket) -> LandscapePoint {
    let win_rate = if b.auctions == 0 {
        0.0
    } else {
        b.wins as f64 / b.auctions as f64
    };
    let ecpm_cost = if b.wins == 0 {
        0.0
    } else {
        b.cost_weighted / b.wins as f64
    };
    LandscapePoint {
        bid,
        win_rate,
        ecpm_cost,
    }
}

/// Piecewise-linear interpolation with clamped ends. `xs` must be sorted.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert!(!xs.is_empty() && xs.len() == ys.len());
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    // first index with xs[i] > x
    let hi = xs.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let span = xs[hi] - xs[lo];
    if span <= 0.0 {
        return ys[hi];
    }
    ys[lo] + (x - xs[lo]) * (ys[hi] - ys[lo]) / span
}

impl BidLandscape {
    fn check_non_empty(&self) -> Result<(), LandscapeError> {
        if self.points.is_empty() {
            Err(LandscapeError::EmptyLandscape)
        } else {
            Ok(())
        }
    }

    pub fn bids(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.bid).collect()
    }

    pub fn win_rate_at(&self, bid: f64) -> Result<f64, LandscapeError> {
        self.check_non_empty()?;
        let ys: Vec<f64> = self.points.iter().map(|p| p.win_rate).collect();
        Ok(interpolate(&self.bids(), &ys, bid))
    }

    pub fn ecpm_cost_at(&self, bid: f64) -> Result<f64, LandscapeError> {
        self.check_non_empty()?;
        let ys: Vec<f64> = self.points.iter().map(|p| p.ecpm_cost).collect();
        Ok(interpolate(&self.bids(), &ys, bid))
    }

    /// Expected clicks at `bid`: impressions x win rate x ctr.
    pub fn clicks_at(&self, bid: f64) -> Result<f64, LandscapeError> {
        Ok(self.impressions * self.win_rate_at(bid)? * self.ctr)
    }

    /// Expected spend at `bid`: clicks x eCPM cost / (1000 x ctr).
    pub fn spend_at(&self, bid: f64) -> Result<f64, LandscapeError> {
        let clicks = self.clicks_at(bid)?;
        if self.ctr <= 0.0 {
            return Err(LandscapeError::ZeroCtr);
        }
        Ok(clicks * self.ecpm_cost_at(bid)? / (1000.0 * self.ctr))
    }

    pub fn max_cost(&self) -> Result<f64, LandscapeError> {
        self.check_non_empty()?;
        Ok(self.points.iter().map(|p| p.ecpm_cost).fold(0.0, f64::max))
    }

    /// The campaign's current operating bid: the bucket with the most
    /// auctions. Ties resolve to the middle of the tied buckets.
    pub fn current_bid(&self) -> Result<f64, LandscapeError> {
        self.check_non_empty()?;
        if self.volumes.len() != self.points.len() {
            return Ok(self.points[self.points.len() / 2].bid);
        }
        let max = self.volumes.iter().copied().max().unwrap_or(0);
        let tied: Vec<usize> = (0..self.volumes.len()).filter(|&i| self.volumes[i] == max).collect();
        Ok(self.points[tied[(tied.len() - 1) / 2]].bid)
    }

    /// Landscape JSON export.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landscape serializes")
    }
}

/// Materializes the `(cost, clicks)` observations a response curve is fitted
/// to: one pair per landscape point, keeping the larger click count when two
/// points share a cost.
pub fn click_cost_pairs(landscape: &BidLandscape) -> Result<ClickCostCurve, LandscapeError> {
    landscape.check_non_empty()?;
    let mut by_cost: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for p in &landscape.points {
        let clicks = landscape.clicks_at(p.bid)?;
        by_cost
            .entry(p.ecpm_cost.to_bits())
            .and_modify(|e| e.1 = e.1.max(clicks))
            .or_insert((p.ecpm_cost, clicks));
    }
    // non-negative f64 bit patterns sort like the values
    Ok(ClickCostCurve::new(
        by_cost.into_values().collect(),
        landscape.ctr,
        landscape.impressions,
    ))
}

/// Groups observations by campaign, in campaign-id order.
pub fn group_by_campaign(observations: Vec<AuctionObservation>) -> BTreeMap<String, Vec<AuctionObservation>> {
    let mut out: BTreeMap<String, Vec<AuctionObservation>> = BTreeMap::new();
    for obs in observations {
        out.entry(obs.campaign_id.clone()).or_default().push(obs);
    }
    out
}

/// Reads an observation CSV. The header must match [`OBSERVATION_HEADER`].
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<AuctionObservation>, LandscapeError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| LandscapeError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(OBSERVATION_HEADER.iter().copied()) {
        return Err(LandscapeError::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                OBSERVATION_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| LandscapeError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let obs: AuctionObservation = record
            .deserialize(None)
            .map_err(|e: csv::Error| LandscapeError::Parse {
                line,
                message: e.to_string(),
            })?;
        obs.validate().map_err(|e| LandscapeError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(obs);
    }
    Ok(out)
}

/// Writes observations in the CSV ingestion format.
pub fn write_observations<W: Write>(writer: W, observations: &[AuctionObservation]) -> Result<(), LandscapeError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OBSERVATION_HEADER)
        .map_err(|e| LandscapeError::Io(e.to_string()))?;
    for o in observations {
        w.write_record([
            o.campaign_id.clone(),
            format!("{:.3}", o.bid),
            o.auctions.to_string(),
            o.wins.to_string(),
            o.clicks.to_string(),
            format!("{:.6}", o.ecpm_cost),
            o.ctr.to_string(),
        ])
        .map_err(|e| LandscapeError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| LandscapeError::Io(e.to_string()))
}
