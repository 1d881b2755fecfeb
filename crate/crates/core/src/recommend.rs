//! Bid recommendation from a fitted logistic response curve.
//!
//! All strategies work in the eCPM-cost domain and are capped at the largest
//! cost observed on the campaign's landscape. The budget is enforced with a
//! binary search over a 0.001 cost lattice; the chosen cost is then mapped back
//! to a bid through the landscape.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::curvefit::{FitResult, SigmoidParams};
use crate::landscape::{BidLandscape, LandscapeError};

/// Spacing of the cost lattice searched by the budget search.
pub const COST_STEP: f64 = 0.001;
/// Relative tolerance for "spend is approximately the budget".
pub const BUDGET_REL_TOL: f64 = 1e-3;
/// Fraction of the peak (or affordable) quantity targeted by the 90% variants.
pub const NINETY: f64 = 0.9;

#[derive(Debug, Error, PartialEq)]
pub enum RecommendError {
    #[error("fit did not converge")]
    NotConverged,
    #[error("recommendation needs a sigmoid fit, got {0}")]
    NotSigmoid(String),
    #[error("budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("ctr must be positive")]
    ZeroCtr,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Keep the current bid.
    #[serde(rename = "no-opt")]
    NoOpt,
    /// Maximum clicks within budget.
    #[serde(rename = "mc")]
    MaxClick,
    /// Cheapest cost reaching 90% of the affordable maximum clicks.
    #[serde(rename = "mc90")]
    MaxClick90,
    /// Peak of the click-per-cost derivative.
    #[serde(rename = "ip")]
    Inflection,
    /// Past the peak, where the derivative falls to 90% of its maximum.
    #[serde(rename = "ip90")]
    Inflection90,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::NoOpt,
        Strategy::MaxClick,
        Strategy::MaxClick90,
        Strategy::Inflection,
        Strategy::Inflection90,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::NoOpt => "no-opt",
            Strategy::MaxClick => "mc",
            Strategy::MaxClick90 => "mc90",
            Strategy::Inflection => "ip",
            Strategy::Inflection90 => "ip90",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.label() == s.trim())
            .ok_or_else(|| format!("unknown strategy `{s}` (expected no-opt, mc, mc90, ip, ip90)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetConstraint {
    budget: f64,
}

impl BudgetConstraint {
    pub fn new(budget: f64) -> Result<Self, RecommendError> {
        // +inf is accepted and means unconstrained
        if budget > 0.0 && !budget.is_nan() {
            Ok(Self { budget })
        } else {
            Err(RecommendError::InvalidBudget(budget))
        }
    }

    pub fn unconstrained() -> Self {
        Self { budget: f64::INFINITY }
    }

    pub fn amount(&self) -> f64 {
        self.budget
    }
}

fn money<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64((v * 1000.0).round() / 1000.0)
    } else {
        s.serialize_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub campaign_id: String,
    pub strategy: Strategy,
    #[serde(serialize_with = "money")]
    pub ecpm_cost_star: f64,
    #[serde(serialize_with = "money")]
    pub bid_star_ecpm: f64,
    #[serde(serialize_with = "money")]
    pub bid_star_cpc: f64,
    pub predicted_clicks: f64,
    #[serde(serialize_with = "money")]
    pub predicted_spend: f64,
    #[serde(serialize_with = "money")]
    pub budget: f64,
    pub budget_binding: bool,
    /// The target cost lies beyond every observed cost on the landscape.
    pub extrapolated: bool,
}

/// Cost at which the click-per-cost derivative peaks: `p / t`, or 0 when the
/// peak lies at or left of the origin.
pub fn inflection_cost(params: &SigmoidParams) -> Result<f64, RecommendError> {
    params
        .validate()
        .map_err(|e| RecommendError::InvalidParams(e.to_string()))?;
    Ok((params.p / params.t).max(0.0))
}

/// The unique cost beyond `anchor` where the derivative has fallen to
/// `fraction` of its value at `anchor`. `anchor` must be on the decreasing
/// branch of the derivative (at or past the inflection point).
pub fn derivative_fraction_cost(params: &SigmoidParams, anchor: f64, fraction: f64) -> f64 {
    let target = fraction * params.derivative(anchor);
    let mut lo = anchor;
    let mut width = 1.0 / params.t;
    let mut hi = anchor + width;
    while params.derivative(hi) > target {
        lo = hi;
        width *= 2.0;
        hi = anchor + width;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if params.derivative(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest cost on the [`COST_STEP`] lattice within `[0, upper]` whose spend
/// fits the budget. Returns `upper` itself when the budget covers it and 0
/// when even a zero cost overspends.
pub fn binary_search_cost<F: Fn(f64) -> f64>(spend: F, upper: f64, budget: f64) -> f64 {
    if spend(upper) <= budget {
        return upper;
    }
    let top = (upper / COST_STEP + 1e-9).floor() as i64;
    let (mut min_k, mut max_k) = (0_i64, top);
    let mut best: Option<i64> = None;
    while min_k <= max_k {
        let mid = min_k + (max_k - min_k) / 2;
        let s = spend(mid as f64 * COST_STEP);
        if s > budget {
            max_k = mid - 1;
        } else {
            best = Some(mid);
            // close enough to the budget and the next lattice point overspends
            if (budget - s) / budget <= BUDGET_REL_TOL && spend((mid + 1) as f64 * COST_STEP) > budget {
                return mid as f64 * COST_STEP;
            }
            min_k = mid + 1;
        }
    }
    best.map_or(0.0, |k| k as f64 * COST_STEP)
}

/// Spend implied by the fitted curve at eCPM cost `cost`.
pub fn spend_for_cost(params: &SigmoidParams, cost: f64, ctr: f64) -> f64 {
    params.value(cost) * cost / (1000.0 * ctr)
}

/// Bid required to reach an eCPM cost on a landscape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BidMapping {
    pub bid: f64,
    pub extrapolated: bool,
}

/// Smallest bid whose interpolated eCPM cost reaches `ecpm_cost`.
pub fn cost_to_bid(landscape: &BidLandscape, ecpm_cost: f64) -> Result<BidMapping, RecommendError> {
    let pts = &landscape.points;
    let (first, last) = match (pts.first(), pts.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(LandscapeError::EmptyLandscape.into()),
    };
    if ecpm_cost <= first.ecpm_cost {
        return Ok(BidMapping {
            bid: first.bid,
            extrapolated: false,
        });
    }
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.ecpm_cost >= ecpm_cost {
            let bid = if b.ecpm_cost > a.ecpm_cost {
                a.bid + (ecpm_cost - a.ecpm_cost) * (b.bid - a.bid) / (b.ecpm_cost - a.ecpm_cost)
            } else {
                b.bid
            };
            return Ok(BidMapping {
                bid,
                extrapolated: false,
            });
        }
    }
    Ok(BidMapping {
        bid: last.bid,
        extrapolated: true,
    })
}

/// CPC bid equivalent of an eCPM bid.
pub fn cpc_from_ecpm(bid_ecpm: f64, ctr: f64) -> Result<f64, RecommendError> {
    if ctr <= 0.0 {
        return Err(RecommendError::ZeroCtr);
    }
    Ok(bid_ecpm / (1000.0 * ctr))
}

/// Cost chosen by a strategy before mapping to a bid.
struct CostChoice {
    cost: f64,
    binding: bool,
}

fn budget_capped<F: Fn(f64) -> f64>(spend: F, target: f64, budget: f64) -> CostChoice {
    if spend(target) <= budget {
        CostChoice {
            cost: target,
            binding: false,
        }
    } else {
        CostChoice {
            cost: binary_search_cost(spend, target, budget),
            binding: true,
        }
    }
}

/// Smallest lattice cost in `[0, upper]` with at least `level` clicks.
fn min_cost_for_clicks(params: &SigmoidParams, level: f64, upper: f64) -> f64 {
    let (mut lo, mut hi) = (0_i64, (upper / COST_STEP).ceil() as i64);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if params.value(mid as f64 * COST_STEP) >= level {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo as f64 * COST_STEP).min(upper)
}

/// Recommends a bid for one campaign.
///
/// For every strategy except `NoOpt` the predicted spend stays within
/// `budget x (1 + 1e-3)`. `NoOpt` reports the campaign's current operating
/// point whatever it spends.
pub fn recommend(
    fit: &FitResult,
    landscape: &BidLandscape,
    budget: &BudgetConstraint,
    strategy: Strategy,
) -> Result<Recommendation, RecommendError> {
    let params = fit
        .model
        .as_sigmoid()
        .ok_or_else(|| RecommendError::NotSigmoid(fit.kind().to_string()))?;
    if !fit.converged {
        return Err(RecommendError::NotConverged);
    }
    params
        .validate()
        .map_err(|e| RecommendError::InvalidParams(e.to_string()))?;
    let ctr = landscape.ctr;
    if ctr <= 0.0 {
        return Err(RecommendError::ZeroCtr);
    }
    let range = landscape.max_cost()?;
    let amount = budget.amount();
    let spend = |c: f64| spend_for_cost(params, c, ctr);

    if strategy == Strategy::NoOpt {
        let bid = landscape.current_bid()?;
        let cost = landscape.ecpm_cost_at(bid)?;
        return Ok(Recommendation {
            campaign_id: landscape.campaign_id.clone(),
            strategy,
            ecpm_cost_star: cost,
            bid_star_ecpm: bid,
            bid_star_cpc: cpc_from_ecpm(bid, ctr)?,
            predicted_clicks: params.value(cost),
            predicted_spend: spend(cost),
            budget: amount,
            budget_binding: false,
            extrapolated: false,
        });
    }

    let x_star = inflection_cost(params)?;
    let choice = match strategy {
        Strategy::Inflection => {
            let target = if params.p > 0.0 {
                x_star
            } else {
                derivative_fraction_cost(params, 0.0, NINETY)
            };
            budget_capped(spend, target.min(range), amount)
        }
        Strategy::Inflection90 => {
            let target = derivative_fraction_cost(params, x_star, NINETY);
            budget_capped(spend, target.min(range), amount)
        }
        Strategy::MaxClick => budget_capped(spend, range, amount),
        Strategy::MaxClick90 => {
            let max = budget_capped(spend, range, amount);
            let level = NINETY * params.value(max.cost);
            CostChoice {
                cost: min_cost_for_clicks(params, level, max.cost),
                binding: max.binding,
            }
        }
        Strategy::NoOpt => unreachable!("handled above"),
    };

    let mapping = cost_to_bid(landscape, choice.cost)?;
    Ok(Recommendation {
        campaign_id: landscape.campaign_id.clone(),
        strategy,
        ecpm_cost_star: choice.cost,
        bid_star_ecpm: mapping.bid,
        bid_star_cpc: cpc_from_ecpm(mapping.bid, ctr)?,
        predicted_clicks: params.value(choice.cost),
        predicted_spend: spend(choice.cost),
        budget: amount,
        budget_binding: choice.binding,
        extrapolated: mapping.extrapolated,
    })
}
