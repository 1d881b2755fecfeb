//! Model and strategy comparison across campaigns.
//!
//! Each model is fitted on a campaign's curve with the current-bid point held
//! out and scored on that point. The sigmoid fitted on the full curve drives
//! the DiffR measurement and the per-strategy lift table.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::curvefit::{fit, FitConfig, FitError, ModelKind};
use crate::landscape::{BidLandscape, ClickCostCurve};
use crate::metrics::{diff_r, lift_ratios, naive_inflection, EvalReport, LiftRatios, MetricsError};
use crate::recommend::{inflection_cost, recommend, BudgetConstraint, RecommendError, Strategy};

/// Fewest curve points for a leave-one-out comparison.
pub const MIN_COMPARE_POINTS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("too few points: {found}, need at least {MIN_COMPARE_POINTS}")]
    TooFewPoints { found: usize },
    #[error("{model}: {source}")]
    Fit { model: ModelKind, source: FitError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Recommend(#[from] RecommendError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub ecpm_cost: f64,
    pub lift: LiftRatios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignComparison {
    pub campaign_id: String,
    /// One single-point report per model.
    pub reports: Vec<EvalReport>,
    /// `None` when the naive operating point has a zero empirical slope.
    pub diff_r: Option<f64>,
    pub strategies: Vec<StrategyOutcome>,
}

/// Index of the curve point closest to the landscape's current bid.
pub fn current_point_index(landscape: &BidLandscape, curve: &ClickCostCurve) -> Result<usize, CompareError> {
    let bid = landscape.current_bid().map_err(RecommendError::from)?;
    let cost = landscape.ecpm_cost_at(bid).map_err(RecommendError::from)?;
    let mut best = 0;
    for (i, p) in curve.pairs.iter().enumerate() {
        if (p.0 - cost).abs() < (curve.pairs[best].0 - cost).abs() {
            best = i;
        }
    }
    Ok(best)
}

/// Fits every model without point `held_out` and scores it there.
pub fn leave_one_out(
    campaign_id: &str,
    curve: &ClickCostCurve,
    held_out: usize,
    kinds: &[ModelKind],
    config: &FitConfig,
) -> Result<Vec<EvalReport>, CompareError> {
    if curve.len() < MIN_COMPARE_POINTS {
        return Err(CompareError::TooFewPoints { found: curve.len() });
    }
    let (x, y) = curve.pairs[held_out];
    let train = curve.without(held_out);
    kinds
        .iter()
        .map(|&kind| {
            let wrap = |source| CompareError::Fit { model: kind, source };
            let fitted = fit(kind, &train, config).map_err(wrap)?;
            let predicted = fitted.model.eval(x).map_err(wrap)?;
            Ok(EvalReport::new(campaign_id, kind, &[y], &[predicted])?)
        })
        .collect()
}

/// Recommendations for every strategy without a budget, with lifts measured
/// against the no-opt operating point.
pub fn strategy_outcomes(
    fit_result: &crate::curvefit::FitResult,
    landscape: &BidLandscape,
) -> Result<Vec<StrategyOutcome>, CompareError> {
    let params = fit_result
        .model
        .as_sigmoid()
        .ok_or_else(|| RecommendError::NotSigmoid(fit_result.kind().to_string()))?;
    let budget = BudgetConstraint::unconstrained();
    let current = recommend(fit_result, landscape, &budget, Strategy::NoOpt)?;
    Strategy::ALL
        .iter()
        .map(|&strategy| {
            let rec = recommend(fit_result, landscape, &budget, strategy)?;
            Ok(StrategyOutcome {
                strategy,
                ecpm_cost: rec.ecpm_cost_star,
                lift: lift_ratios(&current, &rec, params)?,
            })
        })
        .collect()
}

pub fn compare_campaign(
    campaign_id: &str,
    curve: &ClickCostCurve,
    landscape: &BidLandscape,
    held_out: usize,
    kinds: &[ModelKind],
    config: &FitConfig,
) -> Result<CampaignComparison, CompareError> {
    let reports = leave_one_out(campaign_id, curve, held_out, kinds, config)?;
    let full = fit(ModelKind::Sigmoid, curve, config).map_err(|source| CompareError::Fit {
        model: ModelKind::Sigmoid,
        source,
    })?;
    let params = full.model.as_sigmoid().expect("sigmoid fit");
    let cf_cost = inflection_cost(params)?;
    let naive = naive_inflection(curve)?;
    let diff_r = match diff_r(curve, naive, cf_cost) {
        Ok(v) => Some(v),
        Err(MetricsError::ZeroDerivative(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let strategies = strategy_outcomes(&full, landscape)?;
    Ok(CampaignComparison {
        campaign_id: campaign_id.to_string(),
        reports,
        diff_r,
        strategies,
    })
}

/// Mean of a strategy's measures across campaigns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub cyr: f64,
    pub bir: f64,
    pub cir: f64,
    pub n: usize,
}

impl StrategySummary {
    pub const CSV_HEADER: &'static str = "strategy,cyr,bir,cir,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{}",
            self.strategy, self.cyr, self.bir, self.cir, self.n
        )
    }
}

/// Per-model means of MAPE and RMSE across campaigns, labelled `ALL`.
pub fn summarize_models(comparisons: &[CampaignComparison]) -> Vec<EvalReport> {
    let mut acc: BTreeMap<ModelKind, (f64, f64, usize)> = BTreeMap::new();
    for r in comparisons.iter().flat_map(|c| &c.reports) {
        let e = acc.entry(r.model).or_default();
        e.0 += r.mape;
        e.1 += r.rmse;
        e.2 += 1;
    }
    ModelKind::ALL
        .iter()
        .filter_map(|k| acc.get(k).map(|&(m, r, n)| (k, m, r, n)))
        .map(|(&model, m, r, n)| EvalReport {
            campaign_id: "ALL".into(),
            model,
            mape: m / n as f64,
            rmse: r / n as f64,
            n,
        })
        .collect()
}

pub fn summarize_strategies(comparisons: &[CampaignComparison]) -> Vec<StrategySummary> {
    let mut acc: BTreeMap<Strategy, (f64, f64, f64, usize)> = BTreeMap::new();
    for o in comparisons.iter().flat_map(|c| &c.strategies) {
        let e = acc.entry(o.strategy).or_default();
        e.0 += o.lift.cyr_proposed;
        e.1 += o.lift.bir;
        e.2 += o.lift.cir;
        e.3 += 1;
    }
    acc.into_iter()
        .map(|(strategy, (cyr, bir, cir, n))| StrategySummary {
            strategy,
            cyr: cyr / n as f64,
            bir: bir / n as f64,
            cir: cir / n as f64,
            n,
        })
        .collect()
}

/// Mean DiffR over campaigns where it is defined.
pub fn mean_diff_r(comparisons: &[CampaignComparison]) -> Option<f64> {
    let values: Vec<f64> = comparisons.iter().filter_map(|c| c.diff_r).collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}
