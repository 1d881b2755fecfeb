//! Evaluation measures: prediction error, the naive per-point gradient
//! baseline and its derivative gain (DiffR), bid elasticities, and lift
//! ratios between two recommendations.

use serde::Serialize;
use thiserror::Error;

use crate::curvefit::{ModelKind, SigmoidParams};
use crate::landscape::{BidLandscape, ClickCostCurve, LandscapeError};
use crate::recommend::{cpc_from_ecpm, Recommendation};

/// Bid step used for the elasticity stencils.
pub const DEFAULT_DELTA: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("no values")]
    Empty,
    #[error("actual value at index {0} is zero")]
    ZeroActual(usize),
    #[error("too few points: {0}")]
    TooFewPoints(usize),
    #[error("zero cost span between adjacent points")]
    ZeroCostSpan,
    #[error("zero derivative at cost {0}")]
    ZeroDerivative(f64),
    #[error("zero denominator: {0}")]
    ZeroDenominator(&'static str),
    #[error("clicks do not change around the bid")]
    FlatResponse,
    #[error("zero current value: {0}")]
    ZeroCurrent(&'static str),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<(), MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean absolute percentage error, as a ratio.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(actual, predicted)?;
    if let Some(i) = actual.iter().position(|&a| a == 0.0) {
        return Err(MetricsError::ZeroActual(i));
    }
    let n = actual.len() as f64;
    Ok(actual
        .iter()
        .zip(predicted)
        .map(|(y, yh)| (y - yh).abs() / y.abs())
        .sum::<f64>()
        / n)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(actual, predicted)?;
    let n = actual.len() as f64;
    Ok((actual
        .iter()
        .zip(predicted)
        .map(|(y, yh)| (yh - y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub campaign_id: String,
    pub model: ModelKind,
    pub mape: f64,
    pub rmse: f64,
    pub n: usize,
}

impl EvalReport {
    pub fn new(
        campaign_id: impl Into<String>,
        model: ModelKind,
        actual: &[f64],
        predicted: &[f64],
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            campaign_id: campaign_id.into(),
            model,
            mape: mape(actual, predicted)?,
            rmse: rmse(actual, predicted)?,
            n: actual.len(),
        })
    }

    pub const CSV_HEADER: &'static str = "campaign_id,model,mape,rmse,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{}",
            self.campaign_id, self.model, self.mape, self.rmse, self.n
        )
    }
}

fn slopes(curve: &ClickCostCurve) -> Result<Vec<f64>, MetricsError> {
    if curve.len() < 2 {
        return Err(MetricsError::TooFewPoints(curve.len()));
    }
    curve
        .pairs
        .windows(2)
        .map(|w| {
            let span = w[1].0 - w[0].0;
            if span <= 0.0 {
                Err(MetricsError::ZeroCostSpan)
            } else {
                Ok((w[1].1 - w[0].1) / span)
            }
        })
        .collect()
}

/// Naive operating point: the left cost of the adjacent pair with the
/// steepest forward difference. Ties go to the lower cost.
pub fn naive_inflection(curve: &ClickCostCurve) -> Result<f64, MetricsError> {
    let slopes = slopes(curve)?;
    let mut best = 0;
    for (i, &s) in slopes.iter().enumerate() {
        if s > slopes[best] {
            best = i;
        }
    }
    Ok(curve.pairs[best].0)
}

/// Forward-difference slope of the pair bracketing `cost`. Costs beyond the
/// last point use the last pair; costs before the first use the first.
pub fn empirical_derivative(curve: &ClickCostCurve, cost: f64) -> Result<f64, MetricsError> {
    let slopes = slopes(curve)?;
    let idx = curve
        .pairs
        .partition_point(|p| p.0 <= cost)
        .saturating_sub(1)
        .min(slopes.len() - 1);
    Ok(slopes[idx])
}

/// Relative derivative gain of the naive operating point over the fitted one,
/// both read from the raw curve.
pub fn diff_r(curve: &ClickCostCurve, naive_cost: f64, cf_cost: f64) -> Result<f64, MetricsError> {
    let d_naive = empirical_derivative(curve, naive_cost)?;
    if d_naive == 0.0 {
        return Err(MetricsError::ZeroDerivative(naive_cost));
    }
    let d_cf = empirical_derivative(curve, cf_cost)?;
    Ok(diff_ratio(d_naive, d_cf))
}

/// `(d_naive - d_cf) / d_naive`.
pub fn diff_ratio(d_naive: f64, d_cf: f64) -> f64 {
    (d_naive - d_cf) / d_naive
}

/// Click elasticities of a landscape at one bid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Quantities {
    /// Click elasticity with respect to eCPM cost.
    pub alpha: f64,
    /// Click elasticity with respect to spend.
    pub beta: f64,
    /// Clicks gained per eCPM-cost dollar.
    pub gamma: f64,
    /// `alpha * M * win_rate(bid) / cpc_bid` with `M = impressions / 1000`.
    pub lower_bound_gamma: f64,
}

/// Evaluates the elasticities at `bid` with a symmetric stencil of half-width
/// `delta` on the landscape's click, cost and spend maps.
///
/// The spend differential uses the product rule
/// `dSpend = L (dCost * Click + dClick * Cost)` with `L = 1 / (1000 ctr)`, so
/// `alpha = beta / (1 - beta)` holds to rounding.
pub fn theorem1(landscape: &BidLandscape, bid: f64, delta: f64) -> Result<Theorem1Quantities, MetricsError> {
    if !(delta > 0.0 && bid - delta > 0.0) {
        return Err(MetricsError::ZeroDenominator("bid - delta must be positive"));
    }
    let ctr = landscape.ctr;
    if ctr <= 0.0 {
        return Err(MetricsError::ZeroDenominator("ctr"));
    }
    let l = 1.0 / (1000.0 * ctr);
    let clicks = landscape.clicks_at(bid)?;
    let cost = landscape.ecpm_cost_at(bid)?;
    let spend = landscape.spend_at(bid)?;
    if clicks == 0.0 {
        return Err(MetricsError::ZeroDenominator("click"));
    }
    if cost == 0.0 {
        return Err(MetricsError::ZeroDenominator("ecpm_cost"));
    }
    if spend == 0.0 {
        return Err(MetricsError::ZeroDenominator("spend"));
    }
    let d_click = landscape.clicks_at(bid + delta)? - landscape.clicks_at(bid - delta)?;
    let d_cost = landscape.ecpm_cost_at(bid + delta)? - landscape.ecpm_cost_at(bid - delta)?;
    if d_cost == 0.0 {
        return Err(MetricsError::ZeroDenominator("d ecpm_cost"));
    }
    if d_click == 0.0 {
        return Err(MetricsError::FlatResponse);
    }
    let d_spend = l * (d_cost * clicks + d_click * cost);

    let alpha = (d_click / clicks) / (d_cost / cost);
    let beta = (d_click / clicks) / (d_spend / spend);
    let gamma = d_click / d_cost;
    let m = landscape.impressions / 1000.0;
    let cpc_bid = cpc_from_ecpm(bid, ctr).map_err(|_| MetricsError::ZeroDenominator("ctr"))?;
    let lower_bound_gamma = alpha * m * landscape.win_rate_at(bid)? / cpc_bid;
    Ok(Theorem1Quantities {
        alpha,
        beta,
        gamma,
        lower_bound_gamma,
    })
}

/// Percentage changes from a current to a proposed recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiftRatios {
    /// Bid increase ratio.
    pub bir: f64,
    /// Click increase ratio.
    pub cir: f64,
    /// Click yield (`d clicks / d cost`) at each operating point.
    pub cyr_current: f64,
    pub cyr_proposed: f64,
}

pub fn lift_ratios(
    current: &Recommendation,
    proposed: &Recommendation,
    params: &SigmoidParams,
) -> Result<LiftRatios, MetricsError> {
    if current.bid_star_ecpm <= 0.0 {
        return Err(MetricsError::ZeroCurrent("bid"));
    }
    if current.predicted_clicks <= 0.0 {
        return Err(MetricsError::ZeroCurrent("clicks"));
    }
    Ok(LiftRatios {
        bir: relative_increase(current.bid_star_ecpm, proposed.bid_star_ecpm),
        cir: relative_increase(current.predicted_clicks, proposed.predicted_clicks),
        cyr_current: params.derivative(current.ecpm_cost_star),
        cyr_proposed: params.derivative(proposed.ecpm_cost_star),
    })
}

pub fn relative_increase(current: f64, proposed: f64) -> f64 {
    (proposed - current) / current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::LandscapePoint;
    use crate::recommend::Strategy;
    use proptest::prelude::*;

    #[test]
    fn mape_rmse_examples() {
        assert!((mape(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 0.10).abs() < 1e-12);
        assert!((rmse(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 250f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 15.811).abs() < 1e-3);
        assert_eq!(mape(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mape(&[50.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[50.0], &[0.0]).unwrap(), 50.0);
    }

    #[test]
    fn mape_errors() {
        assert_eq!(
            mape(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch {
                actual: 1,
                predicted: 2
            })
        );
        assert_eq!(mape(&[1.0, 0.0], &[1.0, 2.0]), Err(MetricsError::ZeroActual(1)));
        assert_eq!(rmse(&[], &[]), Err(MetricsError::Empty));
        // rmse tolerates zero actuals
        assert_eq!(rmse(&[0.0], &[0.0]).unwrap(), 0.0);
    }

    fn curve(pairs: &[(f64, f64)]) -> ClickCostCurve {
        ClickCostCurve::new(pairs.to_vec(), 0.001, 1e6)
    }

    #[test]
    fn naive_inflection_examples() {
        assert_eq!(
            naive_inflection(&curve(&[(1.0, 100.0), (2.0, 300.0), (3.0, 350.0)])).unwrap(),
            1.0
        );
        assert_eq!(
            naive_inflection(&curve(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)])).unwrap(),
            1.0
        );
        assert_eq!(naive_inflection(&curve(&[(0.5, 1.0), (2.0, 2.0)])).unwrap(), 0.5);
        assert_eq!(
            naive_inflection(&curve(&[(1.0, 1.0)])),
            Err(MetricsError::TooFewPoints(1))
        );
        assert_eq!(
            naive_inflection(&curve(&[(1.0, 1.0), (1.0, 2.0)])),
            Err(MetricsError::ZeroCostSpan)
        );
    }

    #[test]
    fn diff_r_examples() {
        assert!((diff_ratio(1.0, 0.8) - 0.2).abs() < 1e-15);
        let c = curve(&[(1.0, 100.0), (2.0, 300.0), (3.0, 350.0), (4.0, 360.0)]);
        assert_eq!(diff_r(&c, 2.5, 2.5).unwrap(), 0.0);
        // naive picks slope 200, fitted operating point sits on slope 50
        assert!((diff_r(&c, 1.0, 2.4).unwrap() - 0.75).abs() < 1e-12);
        let flat = curve(&[(1.0, 1.0), (2.0, 1.0), (3.0, 2.0)]);
        assert_eq!(diff_r(&flat, 1.0, 2.0), Err(MetricsError::ZeroDerivative(1.0)));
    }

    #[test]
    fn diff_r_is_zero_on_clean_sigmoid_samples() {
        let p = SigmoidParams::new(1000.0, 2.0, 4.0).unwrap();
        // lattice aligned so that x* = 2.0 is a sample point
        let pairs: Vec<_> = (1..=40)
            .map(|i| (i as f64 * 0.125, p.value(i as f64 * 0.125)))
            .collect();
        let c = curve(&pairs);
        let naive = naive_inflection(&c).unwrap();
        let d = diff_r(&c, naive, 2.0).unwrap();
        // both points lie in the steepest or an adjacent interval
        let slopes = slopes(&c).unwrap();
        let max = slopes.iter().cloned().fold(f64::MIN, f64::max);
        let step_change = slopes.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        assert!(d >= 0.0 && d * max <= step_change + 1e-9, "DiffR {d}");
    }

    fn strictly_monotone_landscape(ctr: f64) -> BidLandscape {
        let points = (1..=10)
            .map(|i| {
                let bid = i as f64;
                LandscapePoint {
                    bid,
                    win_rate: 1.0 - (-0.3 * bid).exp(),
                    ecpm_cost: 0.6 * bid - 0.02 * bid * bid,
                }
            })
            .collect();
        BidLandscape {
            campaign_id: "t".into(),
            ctr,
            impressions: 1e6,
            points,
            volumes: vec![],
        }
    }

    #[test]
    fn theorem1_identity_and_bounds() {
        let l = strictly_monotone_landscape(0.001);
        for bid in [1.5, 2.0, 3.3, 7.0, 9.9] {
            let q = theorem1(&l, bid, DEFAULT_DELTA).unwrap();
            assert!((q.alpha - q.beta / (1.0 - q.beta)).abs() < 1e-9);
            assert!(q.beta > 0.0 && q.beta < 1.0);
            assert!(q.gamma >= q.lower_bound_gamma - 1e-9);
        }
    }

    #[test]
    fn theorem1_special_point_and_errors() {
        // beta = 0.5 exactly when alpha = 1
        let beta = 0.5_f64;
        assert_eq!(beta / (1.0 - beta), 1.0);
        let mut l = strictly_monotone_landscape(0.01);
        assert!(theorem1(&l, 0.0005, 0.001).is_err());
        for p in &mut l.points {
            p.ecpm_cost = 1.0;
        }
        assert_eq!(
            theorem1(&l, 5.0, 0.001),
            Err(MetricsError::ZeroDenominator("d ecpm_cost"))
        );
        for p in &mut l.points {
            p.win_rate = 0.0;
        }
        assert_eq!(theorem1(&l, 5.0, 0.001), Err(MetricsError::ZeroDenominator("click")));
    }

    fn rec(bid: f64, clicks: f64, cost: f64) -> Recommendation {
        Recommendation {
            campaign_id: "c".into(),
            strategy: Strategy::NoOpt,
            ecpm_cost_star: cost,
            bid_star_ecpm: bid,
            bid_star_cpc: bid,
            predicted_clicks: clicks,
            predicted_spend: 0.0,
            budget: 1.0,
            budget_binding: false,
            extrapolated: false,
        }
    }

    #[test]
    fn lift_ratio_examples() {
        let p = SigmoidParams::new(1000.0, 2.0, 4.0).unwrap();
        let r = lift_ratios(&rec(2.0, 100.0, 1.0), &rec(2.6, 100.0, 2.0), &p).unwrap();
        assert!((r.bir - 0.30).abs() < 1e-12);
        assert!((r.cyr_proposed - 500.0).abs() < 1e-9);
        let same = lift_ratios(&rec(2.0, 100.0, 1.0), &rec(2.0, 100.0, 1.0), &p).unwrap();
        assert_eq!((same.bir, same.cir), (0.0, 0.0));
        let r = lift_ratios(&rec(3.6, 450_000.0, 1.0), &rec(6.0, 600_000.0, 2.0), &p).unwrap();
        assert!((r.cir - 1.0 / 3.0).abs() < 1e-12);
        assert!(lift_ratios(&rec(0.0, 1.0, 1.0), &rec(1.0, 1.0, 1.0), &p).is_err());
        assert!(lift_ratios(&rec(1.0, 0.0, 1.0), &rec(1.0, 1.0, 1.0), &p).is_err());
    }

    proptest! {
        #[test]
        fn errors_vanish_only_on_exact_predictions(
            v in prop::collection::vec((1.0f64..1e4, -50.0f64..50.0), 1..20)
        ) {
            let actual: Vec<f64> = v.iter().map(|x| x.0).collect();
            let predicted: Vec<f64> = v.iter().map(|x| x.0 + x.1).collect();
            let exact = v.iter().all(|x| x.1 == 0.0);
            prop_assert_eq!(mape(&actual, &predicted).unwrap() == 0.0, exact);
            prop_assert_eq!(rmse(&actual, &predicted).unwrap() == 0.0, exact);
            prop_assert_eq!(mape(&actual, &actual).unwrap(), 0.0);
        }

        #[test]
        fn diff_r_against_itself_is_zero(
            ys in prop::collection::vec(0.0f64..100.0, 3..15), q in 0.0f64..1.0
        ) {
            let mut acc = 0.0;
            let pairs: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, y)| { acc += y + 1.0; (i as f64 + 1.0, acc) }).collect();
            let c = curve(&pairs);
            let cost = 1.0 + q * (pairs.len() as f64 - 1.0);
            prop_assert_eq!(diff_r(&c, cost, cost).unwrap(), 0.0);
        }
    }
}
