//! Bid recommendation from fitted click-vs-cost response curves.
//!
//! The pipeline runs per campaign: auction logs become a monotone
//! [`landscape::BidLandscape`], the landscape yields click-vs-cost pairs, a
//! constrained logistic curve is fitted to them ([`curvefit`]), and
//! [`recommend`] picks the cost where extra spend buys the most clicks,
//! subject to a budget, then maps it back to a bid.

pub mod cli;
pub mod compare;
pub mod config;
pub mod curvefit;
mod isotonic;
pub mod landscape;
pub mod metrics;
pub mod recommend;
pub mod simgen;

pub use curvefit::{fit, FitConfig, FitResult, Model, ModelKind, SigmoidParams};
pub use landscape::{build_landscape, AuctionObservation, BidLandscape, ClickCostCurve};
pub use recommend::{recommend, BudgetConstraint, Recommendation, Strategy};
