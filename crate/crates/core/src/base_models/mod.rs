//! Univariate count forecasters and the joint base forecasts built from them.

mod binar1;
mod ingarch;
mod joint;
mod logistic;

pub use binar1::{
    fit_binar1, forecast_binar1, simulate_binar1, transition_matrix, BinAr1Fit, BinAr1Params,
};
pub use ingarch::{
    conditional_means, fit_ingarch, forecast_ingarch, simulate_ingarch, IngarchFit, IngarchParams,
    BETA0_LOWER_BOUND,
};
pub use joint::{empirical_joint, independence_product, independence_product_raw};
pub use logistic::{
    fit_forecast_logistic, fit_logistic, forecast_logistic, LogisticFit, LogisticLagParams,
};

use serde::{Deserialize, Serialize};

/// Number of Monte-Carlo paths for multi-step forecasts.
pub const DEFAULT_PATHS: usize = 5000;

/// Predictive pmf of one variable at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalForecast {
    pub var: usize,
    pub horizon: usize,
    pub probs: Vec<f64>,
}

impl MarginalForecast {
    pub fn new(var: usize, horizon: usize, probs: Vec<f64>) -> crate::Result<Self> {
        crate::hierarchy::check_pmf(&probs, 1e-9)?;
        Ok(Self { var, horizon, probs })
    }
}
