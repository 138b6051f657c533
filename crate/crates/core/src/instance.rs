//! JSON instance-file schema shared by the CLI and the test fixtures.
//! Every physical quantity carries its unit in the field name; unknown
//! keys are rejected so typos fail loudly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::CostMatrix;
use crate::market::{MarketModel, Scheme, Vol};
use crate::payoff::{PayoffKind, PayoffSpec, TaCertificate, ZcGrowth};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("instance parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid cost matrix: {0}")]
    Costs(#[from] crate::cone::ConeError),
    #[error("invalid model: {0}")]
    Model(#[from] crate::market::MarketError),
    #[error("inconsistent instance: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub model: ModelSection,
    pub costs: CostsSection,
    pub payoff: PayoffSection,
    pub numerics: NumericsSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_free_assets: usize,
    pub n_costly_assets: usize,
    pub horizon_years: f64,
    pub initial_prices_ccy: Vec<f64>,
    /// Constant volatility matrix, rows per asset, entries per year^-1/2.
    pub volatility_rows_per_sqrt_year: Vec<Vec<f64>>,
    /// Asserts the block structure: free-asset volatility rows do not
    /// read costly prices.
    pub free_rows_depend_only_on_free_prices: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostsSection {
    /// Proportional transaction-cost rates lambda[i][j] for transfers
    /// from asset i to asset j (asset 0 = cash), dimensionless.
    pub proportional_rates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSection {
    /// Catalog payoff id and parameters (strikes/barriers in currency).
    pub catalog: PayoffKind,
    pub growth_certificate: GrowthSection,
    /// Per-costly-asset growth of the envelope: "bounded",
    /// {"linear": {"slope": s}} or "superlinear".
    pub costly_price_growth: Vec<ZcGrowth>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthSection {
    pub cash_floor_ccy: f64,
    pub free_price_slopes: Vec<f64>,
    pub costly_price_slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub sf_grid_nodes: usize,
    pub sc_grid_nodes: usize,
    /// Control bounds for the lower-bound solver, ascending.
    pub control_bounds_kappa: Vec<f64>,
    /// Relative capital reduction for the dominance tightness probe.
    pub probe_epsilon: f64,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_model(&self) -> Result<MarketModel, InstanceError> {
        let m = MarketModel {
            df: self.model.n_free_assets,
            dc: self.model.n_costly_assets,
            horizon: self.model.horizon_years,
            s0: self.model.initial_prices_ccy.clone(),
            vol: Vol::Constant(self.model.volatility_rows_per_sqrt_year.clone()),
            block_certificate: self.model.free_rows_depend_only_on_free_prices,
        };
        m.validate()?;
        // The block certificate must actually hold for a constant matrix:
        // free rows may not load on costly Brownian columns unless the
        // caller vouches for it; for constant vol we can check directly.
        let df = m.df;
        for (i, row) in self.model.volatility_rows_per_sqrt_year[..df].iter().enumerate() {
            if row[df..].iter().any(|&v| v != 0.0) && !self.model.free_rows_depend_only_on_free_prices
            {
                return Err(InstanceError::Inconsistent(format!(
                    "free volatility row {i} loads on costly columns without the block certificate"
                )));
            }
        }
        Ok(m)
    }

    pub fn to_costs(&self) -> Result<CostMatrix, InstanceError> {
        let dc = self.model.n_costly_assets;
        Ok(CostMatrix::new(dc, &self.costs.proportional_rates)?)
    }

    pub fn to_payoff(&self) -> Result<PayoffSpec, InstanceError> {
        let (df, dc) = (self.model.n_free_assets, self.model.n_costly_assets);
        if self.payoff.growth_certificate.free_price_slopes.len() != df {
            return Err(InstanceError::Inconsistent(
                "growth certificate free slopes must match the free asset count".into(),
            ));
        }
        if self.payoff.costly_price_growth.len() != dc {
            return Err(InstanceError::Inconsistent(
                "costly price growth list must match the costly asset count".into(),
            ));
        }
        Ok(PayoffSpec {
            df,
            dc,
            kind: self.payoff.catalog.clone(),
            growth: TaCertificate {
                c: self.payoff.growth_certificate.cash_floor_ccy,
                delta_f: self.payoff.growth_certificate.free_price_slopes.clone(),
                delta: self.payoff.growth_certificate.costly_price_slope,
            },
            zc_growth: self.payoff.costly_price_growth.clone(),
            offset: None,
        })
    }

    pub fn price_options(&self) -> crate::pricer::PriceOptions {
        crate::pricer::PriceOptions {
            n_paths: self.numerics.n_paths,
            n_steps: 1,
            seed: self.numerics.seed,
            scheme: Scheme::ExactLognormal,
            sf_nodes: self.numerics.sf_grid_nodes,
            sc_nodes: self.numerics.sc_grid_nodes,
            refine: Default::default(),
        }
    }
}
