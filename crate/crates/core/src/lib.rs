//! Super-replication pricing and hedging for European claims in markets
//! where some assets trade frictionlessly and others carry proportional
//! transaction costs.
//!
//! The engine prices a claim as the minimal buy-and-hold capital: a constant
//! holding in the costly assets plus a dynamic hedge of the residual claim
//! on the free assets. Modules:
//!
//! - [`cone`]: solvency-cone algebra (cost matrices, polar section, order).
//! - [`payoff`]: claim representation and the G / Ghat / conjugate transforms.
//! - [`market`]: martingale diffusion simulation and lognormal closed forms.
//! - [`pricer`]: the outer convex minimization over the costly holding.
//! - [`hedger`]: hedge schedule construction and pathwise dominance checks.
//! - [`hjb`]: bounded-control stochastic-control lower bound.
//! - [`instance`]: instance-file schema shared with the CLI.

pub mod cone;
pub mod hedger;
pub mod hjb;
pub mod instance;
pub mod linalg;
pub mod market;
pub mod payoff;
pub mod pricer;

#[cfg(test)]
pub mod testutil;
