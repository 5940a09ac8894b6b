//! Finite-horizon restless bandits with several pulls per period: the
//! Lagrangian bound, occupation-measure LP, state/period index table and the
//! index policy, plus Monte Carlo evaluation against UCB and OCBA-m baselines.

pub mod dp;
pub mod error;
pub mod index;
pub mod lp;
pub mod model;
pub mod policy;
pub mod relax;
pub mod sim;

pub use error::{Error, Result};
