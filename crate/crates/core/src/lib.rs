//! Rule extraction from discrete Bayesian networks.
//!
//! A genetic algorithm searches for sets of high-probability classification
//! rules `Φ → Ψ` over a target variable, scoring each rule with exact
//! inference. An exhaustive enumerator provides the baseline, and extracted
//! rule sets can be turned into labeled "graphical chains" over the network.
//!
//! ```
//! use chainminer::{bif, ga};
//!
//! let net = bif::load_bundled("asia")?;
//! let target = net.require_variable("dysp")?;
//! let config = ga::GaConfig { seed: 7, gen_max: 20, ..Default::default() };
//! let outcome = ga::run(&net, target, &config)?;
//! for rule in outcome.best.unique_rules() {
//!     println!("{} ({:?})", rule.display(&net), rule.probability(&net).ok());
//! }
//! # Ok::<(), chainminer::Error>(())
//! ```

pub mod bif;
pub mod brute;
pub mod chain;
pub mod cli;
pub mod error;
pub mod export;
pub mod ga;
pub mod inference;
pub mod network;
pub mod rule;

pub use error::{Error, Result};
pub use network::{Assignment, BayesianNetwork, Cpt, Variable};
