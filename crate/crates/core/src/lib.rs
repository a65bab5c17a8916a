//! Deep surrogate assisted MAP-Elites (DSA-ME) for automated deckbuilding.
//!
//! The crate is organised bottom-up:
//!
//! - [`deck`]: card sets, deck genomes, random generation and the
//!   truncated-geometric perturbation operator.
//! - [`archive`]: the tessellated MAP-Elites archive and its quality-diversity
//!   metrics (coverage, QD-score, CCDF, heatmaps).
//! - [`surrogate`]: MLP and linear surrogate models trained with Adam on MSE,
//!   plus a finite-difference gradient checker.
//! - [`qd`]: a generic MAP-Elites loop over any [`qd::Evaluator`].
//! - [`sim`]: the MiniCard simulator, a seeded two-player card battle used as
//!   the ground-truth evaluator.
//! - [`dsa_me`]: the surrogate-assisted outer loop and its ablation variants.
//! - [`experiment`]: multi-trial suites, summary tables and CCDF output.
//! - [`settings`]: the flat `key = value` configuration format.
//!
//! The `examples/` directory holds one runnable program per capability.

pub mod archive;
pub mod deck;
pub mod dsa_me;
mod error;
pub mod experiment;
pub mod qd;
pub mod rng;
pub mod settings;
pub mod sim;
pub mod surrogate;

pub use error::{Error, Result};
