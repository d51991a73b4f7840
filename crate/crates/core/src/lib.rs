//! Prompt-free / prompt-related decomposition of Bradley-Terry reward gaps and
//! reward training that prioritizes pairs with a small prompt-free gap.
//!
//! Modules, bottom up:
//!
//! * [`types`], [`reward`], [`io`]: domain records, bounded reward models,
//!   line-JSON datasets.
//! * [`conditional`]: candidate prompts and weights for `P(x | y₁, y₂)`.
//! * [`decompose`]: Φ and the bisection for the prompt-free gap.
//! * [`mi_oracle`]: exact entropies and mutual information of the preference
//!   label variables on small enumerable datasets.
//! * [`trainer`]: vanilla and prioritized Bradley-Terry training.
//! * [`synth`]: synthetic datasets with a known preference oracle.
//! * [`eval`]: quadrant snapshots, prompt-replacement gaps, accuracies.

pub mod conditional;
pub mod decompose;
pub mod error;
pub mod eval;
pub mod io;
pub mod mi_oracle;
pub mod reward;
pub mod synth;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
