//! Prompt-conditioned cellular traffic forecasting.
//!
//! The crate covers the whole offline pipeline:
//!
//! * [`data`] turns CDR-style grid activity into per-cell load series,
//!   co-located cell pairs and windowed prediction samples.
//! * [`prompting`] renders samples as masked text prompts (optionally with an
//!   operator preference clause) and tokenizes them with a closed vocabulary.
//! * [`model`] is a small BERT-shaped encoder with a pooled regression head,
//!   forward and exact reverse-mode gradients in `f64`.
//! * [`losses`] holds MSE and the asymmetric balancing loss.
//! * [`training`] runs AdamW with cosine annealing, plain or
//!   preference-conditioned.
//! * [`baselines`] provides the previous-value and feed-forward references.
//! * [`energy`] applies the pairwise cell on-off scheme and scores power and
//!   throughput loss.
//! * [`checkpoint`] persists weights in a documented binary container.
//! * [`experiment`] wires the pieces together for benchmarks and the CLI.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod energy;
pub mod experiment;
pub mod losses;
pub mod model;
pub mod params;
pub mod prompting;
pub mod training;

pub use losses::LossSpec;
pub use model::{ModelConfig, ModelWeights};
pub use prompting::{OperatorPreference, Orientation, TokenSequence, Vocabulary};
