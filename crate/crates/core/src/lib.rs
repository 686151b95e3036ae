//! Branching-within-branching processes: host cells divide as a Galton-Watson tree and the
//! parasites of each cell multiply and are shared out among its daughters.
//!
//! * [`model`]: model specification, standing assumptions, truncation, family constructors.
//! * [`simulate`]: Monte-Carlo simulation of the cell population and exact expected counts.
//! * [`spine`]: the parasite count along a random cell line, a branching process in a random
//!   environment, with its exact law and the size-scaling identity to the tree.
//! * [`criteria`]: almost-sure extinction classification.
//! * [`estimate`]: extinction probabilities, decay rates, dichotomy and growth scans.
//!
//! All numerical code is generic over [`Scalar`] (`f64` or `f32`); the `*64` aliases below
//! name the double-precision instantiations.

pub mod convolve;
pub mod criteria;
pub mod error;
pub mod estimate;
pub mod format;
pub mod gallery;
pub mod golden;
pub mod law;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod simulate;
pub mod spine;

pub use criteria::{classify, AbpreClass, BoundaryFlags, CriterionReport, KappaClass, Verdict};
pub use error::{Assumption, Error, Result};
pub use estimate::{
    decay_rate, dichotomy_scan, extinction_prob, survival_growth, wilson, DecayFit, DichotomyScan, EstimateResult,
    GrowthSummary,
};
pub use format::{model_to_json, parse_model};
pub use law::{FiniteLaw, OffspringLaw, SharingLaw};
pub use model::{AssumptionReport, ModelSpec, Moments};
pub use sampling::DEFAULT_SEED;
pub use scalar::Scalar;
pub use simulate::{GenerationState, Outcome, RunConfig, RunRecord, Simulator};
pub use spine::{abpre_env, abpre_exact, check_prop1, AbpreSpec, Environment, Prop1Table, TreeSide};

pub type ModelSpec64 = ModelSpec<f64>;
pub type ModelSpec32 = ModelSpec<f32>;
pub type FiniteLaw64 = FiniteLaw<f64>;
pub type SharingLaw64 = SharingLaw<f64>;
pub type AbpreSpec64 = AbpreSpec<f64>;
pub type CriterionReport64 = CriterionReport<f64>;
pub type CriterionReport32 = CriterionReport<f32>;
