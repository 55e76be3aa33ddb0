//! Simulation studies with parametric data-generating mechanisms built from
//! systematically selected real datasets.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dgm;
pub mod engine;
pub mod error;
pub mod families;
pub mod inference;
pub mod rng;
pub mod scalar;
pub mod selection;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use dgm::{cross_design, DgmInstance, Family, ModelStructureConfig};
pub use engine::{run_study, summarize, StudyPlan, SummaryRecord};
pub use inference::ConsideredParameterSet;
pub use selection::{screen, DatasetRecord, EligibilityCriterion, SelectionLog};
pub use stats::{MethodId, TestResult};

/// Double-precision instances of the generic kernels.
pub type RelativeEffect = families::RelativeEffect<f64>;
pub type HedgesG = families::HedgesG<f64>;
pub type PowerEstimate = stats::PowerEstimate<f64>;
pub type GeneScores = stats::GeneScores<f64>;
pub type TestOutcome = stats::TestResult<f64>;
