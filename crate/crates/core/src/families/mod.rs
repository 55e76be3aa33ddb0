//! Parametric data-generating families.

pub mod de;
pub mod meta;
pub mod ordinal;
pub mod survival;

pub use de::{
    assign_fold_changes, draw_negative_binomial, load_expression_params, sample_counts,
    CountMatrix, DeConfig, ExpressionTable, FoldChanges,
};
pub use meta::{hedges_g, sample_meta, HedgesG, MetaAnalysisConfig, MetaSample};
pub use ordinal::{
    estimate_ordinal_probs, relative_effect, sample_ordinal, sample_ordinal_table, OrdinalSample,
    OrdinalTwoArmConfig, RelativeEffect,
};
pub use survival::{sample_survival, SurvivalSample, SurvivalTwoArmConfig};
