//! Evaluated methods and performance measures.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dgm::Family;
use crate::error::Error;

pub mod auc;
pub mod contingency;
pub mod de_scores;
pub mod heterogeneity;
mod linalg;
pub mod ordinal_logit;
pub mod power;
pub mod rank;

pub use auc::auc_score;
pub use contingency::{chi_square_test, fisher_exact_mc};
pub use de_scores::{de_gene_scores, DeScoreMethod, GeneScores};
pub use heterogeneity::{tau2_estimate, Tau2Method};
pub use ordinal_logit::{po_logistic_test, po_logistic_test_table};
pub use power::{power_and_mcse, PowerEstimate};
pub use rank::{wilcoxon_rank_sum, wilcoxon_rank_sum_table};

/// Registered method identifiers, as referenced from study configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "chisq")]
    Chisq,
    #[serde(rename = "fisher-mc")]
    FisherMc,
    #[serde(rename = "wilcoxon")]
    Wilcoxon,
    #[serde(rename = "po-logit")]
    PoLogit,
    #[serde(rename = "tau2-dl")]
    Tau2Dl,
    #[serde(rename = "tau2-sj")]
    Tau2Sj,
    #[serde(rename = "de-logt")]
    DeLogT,
    #[serde(rename = "de-ranksum")]
    DeRankSum,
}

/// What a method produces per repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodOutput {
    PValue,
    Estimate,
    GeneScores,
}

impl MethodId {
    pub const ALL: [MethodId; 8] = [
        MethodId::Chisq,
        MethodId::FisherMc,
        MethodId::Wilcoxon,
        MethodId::PoLogit,
        MethodId::Tau2Dl,
        MethodId::Tau2Sj,
        MethodId::DeLogT,
        MethodId::DeRankSum,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Chisq => "chisq",
            MethodId::FisherMc => "fisher-mc",
            MethodId::Wilcoxon => "wilcoxon",
            MethodId::PoLogit => "po-logit",
            MethodId::Tau2Dl => "tau2-dl",
            MethodId::Tau2Sj => "tau2-sj",
            MethodId::DeLogT => "de-logt",
            MethodId::DeRankSum => "de-ranksum",
        }
    }

    pub fn family(self) -> Family {
        match self {
            MethodId::Chisq | MethodId::FisherMc | MethodId::Wilcoxon | MethodId::PoLogit => {
                Family::OrdinalTwoArm
            }
            MethodId::Tau2Dl | MethodId::Tau2Sj => Family::MetaAnalysis,
            MethodId::DeLogT | MethodId::DeRankSum => Family::DeCounts,
        }
    }

    pub fn output(self) -> MethodOutput {
        match self.family() {
            Family::OrdinalTwoArm => MethodOutput::PValue,
            Family::MetaAnalysis => MethodOutput::Estimate,
            _ => MethodOutput::GeneScores,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Outcome of one hypothesis test: a p-value, or a failure with a reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult<T> {
    pub method: MethodId,
    pub statistic: T,
    p_value: Option<T>,
    failure: Option<String>,
    pub diagnostics: BTreeMap<String, String>,
}

impl<T: Copy> TestResult<T> {
    pub fn ok(method: MethodId, statistic: T, p_value: T) -> Self {
        Self {
            method,
            statistic,
            p_value: Some(p_value),
            failure: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn failed(method: MethodId, statistic: T, reason: impl Into<String>) -> Self {
        Self {
            method,
            statistic,
            p_value: None,
            failure: Some(reason.into()),
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diag(mut self, key: &str, value: impl ToString) -> Self {
        self.diagnostics.insert(key.to_string(), value.to_string());
        self
    }

    pub fn p_value(&self) -> Option<T> {
        self.p_value
    }

    pub fn failure(&self) -> Option<&str> {
        self.failure.as_deref()
    }

    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }
}
