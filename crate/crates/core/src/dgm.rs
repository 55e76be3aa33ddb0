//! Component taxonomy, parameter vectors and DGM enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ConsideredParameterSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    OrdinalTwoArm,
    SurvivalTwoArm,
    MetaAnalysis,
    DeCounts,
}

impl Family {
    /// Parameter ids the model structure requires, in canonical order.
    pub fn required_parameters(self) -> &'static [&'static str] {
        match self {
            Family::OrdinalTwoArm => &["n_groups", "K", "n_obs", "pi1", "pi2"],
            Family::SurvivalTwoArm => &["n_groups", "n_obs", "eta1", "eta2", "u"],
            Family::MetaAnalysis => &[
                "n_study", "theta", "tau2", "u_min", "u_max", "mu1", "sigma2",
            ],
            Family::DeCounts => &[
                "n_groups",
                "n_obs",
                "G",
                "p_DE",
                "p_up",
                "minFC",
                "lambda_FC",
                "mu",
                "phi",
            ],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::OrdinalTwoArm => "ordinal-two-arm",
            Family::SurvivalTwoArm => "survival-two-arm",
            Family::MetaAnalysis => "meta-analysis",
            Family::DeCounts => "de-counts",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Event-time distribution of the survival family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum EventDist {
    Exponential,
    Weibull { shape: f64 },
}

/// Family-specific discrete structure choices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_dist: Option<EventDist>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStructureConfig {
    pub family: Family,
    #[serde(default)]
    pub options: StructureOptions,
}

impl ModelStructureConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            options: StructureOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family, self.options.event_dist) {
            (Family::SurvivalTwoArm, Some(EventDist::Weibull { shape })) if !(shape > 0.0) => Err(
                Error::config(format!("weibull shape must be positive, got {shape}")),
            ),
            (Family::SurvivalTwoArm, _) | (_, None) => Ok(()),
            (f, Some(_)) => Err(Error::config(format!(
                "event_dist is only meaningful for the survival family, not {f}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentKind {
    ModelStructurePart,
    Parameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Specification {
    ResearcherInterest,
    ResearcherConvenience,
    RealDataBased,
}

impl Specification {
    pub fn is_researcher(self) -> bool {
        !matches!(self, Specification::RealDataBased)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knowledge {
    Known,
    Unknown,
}

/// One DGM component with its specification and knowledge class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub id: String,
    pub kind: ComponentKind,
    pub specification: Specification,
    pub knowledge: Knowledge,
    #[serde(default)]
    pub target_related: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<String>,
}

impl ComponentSpec {
    pub fn parameter(
        id: impl Into<String>,
        specification: Specification,
        knowledge: Knowledge,
        target_related: bool,
    ) -> Self {
        Self {
            id: id.into(),
            kind: ComponentKind::Parameter,
            specification,
            knowledge,
            target_related,
            constraint: None,
        }
    }
}

/// Partition of a study's components into researcher-specified (lambda) and
/// real-data-based (theta) parts, each split by knowledge class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub lambda_design: BTreeSet<String>,
    pub lambda_estim_target: BTreeSet<String>,
    pub lambda_estim_other: BTreeSet<String>,
    pub theta_design: BTreeSet<String>,
    pub theta_estim_target: BTreeSet<String>,
    pub theta_estim_other: BTreeSet<String>,
    /// Model-structure parts, which are not checked against the family's
    /// parameter list.
    pub structure_parts: BTreeSet<String>,
}

impl Taxonomy {
    pub fn lambda_ids(&self) -> BTreeSet<String> {
        self.lambda_design
            .iter()
            .chain(&self.lambda_estim_target)
            .chain(&self.lambda_estim_other)
            .cloned()
            .collect()
    }

    pub fn theta_ids(&self) -> BTreeSet<String> {
        self.theta_design
            .iter()
            .chain(&self.theta_estim_target)
            .chain(&self.theta_estim_other)
            .cloned()
            .collect()
    }
}

/// Validates a component list against a model structure and partitions it.
pub fn classify_components(
    components: &[ComponentSpec],
    structure: &ModelStructureConfig,
) -> Result<Taxonomy> {
    if components.is_empty() {
        return Err(Error::input("component list is empty"));
    }
    let mut seen: BTreeMap<&str, &ComponentSpec> = BTreeMap::new();
    for c in components {
        if let Some(prev) = seen.insert(&c.id, c) {
            if c.kind == ComponentKind::Parameter
                && prev.specification.is_researcher() != c.specification.is_researcher()
            {
                return Err(Error::ParameterInBoth(c.id.clone()));
            }
            return Err(Error::DuplicateComponent(c.id.clone()));
        }
        if c.target_related && c.knowledge == Knowledge::Known {
            return Err(Error::TargetOnKnown(c.id.clone()));
        }
    }

    let required = structure.family.required_parameters();
    let mut tax = Taxonomy::default();
    for c in components {
        if c.kind == ComponentKind::ModelStructurePart {
            tax.structure_parts.insert(c.id.clone());
            continue;
        }
        if !required.contains(&c.id.as_str()) {
            return Err(Error::UnexpectedParameter {
                id: c.id.clone(),
                family: structure.family.to_string(),
            });
        }
        let slot = match (
            c.specification.is_researcher(),
            c.knowledge,
            c.target_related,
        ) {
            (true, Knowledge::Known, _) => &mut tax.lambda_design,
            (true, Knowledge::Unknown, true) => &mut tax.lambda_estim_target,
            (true, Knowledge::Unknown, false) => &mut tax.lambda_estim_other,
            (false, Knowledge::Known, _) => &mut tax.theta_design,
            (false, Knowledge::Unknown, true) => &mut tax.theta_estim_target,
            (false, Knowledge::Unknown, false) => &mut tax.theta_estim_other,
        };
        slot.insert(c.id.clone());
    }
    for id in required {
        if !seen.contains_key(id) {
            return Err(Error::MissingParameter((*id).to_string()));
        }
    }
    Ok(tax)
}

/// Value of a single parameter entry.
///
/// `Joint` groups several parameters that vary together as one factor; it is
/// flattened into its members when placed into a [`ParameterVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Tuple(Vec<f64>),
    /// Reference to an external parameter source such as an expression file.
    Ref(String),
    Joint(IndexMap<String, ParamValue>),
}

impl ParamValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_tuple(&self) -> Option<&[f64]> {
        match self {
            ParamValue::Tuple(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_ref_path(&self) -> Option<&str> {
        match self {
            ParamValue::Ref(p) => Some(p),
            _ => None,
        }
    }

    /// Every numeric component; empty for references.
    pub fn numbers(&self) -> Vec<f64> {
        match self {
            ParamValue::Scalar(v) => vec![*v],
            ParamValue::Tuple(v) => v.clone(),
            ParamValue::Ref(_) => Vec::new(),
            ParamValue::Joint(m) => m.values().flat_map(|v| v.numbers()).collect(),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Scalar(v) => write!(f, "{v}"),
            ParamValue::Tuple(v) => {
                f.write_str("(")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
            ParamValue::Ref(p) => f.write_str(p),
            ParamValue::Joint(m) => {
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{k}={v}")?;
                }
                Ok(())
            }
        }
    }
}

pub type Params = IndexMap<String, ParamValue>;

/// Flattens joint entries into their member parameters.
pub fn flatten_into(target: &mut Params, id: &str, value: &ParamValue) -> Result<()> {
    match value {
        ParamValue::Joint(members) => {
            for (k, v) in members {
                flatten_into(target, k, v)?;
            }
            Ok(())
        }
        other => {
            if target.insert(id.to_string(), other.clone()).is_some() {
                return Err(Error::input(format!("parameter `{id}` assigned twice")));
            }
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Researcher,
    Dataset { id: String },
    Aggregated { sources: Vec<String> },
}

impl Provenance {
    pub fn is_researcher(&self) -> bool {
        matches!(self, Provenance::Researcher)
    }
}

/// Named parameter entries plus where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub label: String,
    pub entries: Params,
    pub provenance: Provenance,
}

impl ParameterVector {
    pub fn researcher_empty() -> Self {
        Self {
            label: String::new(),
            entries: Params::new(),
            provenance: Provenance::Researcher,
        }
    }
}

/// One level of a researcher-specified grid. A level may set several
/// parameters at once (e.g. a sample size together with its minimum fold change).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaLevel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub values: Params,
}

impl LambdaLevel {
    pub fn single(id: impl Into<String>, value: ParamValue) -> Self {
        let mut values = Params::new();
        values.insert(id.into(), value);
        Self {
            label: None,
            values,
        }
    }

    fn describe(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    #[serde(default)]
    pub name: String,
    pub levels: Vec<LambdaLevel>,
}

impl LambdaGrid {
    pub fn scalar(id: &str, values: &[f64]) -> Self {
        Self {
            name: id.to_string(),
            levels: values
                .iter()
                .map(|v| LambdaLevel::single(id, ParamValue::Scalar(*v)))
                .collect(),
        }
    }

    pub fn constant(id: &str, value: ParamValue) -> Self {
        Self {
            name: id.to_string(),
            levels: vec![LambdaLevel::single(id, value)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossRule {
    FullCross,
    Paired,
}

/// A fully specified generator: model structure, researcher-specified values
/// and one considered real-data-based vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgmInstance {
    pub label: String,
    pub family: Family,
    pub structure: StructureOptions,
    pub lambda: Params,
    pub theta: Params,
    pub provenance: Provenance,
}

impl DgmInstance {
    pub fn new(
        label: String,
        structure: &ModelStructureConfig,
        lambda: Params,
        theta: Params,
        provenance: Provenance,
    ) -> Result<Self> {
        let dgm = Self {
            label,
            family: structure.family,
            structure: structure.options.clone(),
            lambda,
            theta,
            provenance,
        };
        dgm.validate()?;
        Ok(dgm)
    }

    pub fn model_structure(&self) -> ModelStructureConfig {
        ModelStructureConfig {
            family: self.family,
            options: self.structure.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_structure().validate()?;
        if let Some(id) = self.lambda.keys().find(|k| self.theta.contains_key(*k)) {
            return Err(Error::ParameterInBoth(id.clone()));
        }
        for id in self.family.required_parameters() {
            if !self.lambda.contains_key(*id) && !self.theta.contains_key(*id) {
                return Err(Error::MissingParameter((*id).to_string()));
            }
        }
        Ok(())
    }

    /// Looks a parameter up in either part.
    pub fn param(&self, id: &str) -> Option<&ParamValue> {
        self.lambda.get(id).or_else(|| self.theta.get(id))
    }

    pub fn scalar(&self, id: &str) -> Result<f64> {
        self.param(id)
            .and_then(ParamValue::as_scalar)
            .ok_or_else(|| Error::input(format!("{}: `{id}` must be a number", self.label)))
    }

    pub fn tuple(&self, id: &str) -> Result<&[f64]> {
        self.param(id)
            .and_then(ParamValue::as_tuple)
            .ok_or_else(|| {
                Error::input(format!("{}: `{id}` must be a list of numbers", self.label))
            })
    }

    pub fn is_real_data_based(&self) -> bool {
        !self.provenance.is_researcher()
    }
}

/// Crosses considered vectors with researcher-specified grids.
///
/// Full crossing varies the considered vector slowest, then each grid in
/// declared order (last grid fastest). Pairing zips level `i` of every grid
/// with vector `i`.
pub fn cross_design(
    theta_set: &ConsideredParameterSet,
    structure: &ModelStructureConfig,
    grids: &[LambdaGrid],
    rule: CrossRule,
) -> Result<Vec<DgmInstance>> {
    if theta_set.vectors.is_empty() {
        return Err(Error::input("considered parameter set is empty"));
    }
    if let Some(g) = grids.iter().find(|g| g.levels.is_empty()) {
        return Err(Error::input(format!("grid `{}` has no levels", g.name)));
    }

    let combos: Vec<(usize, Vec<usize>)> = match rule {
        CrossRule::FullCross => {
            let mut level_combos: Vec<Vec<usize>> = vec![Vec::new()];
            for g in grids {
                level_combos = level_combos
                    .into_iter()
                    .flat_map(|prefix| {
                        (0..g.levels.len()).map(move |l| {
                            let mut c = prefix.clone();
                            c.push(l);
                            c
                        })
                    })
                    .collect();
            }
            (0..theta_set.vectors.len())
                .flat_map(|t| level_combos.iter().map(move |c| (t, c.clone())))
                .collect()
        }
        CrossRule::Paired => {
            let n = theta_set.vectors.len();
            if let Some(g) = grids.iter().find(|g| g.levels.len() != n) {
                return Err(Error::input(format!(
                    "paired crossing needs {n} levels per grid, grid `{}` has {}",
                    g.name,
                    g.levels.len()
                )));
            }
            (0..n).map(|i| (i, vec![i; grids.len()])).collect()
        }
    };

    combos
        .into_iter()
        .map(|(t, levels)| {
            let vector = &theta_set.vectors[t];
            let mut lambda = Params::new();
            let mut parts = Vec::new();
            if !vector.label.is_empty() {
                parts.push(vector.label.clone());
            }
            for (g, &l) in grids.iter().zip(&levels) {
                let level = &g.levels[l];
                for (k, v) in &level.values {
                    flatten_into(&mut lambda, k, v)?;
                }
                parts.push(level.describe());
            }
            let prefix = if vector.provenance.is_researcher() {
                "researcher"
            } else {
                "real-data"
            };
            let label = format!("{prefix}:{}", parts.join("|"));
            DgmInstance::new(
                label,
                structure,
                lambda,
                vector.entries.clone(),
                vector.provenance.clone(),
            )
        })
        .collect()
}

pub fn write_dgms_jsonl<W: Write>(mut out: W, dgms: &[DgmInstance]) -> Result<()> {
    for d in dgms {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("<dgm output>", e))?;
    }
    Ok(())
}

pub fn read_dgms_jsonl<R: BufRead>(input: R) -> Result<Vec<DgmInstance>> {
    let mut dgms = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<dgm input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let dgm: DgmInstance = serde_json::from_str(&line)
            .map_err(|e| Error::input(format!("DGM line {}: {e}", i + 1)))?;
        dgm.validate()?;
        dgms.push(dgm);
    }
    Ok(dgms)
}

pub fn load_dgms(path: &Path) -> Result<Vec<DgmInstance>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dgms_jsonl(std::io::BufReader::new(f))
}
