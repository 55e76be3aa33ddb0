//! Study configuration file (TOML). Relative paths resolve against the
//! directory holding the file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dgmsim::dgm::{
    classify_components, ComponentSpec, CrossRule, Family, LambdaGrid, LambdaLevel,
    ModelStructureConfig, ParamValue, Params, StructureOptions, Taxonomy,
};
use dgmsim::engine::{Measure, ValidityFilter};
use dgmsim::inference::{AggregationStrategy, Estimator, MappingDesign, PlausibilityRule};
use dgmsim::selection::{load_ordinal_table, SubsetRule};
use dgmsim::stats::MethodId;
use indexmap::IndexMap;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudySection,
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
    pub selection: Option<SelectionSection>,
    pub inference: Option<InferenceSection>,
    #[serde(default)]
    pub plan: Vec<PlanSection>,
    pub engine: Option<EngineSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub name: String,
    pub family: Family,
    #[serde(default)]
    pub structure: StructureOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub database: PathBuf,
    pub criteria: PathBuf,
    /// `[min, max]` number of selected datasets.
    pub bounds: Option<[usize; 2]>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subset_rules: Vec<SubsetRule>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AggregateEntry {
    pub param: String,
    #[serde(flatten)]
    pub strategy: AggregationStrategy,
}

#[derive(Debug, Clone, Deserialize)]
pub struct InferenceSection {
    #[serde(flatten)]
    pub design: MappingDesign,
    pub estimators: IndexMap<String, Estimator>,
    #[serde(default)]
    pub aggregate: Vec<AggregateEntry>,
    #[serde(default)]
    pub plausibility: Vec<PlausibilityRule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorSource {
    /// The considered parameter set written by `infer`.
    Inferred,
    /// No real-data-based parameters.
    Researcher,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub name: String,
    pub vectors: VectorSource,
    #[serde(default = "full_cross")]
    pub crossing: CrossRule,
    #[serde(default)]
    pub grids: Vec<GridSection>,
}

fn full_cross() -> CrossRule {
    CrossRule::FullCross
}

/// A researcher-specified grid given as scalar values, explicit levels, or an
/// ordinal probability table whose rows become joint `pi1`/`pi2` levels.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub name: String,
    pub values: Option<Vec<f64>>,
    pub levels: Option<Vec<Params>>,
    pub ordinal_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub n_rep: usize,
    pub master_seed: u64,
    pub methods: Vec<String>,
    pub measures: Vec<String>,
    #[serde(default)]
    pub validity_filter: Option<String>,
    pub min_valid_reps: Option<usize>,
    pub fisher_replicates: Option<usize>,
    pub expression_mean_floor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    /// DGM-label substrings flagged in report output.
    #[serde(default)]
    pub highlight: Vec<String>,
}

/// Engine settings after parsing ids.
#[derive(Debug, Clone)]
pub struct EngineSettings {
    pub n_rep: usize,
    pub master_seed: u64,
    pub methods: Vec<MethodId>,
    pub measures: Vec<Measure>,
    pub validity_filter: ValidityFilter,
    pub min_valid_reps: Option<usize>,
    pub fisher_replicates: Option<usize>,
    pub expression_mean_floor: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: StudyConfig =
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn structure(&self) -> ModelStructureConfig {
        ModelStructureConfig {
            family: self.study.family,
            options: self.study.structure.clone(),
        }
    }

    fn taxonomy(&self) -> Result<Option<Taxonomy>, CliError> {
        if self.components.is_empty() {
            return Ok(None);
        }
        classify_components(&self.components, &self.structure())
            .map(Some)
            .map_err(|e| invalid(format!("[components]: {e}")))
    }

    /// Cross-reference checks that need no file contents.
    pub fn validate(&self) -> Result<(), CliError> {
        self.structure()
            .validate()
            .map_err(|e| invalid(format!("[study]: {e}")))?;
        let tax = self.taxonomy()?;
        if let Some(inf) = &self.inference {
            if inf.estimators.is_empty() {
                return Err(invalid("[inference]: no estimators"));
            }
            for a in &inf.aggregate {
                if !inf.estimators.contains_key(&a.param) {
                    return Err(invalid(format!(
                        "[inference.aggregate]: `{}` has no estimator",
                        a.param
                    )));
                }
            }
            if let Some(tax) = &tax {
                let theta = tax.theta_ids();
                for (param, est) in &inf.estimators {
                    for id in est.produces(param) {
                        if !theta.contains(&id) {
                            return Err(invalid(format!(
                                "[inference.estimators.{param}]: `{id}` is not a real-data-based component"
                            )));
                        }
                    }
                }
            }
        }
        for (i, p) in self.plan.iter().enumerate() {
            let at = format!("[[plan]] #{} (`{}`)", i + 1, p.name);
            if p.vectors == VectorSource::Inferred && self.inference.is_none() {
                return Err(invalid(format!(
                    "{at}: vectors = \"inferred\" needs an [inference] section"
                )));
            }
            for g in &p.grids {
                let given = [
                    g.values.is_some(),
                    g.levels.is_some(),
                    g.ordinal_table.is_some(),
                ];
                if given.iter().filter(|&&b| b).count() != 1 {
                    return Err(invalid(format!(
                        "{at}, grid `{}`: give exactly one of values, levels, ordinal_table",
                        g.name
                    )));
                }
                // researcher-only plans may also fix real-data-based components
                if let Some(tax) = &tax {
                    let mut allowed = tax.lambda_ids();
                    if p.vectors == VectorSource::Researcher {
                        allowed.extend(tax.theta_ids());
                    }
                    for id in grid_ids(g) {
                        if !allowed.contains(&id) {
                            return Err(invalid(format!(
                                "{at}, grid `{}`: `{id}` is not a researcher-specified component",
                                g.name
                            )));
                        }
                    }
                }
            }
        }
        if self.engine.is_some() {
            self.engine_settings()?;
        }
        Ok(())
    }

    pub fn engine_settings(&self) -> Result<EngineSettings, CliError> {
        let e = self
            .engine
            .as_ref()
            .ok_or_else(|| invalid("missing [engine] section"))?;
        let methods = e
            .methods
            .iter()
            .map(|m| {
                m.parse::<MethodId>()
                    .map_err(|err| invalid(format!("[engine]: {err}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for m in &methods {
            if m.family() != self.study.family {
                return Err(invalid(format!(
                    "[engine]: method `{m}` does not apply to the {} family",
                    self.study.family
                )));
            }
        }
        let measures = e
            .measures
            .iter()
            .map(|m| {
                m.parse::<Measure>()
                    .map_err(|err| invalid(format!("[engine]: {err}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let validity_filter = match &e.validity_filter {
            None => ValidityFilter::None,
            Some(s) => s
                .parse()
                .map_err(|err| invalid(format!("[engine]: {err}")))?,
        };
        if e.n_rep < 1 {
            return Err(invalid("[engine]: n_rep must be at least 1"));
        }
        Ok(EngineSettings {
            n_rep: e.n_rep,
            master_seed: e.master_seed,
            methods,
            measures,
            validity_filter,
            min_valid_reps: e.min_valid_reps,
            fisher_replicates: e.fisher_replicates,
            expression_mean_floor: e.expression_mean_floor,
        })
    }

    pub fn grid(&self, g: &GridSection) -> Result<LambdaGrid, CliError> {
        if let Some(values) = &g.values {
            let mut grid = LambdaGrid::scalar(&g.name, values);
            grid.name.clone_from(&g.name);
            return Ok(grid);
        }
        if let Some(levels) = &g.levels {
            return Ok(LambdaGrid {
                name: g.name.clone(),
                levels: levels
                    .iter()
                    .map(|v| LambdaLevel {
                        label: None,
                        values: v.clone(),
                    })
                    .collect(),
            });
        }
        let path = self.resolve(g.ordinal_table.as_deref().unwrap_or(Path::new("")));
        let rows =
            load_ordinal_table(&path).map_err(|e| invalid(format!("grid `{}`: {e}", g.name)))?;
        Ok(LambdaGrid {
            name: g.name.clone(),
            levels: rows
                .into_iter()
                .map(|r| {
                    let mut joint = IndexMap::new();
                    joint.insert("pi1".to_string(), ParamValue::Tuple(r.pi1));
                    joint.insert("pi2".to_string(), ParamValue::Tuple(r.pi2));
                    let mut level = LambdaLevel::single(g.name.clone(), ParamValue::Joint(joint));
                    level.label = Some(r.dataset_id);
                    level
                })
                .collect(),
        })
    }

    /// Input files whose hashes go into the run manifest.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut out = BTreeSet::new();
        if let Some(s) = &self.selection {
            out.insert(self.resolve(&s.database));
            out.insert(self.resolve(&s.criteria));
        }
        for p in &self.plan {
            for g in &p.grids {
                if let Some(t) = &g.ordinal_table {
                    out.insert(self.resolve(t));
                }
            }
        }
        out.into_iter()
            .filter(|p| p.is_file())
            .map(|p| std::fs::canonicalize(&p).unwrap_or(p))
            .collect()
    }
}

fn grid_ids(g: &GridSection) -> Vec<String> {
    if g.ordinal_table.is_some() {
        return vec!["pi1".to_string(), "pi2".to_string()];
    }
    if let Some(levels) = &g.levels {
        let mut ids = BTreeSet::new();
        for l in levels {
            collect_ids(l, &mut ids);
        }
        return ids.into_iter().collect();
    }
    vec![g.name.clone()]
}

fn collect_ids(params: &Params, out: &mut BTreeSet<String>) {
    for (k, v) in params {
        match v {
            ParamValue::Joint(m) => collect_ids(m, out),
            _ => {
                out.insert(k.clone());
            }
        }
    }
}
