//! Replication runner: generation, validity filtering, method evaluation and
//! performance summaries.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dgm::{DgmInstance, Family};
use crate::error::{Error, Result};
use crate::families::{
    assign_fold_changes, relative_effect, sample_counts, sample_meta, sample_ordinal_table,
    sample_survival, CountMatrix, DeConfig, ExpressionTable, FoldChanges, MetaAnalysisConfig,
    MetaSample, OrdinalTwoArmConfig, SurvivalSample, SurvivalTwoArmConfig,
};
use crate::rng::{repetition_stream, StreamRng};
use crate::stats::{
    auc_score, chi_square_test, de_gene_scores, fisher_exact_mc, po_logistic_test_table,
    power_and_mcse, tau2_estimate, wilcoxon_rank_sum_table, DeScoreMethod, MethodId, MethodOutput,
    Tau2Method,
};
use crate::table::ContingencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "kebab-case")]
pub enum Measure {
    Power {
        alpha: f64,
    },
    Auc,
    /// Mean of a per-repetition estimate.
    Mean,
}

impl Measure {
    pub fn label(&self) -> String {
        match self {
            Measure::Power { alpha } => format!("power({alpha})"),
            Measure::Auc => "auc".to_string(),
            Measure::Mean => "mean".to_string(),
        }
    }

    fn applies_to(&self, output: MethodOutput) -> bool {
        matches!(
            (self, output),
            (Measure::Power { .. }, MethodOutput::PValue)
                | (Measure::Auc, MethodOutput::GeneScores)
                | (Measure::Mean, MethodOutput::Estimate)
        )
    }
}

impl FromStr for Measure {
    type Err = Error;

    /// Accepts `power` (alpha 0.05), `power(<alpha>)`, `auc` and `mean`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "power" => return Ok(Measure::Power { alpha: 0.05 }),
            "auc" => return Ok(Measure::Auc),
            "mean" => return Ok(Measure::Mean),
            _ => {}
        }
        s.strip_prefix("power(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|a| a.trim().parse().ok())
            .map(|alpha| Measure::Power { alpha })
            .ok_or_else(|| Error::config(format!("unknown measure `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityFilter {
    #[default]
    None,
    AllCategoriesObserved,
}

impl ValidityFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidityFilter::None => "none",
            ValidityFilter::AllCategoriesObserved => "all-categories-observed",
        }
    }

    fn supports(self, family: Family) -> bool {
        self == ValidityFilter::None || family == Family::OrdinalTwoArm
    }
}

impl fmt::Display for ValidityFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValidityFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ValidityFilter::None),
            "all-categories-observed" | "all-K-categories-observed" => {
                Ok(ValidityFilter::AllCategoriesObserved)
            }
            other => Err(Error::UnknownPredicate(other.to_string())),
        }
    }
}

pub const DEFAULT_FISHER_REPLICATES: usize = 2000;
pub const DEFAULT_MEAN_FLOOR: f64 = 10.0;

fn default_fisher() -> usize {
    DEFAULT_FISHER_REPLICATES
}

fn default_floor() -> f64 {
    DEFAULT_MEAN_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub dgms: Vec<DgmInstance>,
    pub methods: Vec<MethodId>,
    pub measures: Vec<Measure>,
    pub n_rep: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub validity_filter: ValidityFilter,
    /// Defaults to 80% of `n_rep`, rounded up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_valid_reps: Option<usize>,
    #[serde(default = "default_fisher")]
    pub fisher_replicates: usize,
    /// Genes with a lower mean are dropped from expression files.
    #[serde(default = "default_floor")]
    pub expression_mean_floor: f64,
}

impl StudyPlan {
    pub fn new(
        dgms: Vec<DgmInstance>,
        methods: Vec<MethodId>,
        measures: Vec<Measure>,
        n_rep: usize,
        master_seed: u64,
    ) -> Self {
        Self {
            dgms,
            methods,
            measures,
            n_rep,
            master_seed,
            validity_filter: ValidityFilter::None,
            min_valid_reps: None,
            fisher_replicates: DEFAULT_FISHER_REPLICATES,
            expression_mean_floor: DEFAULT_MEAN_FLOOR,
        }
    }

    pub fn min_valid(&self) -> usize {
        self.min_valid_reps
            .unwrap_or_else(|| (self.n_rep * 4).div_ceil(5))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rep < 1 {
            return Err(Error::config("n_rep must be at least 1"));
        }
        if self.dgms.is_empty() {
            return Err(Error::config("plan has no DGMs"));
        }
        if self.methods.contains(&MethodId::FisherMc) && self.fisher_replicates < 1000 {
            return Err(Error::config("fisher-mc needs at least 1000 replicates"));
        }
        for d in &self.dgms {
            d.validate()?;
            if !self.validity_filter.supports(d.family) {
                return Err(Error::config(format!(
                    "validity filter `{}` is not defined for the {} family",
                    self.validity_filter, d.family
                )));
            }
            for m in &self.methods {
                if m.family() != d.family {
                    return Err(Error::config(format!(
                        "method `{m}` does not apply to {} (DGM `{}`)",
                        d.family, d.label
                    )));
                }
            }
        }
        for m in &self.methods {
            if !self.measures.iter().any(|x| x.applies_to(m.output())) {
                return Err(Error::config(format!(
                    "no measure in the plan applies to method `{m}`"
                )));
            }
        }
        for x in &self.measures {
            if !self.methods.iter().any(|m| x.applies_to(m.output())) {
                return Err(Error::config(format!(
                    "measure `{}` has no compatible method",
                    x.label()
                )));
            }
            if let Measure::Power { alpha } = x {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::config(format!(
                        "alpha must lie in (0, 1), got {alpha}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the plan's JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_vec(self)?))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One simulated dataset.
#[derive(Debug, Clone)]
pub enum SimulatedData {
    Ordinal(ContingencyTable),
    Survival(SurvivalSample),
    Meta(MetaSample),
    De {
        counts: CountMatrix,
        truth: FoldChanges,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(String),
}

pub fn filter_validity(data: &SimulatedData, predicate: ValidityFilter) -> Result<Validity> {
    match (predicate, data) {
        (ValidityFilter::None, _) => Ok(Validity::Valid),
        (ValidityFilter::AllCategoriesObserved, SimulatedData::Ordinal(t)) => {
            Ok(match (0..t.categories()).find(|&k| t.col_sum(k) == 0) {
                Some(k) => Validity::Invalid(format!("category {} unobserved", k + 1)),
                None => Validity::Valid,
            })
        }
        (p, _) => Err(Error::config(format!(
            "validity filter `{p}` needs ordinal data"
        ))),
    }
}

/// Per-DGM generator with parameters resolved once.
#[derive(Debug, Clone)]
enum Generator {
    Ordinal(OrdinalTwoArmConfig),
    Survival(SurvivalTwoArmConfig),
    Meta(MetaAnalysisConfig),
    De {
        table: Arc<ExpressionTable>,
        genes: usize,
        n_obs: usize,
        p_de: f64,
        p_up: f64,
        min_fc: f64,
        lambda_fc: f64,
    },
}

fn count(d: &DgmInstance, id: &str) -> Result<usize> {
    let v = d.scalar(id)?;
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::input(format!(
            "{}: `{id}` must be a whole number, got {v}",
            d.label
        )));
    }
    Ok(v as usize)
}

fn check_two_groups(d: &DgmInstance) -> Result<()> {
    match d.param("n_groups") {
        Some(_) if count(d, "n_groups")? != 2 => Err(Error::input(format!(
            "{}: only two groups are supported",
            d.label
        ))),
        _ => Ok(()),
    }
}

fn with_label<T>(d: &DgmInstance, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidInput(m) if !m.starts_with(&d.label) => {
            Error::InvalidInput(format!("{}: {m}", d.label))
        }
        other => other,
    })
}

type TableCache = HashMap<PathBuf, Arc<ExpressionTable>>;

impl Generator {
    fn prepare(d: &DgmInstance, floor: f64, cache: &mut TableCache) -> Result<Self> {
        with_label(d, Self::prepare_inner(d, floor, cache))
    }

    fn prepare_inner(d: &DgmInstance, floor: f64, cache: &mut TableCache) -> Result<Self> {
        match d.family {
            Family::OrdinalTwoArm => {
                check_two_groups(d)?;
                let cfg =
                    OrdinalTwoArmConfig::new(count(d, "n_obs")?, d.tuple("pi1")?, d.tuple("pi2")?)?;
                let k = count(d, "K")?;
                if k != cfg.categories() {
                    return Err(Error::input(format!(
                        "K = {k} but the probability tuples have {} entries",
                        cfg.categories()
                    )));
                }
                Ok(Generator::Ordinal(cfg))
            }
            Family::SurvivalTwoArm => {
                check_two_groups(d)?;
                let dist = d
                    .structure
                    .event_dist
                    .unwrap_or(crate::dgm::EventDist::Exponential);
                Ok(Generator::Survival(SurvivalTwoArmConfig::new(
                    count(d, "n_obs")?,
                    d.scalar("eta1")?,
                    d.scalar("eta2")?,
                    d.scalar("u")?,
                    dist,
                )?))
            }
            Family::MetaAnalysis => {
                let n_study = count(d, "n_study")?;
                let mu1 = match d.param("mu1") {
                    Some(crate::dgm::ParamValue::Scalar(v)) => vec![*v; n_study],
                    _ => d.tuple("mu1")?.to_vec(),
                };
                Ok(Generator::Meta(MetaAnalysisConfig::new(
                    n_study,
                    d.scalar("theta")?,
                    d.scalar("tau2")?,
                    d.scalar("u_min")?,
                    d.scalar("u_max")?,
                    mu1,
                    d.scalar("sigma2")?,
                )?))
            }
            Family::DeCounts => {
                check_two_groups(d)?;
                let mu = d.param("mu").and_then(|v| v.as_ref_path());
                let phi = d.param("phi").and_then(|v| v.as_ref_path());
                let path = match (mu, phi) {
                    (Some(a), Some(b)) if a == b => PathBuf::from(a),
                    _ => {
                        return Err(Error::input(
                            "`mu` and `phi` must reference the same expression file",
                        ))
                    }
                };
                let table = match cache.get(&path) {
                    Some(t) => t.clone(),
                    None => {
                        let t = Arc::new(ExpressionTable::load(&path, floor)?);
                        cache.insert(path.clone(), t.clone());
                        t
                    }
                };
                let genes = count(d, "G")?;
                if genes > table.len() {
                    return Err(Error::InsufficientRows {
                        available: table.len(),
                        required: genes,
                    });
                }
                let gen = Generator::De {
                    table,
                    genes,
                    n_obs: count(d, "n_obs")?,
                    p_de: d.scalar("p_DE")?,
                    p_up: d.scalar("p_up")?,
                    min_fc: d.scalar("minFC")?,
                    lambda_fc: d.scalar("lambda_FC")?,
                };
                // validate the scalar parameters once
                if let Generator::De {
                    n_obs,
                    p_de,
                    p_up,
                    min_fc,
                    lambda_fc,
                    ..
                } = &gen
                {
                    DeConfig::new(*n_obs, *p_de, *p_up, *min_fc, *lambda_fc, vec![], vec![])?;
                }
                Ok(gen)
            }
        }
    }

    /// Draw order per repetition: for DE, gene parameters, then fold
    /// changes, then counts.
    fn generate(&self, rng: &mut StreamRng) -> Result<SimulatedData> {
        Ok(match self {
            Generator::Ordinal(c) => SimulatedData::Ordinal(sample_ordinal_table(c, rng)),
            Generator::Survival(c) => SimulatedData::Survival(sample_survival(c, rng)),
            Generator::Meta(c) => SimulatedData::Meta(sample_meta(c, rng)),
            Generator::De {
                table,
                genes,
                n_obs,
                p_de,
                p_up,
                min_fc,
                lambda_fc,
            } => {
                let (mu, phi) = table.draw(*genes, rng)?;
                let cfg = DeConfig::new(*n_obs, *p_de, *p_up, *min_fc, *lambda_fc, mu, phi)?;
                let truth = assign_fold_changes(&cfg, rng);
                let counts = sample_counts(&cfg, &truth.fc, rng);
                SimulatedData::De { counts, truth }
            }
        })
    }

    fn covariate(&self, d: &DgmInstance) -> Option<(String, f64)> {
        match self {
            Generator::Ordinal(c) => relative_effect(&c.pi1, &c.pi2)
                .ok()
                .map(|r| ("relative_effect_deviation".to_string(), r.deviation)),
            Generator::De { table, .. } => {
                Some(("median_dispersion".to_string(), table.median_dispersion))
            }
            Generator::Meta(_) => d.scalar("tau2").ok().map(|t| ("tau2".to_string(), t)),
            Generator::Survival(_) => None,
        }
    }
}

/// One (DGM, repetition, method) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub dgm: usize,
    pub rep: usize,
    pub method: MethodId,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Point estimate (tau2 methods) or AUC (DE scorers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

fn run_method(
    method: MethodId,
    data: &SimulatedData,
    fisher_b: usize,
    fisher_seed: u64,
) -> Result<(Option<f64>, Option<f64>, Option<String>)> {
    let from_test =
        |r: crate::stats::TestResult<f64>| (r.p_value(), None, r.failure().map(str::to_string));
    Ok(match (method, data) {
        (MethodId::Chisq, SimulatedData::Ordinal(t)) => from_test(chi_square_test(t)),
        (MethodId::FisherMc, SimulatedData::Ordinal(t)) => {
            from_test(fisher_exact_mc(t, fisher_b, fisher_seed))
        }
        (MethodId::Wilcoxon, SimulatedData::Ordinal(t)) => from_test(wilcoxon_rank_sum_table(t)),
        (MethodId::PoLogit, SimulatedData::Ordinal(t)) => from_test(po_logistic_test_table(t)),
        (MethodId::Tau2Dl | MethodId::Tau2Sj, SimulatedData::Meta(m)) => {
            let how = if method == MethodId::Tau2Dl {
                Tau2Method::Dl
            } else {
                Tau2Method::Sj
            };
            match tau2_estimate(&m.g, &m.var, how) {
                Ok(v) => (None, Some(v), None),
                Err(e) => (None, None, Some(e.to_string())),
            }
        }
        (MethodId::DeLogT | MethodId::DeRankSum, SimulatedData::De { counts, truth }) => {
            let how = if method == MethodId::DeLogT {
                DeScoreMethod::LogT
            } else {
                DeScoreMethod::RankSum
            };
            let scores = de_gene_scores::<f64>(counts, how)?;
            match auc_score(&scores.scores, &truth.de) {
                Ok(a) => (None, Some(a), None),
                Err(e) => (None, None, Some(e.to_string())),
            }
        }
        (m, _) => {
            return Err(Error::config(format!(
                "method `{m}` got data of another family"
            )))
        }
    })
}

fn run_repetition(
    plan: &StudyPlan,
    gen: &Generator,
    dgm: usize,
    rep: usize,
) -> Result<Vec<RepRecord>> {
    let mut rng = repetition_stream(plan.master_seed, dgm, rep);
    let data = gen.generate(&mut rng)?;
    let validity = filter_validity(&data, plan.validity_filter)?;
    let mut out = Vec::with_capacity(plan.methods.len());
    let invalid_reason = match &validity {
        Validity::Valid => None,
        Validity::Invalid(r) => Some(r.clone()),
    };
    for &method in &plan.methods {
        let mut rec = RepRecord {
            dgm,
            rep,
            method,
            valid: invalid_reason.is_none(),
            invalid_reason: invalid_reason.clone(),
            p_value: None,
            value: None,
            failure: None,
        };
        if rec.valid {
            // method-local seed, drawn after the data in a fixed order
            let fisher_seed = rng.next_u64();
            let (p, v, f) = run_method(method, &data, plan.fisher_replicates, fisher_seed)?;
            rec.p_value = p;
            rec.value = v;
            rec.failure = f;
        }
        out.push(rec);
    }
    Ok(out)
}

fn prepare_all(plan: &StudyPlan) -> Result<Vec<Generator>> {
    let mut cache = TableCache::new();
    plan.dgms
        .iter()
        .map(|d| Generator::prepare(d, plan.expression_mean_floor, &mut cache))
        .collect()
}

/// Runs every (DGM, repetition) unit and returns records ordered by DGM,
/// repetition and method. `workers = None` uses all cores. `on_dgm_done`
/// is called once per finished DGM, in completion order.
pub fn run_study_with_progress(
    plan: &StudyPlan,
    workers: Option<usize>,
    on_dgm_done: &(dyn Fn(usize, &DgmInstance) + Sync),
) -> Result<Vec<RepRecord>> {
    plan.validate()?;
    let generators = prepare_all(plan)?;
    let remaining: Vec<AtomicUsize> = (0..plan.dgms.len())
        .map(|_| AtomicUsize::new(plan.n_rep))
        .collect();
    let units = plan.dgms.len() * plan.n_rep;
    let work = || {
        (0..units)
            .into_par_iter()
            .map(|u| {
                let (d, s) = (u / plan.n_rep, u % plan.n_rep);
                let recs = run_repetition(plan, &generators[d], d, s)
                    .map_err(|e| with_label(&plan.dgms[d], Err::<(), _>(e)).unwrap_err())?;
                if remaining[d].fetch_sub(1, Ordering::AcqRel) == 1 {
                    on_dgm_done(d, &plan.dgms[d]);
                }
                Ok(recs)
            })
            .collect::<Result<Vec<Vec<RepRecord>>>>()
    };
    let nested = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(nested.into_iter().flatten().collect())
}

pub fn run_study(plan: &StudyPlan, workers: Option<usize>) -> Result<Vec<RepRecord>> {
    run_study_with_progress(plan, workers, &|_, _| {})
}

/// Performance of one method under one measure for one DGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub dgm_label: String,
    pub family: Family,
    pub method: MethodId,
    pub measure: String,
    pub estimate: Option<f64>,
    pub mcse: Option<f64>,
    pub n_valid: usize,
    pub n_failures: usize,
    pub excluded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_reason: Option<String>,
    pub covariate_name: Option<String>,
    pub covariate_value: Option<f64>,
}

/// Aggregates records per (DGM, method, measure) in plan order.
pub fn summarize(records: &[RepRecord], plan: &StudyPlan) -> Result<Vec<SummaryRecord>> {
    let generators = prepare_all(plan)?;
    let min_valid = plan.min_valid();
    let mut by_key: BTreeMap<(usize, MethodId), Vec<&RepRecord>> = BTreeMap::new();
    for r in records {
        by_key.entry((r.dgm, r.method)).or_default().push(r);
    }
    let mut out = Vec::new();
    for (d, dgm) in plan.dgms.iter().enumerate() {
        let covariate = generators[d].covariate(dgm);
        for &method in &plan.methods {
            let recs = by_key.get(&(d, method)).map(Vec::as_slice).unwrap_or(&[]);
            let valid: Vec<&&RepRecord> = recs.iter().filter(|r| r.valid).collect();
            let n_valid = valid.len();
            let n_failures = valid.iter().filter(|r| r.failure.is_some()).count();
            let excluded = n_valid < min_valid;
            for measure in plan
                .measures
                .iter()
                .filter(|m| m.applies_to(method.output()))
            {
                let (estimate, mcse) = if excluded {
                    (None, None)
                } else {
                    match measure {
                        Measure::Power { alpha } => {
                            let ps: Vec<Option<f64>> = valid.iter().map(|r| r.p_value).collect();
                            match power_and_mcse(&ps, *alpha) {
                                Ok(e) => (Some(e.power), Some(e.mcse)),
                                Err(_) => (None, None),
                            }
                        }
                        Measure::Auc | Measure::Mean => {
                            let xs: Vec<f64> = valid.iter().filter_map(|r| r.value).collect();
                            if xs.is_empty() {
                                (None, None)
                            } else {
                                (Some(xs.iter().sum::<f64>() / xs.len() as f64), None)
                            }
                        }
                    }
                };
                out.push(SummaryRecord {
                    dgm_label: dgm.label.clone(),
                    family: dgm.family,
                    method,
                    measure: measure.label(),
                    estimate,
                    mcse,
                    n_valid,
                    n_failures,
                    excluded,
                    exclusion_reason: excluded
                        .then(|| format!("{n_valid} valid repetitions < {min_valid}")),
                    covariate_name: covariate.as_ref().map(|c| c.0.clone()),
                    covariate_value: covariate.as_ref().map(|c| c.1),
                });
            }
        }
    }
    Ok(out)
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "dgm_label",
    "family",
    "method",
    "measure",
    "estimate",
    "mcse",
    "n_valid",
    "n_failures",
    "excluded",
    "covariate_name",
    "covariate_value",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv_bytes(summaries: &[SummaryRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summaries {
        w.write_record([
            s.dgm_label.clone(),
            s.family.to_string(),
            s.method.to_string(),
            s.measure.clone(),
            opt(s.estimate),
            opt(s.mcse),
            s.n_valid.to_string(),
            s.n_failures.to_string(),
            s.excluded.to_string(),
            s.covariate_name.clone().unwrap_or_default(),
            opt(s.covariate_value),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::input(format!("csv buffer: {e}")))
}

/// Parses a summary CSV written by [`summary_csv_bytes`].
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("{}: missing column `{name}`", path.display())))
    };
    let idx: Vec<usize> = SUMMARY_COLUMNS
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let num = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::input(format!("bad number `{s}`")))
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let f = |i: usize| &row[idx[i]];
        let family: Family = serde_json::from_value(serde_json::Value::String(f(1).to_string()))
            .map_err(|_| Error::input(format!("unknown family `{}`", f(1))))?;
        out.push(SummaryRecord {
            dgm_label: f(0).to_string(),
            family,
            method: f(2).parse()?,
            measure: f(3).to_string(),
            estimate: num(f(4))?,
            mcse: num(f(5))?,
            n_valid: f(6).parse().map_err(|_| Error::input("bad n_valid"))?,
            n_failures: f(7).parse().map_err(|_| Error::input("bad n_failures"))?,
            excluded: f(8) == "true",
            exclusion_reason: None,
            covariate_name: Some(f(9).to_string()).filter(|s| !s.is_empty()),
            covariate_value: num(f(10))?,
        });
    }
    Ok(out)
}

pub fn write_records_jsonl(path: &Path, records: &[RepRecord]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub master_seed: u64,
    pub n_rep: usize,
    pub plan_hash: String,
    pub fixture_hashes: BTreeMap<String, String>,
    pub results_hash: String,
}

/// Files a plan reads besides its own definition (expression tables).
pub fn plan_inputs(plan: &StudyPlan) -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = plan
        .dgms
        .iter()
        .filter_map(|d| {
            d.param("mu")
                .and_then(|v| v.as_ref_path())
                .map(PathBuf::from)
        })
        .collect();
    paths.sort();
    paths.dedup();
    paths
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Writes `summary.csv`, `records.jsonl` and `manifest.json` into `dir`.
pub fn export_results(
    dir: &Path,
    plan: &StudyPlan,
    records: &[RepRecord],
    summaries: &[SummaryRecord],
    extra_inputs: &[PathBuf],
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = summary_csv_bytes(summaries)?;
    let summary_path = dir.join("summary.csv");
    std::fs::write(&summary_path, &summary).map_err(|e| Error::io(&summary_path, e))?;
    write_records_jsonl(&dir.join("records.jsonl"), records)?;
    let mut fixture_hashes = BTreeMap::new();
    for p in plan_inputs(plan).iter().chain(extra_inputs) {
        fixture_hashes.insert(p.display().to_string(), hash_file(p)?);
    }
    let manifest = Manifest {
        software: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: plan.master_seed,
        n_rep: plan.n_rep,
        plan_hash: plan.hash()?,
        fixture_hashes,
        results_hash: sha256_hex(&summary),
    };
    let mpath = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgm::{cross_design, LambdaGrid, ModelStructureConfig, ParamValue};
    use crate::inference::ConsideredParameterSet;

    fn ordinal_dgms(pairs: &[(&[f64], &[f64])], ns: &[f64]) -> Vec<DgmInstance> {
        let mut out = Vec::new();
        for (i, (p1, p2)) in pairs.iter().enumerate() {
            let mut joint = indexmap::IndexMap::new();
            joint.insert("pi1".to_string(), ParamValue::Tuple(p1.to_vec()));
            joint.insert("pi2".to_string(), ParamValue::Tuple(p2.to_vec()));
            let mut pair = LambdaGrid::constant("pi", ParamValue::Joint(joint));
            pair.levels[0].label = Some(format!("pair{i}"));
            let grids = [
                pair,
                LambdaGrid::constant("K", ParamValue::Scalar(p1.len() as f64)),
                LambdaGrid::constant("n_groups", ParamValue::Scalar(2.0)),
                LambdaGrid::scalar("n_obs", ns),
            ];
            out.extend(
                cross_design(
                    &ConsideredParameterSet::researcher_only(),
                    &ModelStructureConfig::new(Family::OrdinalTwoArm),
                    &grids,
                    crate::dgm::CrossRule::FullCross,
                )
                .unwrap(),
            );
        }
        out
    }

    const FLAT: [f64; 4] = [0.25; 4];
    const SKEW: [f64; 4] = [0.1, 0.2, 0.3, 0.4];

    fn plan(methods: Vec<MethodId>, n_rep: usize) -> StudyPlan {
        StudyPlan::new(
            ordinal_dgms(&[(&FLAT, &FLAT), (&SKEW, &FLAT)], &[40.0]),
            methods,
            vec![Measure::Power { alpha: 0.05 }],
            n_rep,
            7,
        )
    }

    #[test]
    fn record_cardinality() {
        let p = plan(vec![MethodId::Chisq, MethodId::Wilcoxon], 3);
        let recs = run_study(&p, Some(2)).unwrap();
        assert_eq!(recs.len(), 12);
        assert!(recs
            .windows(2)
            .all(|w| (w[0].dgm, w[0].rep) <= (w[1].dgm, w[1].rep)));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let p = plan(
            vec![MethodId::Chisq, MethodId::FisherMc, MethodId::PoLogit],
            40,
        );
        let a = run_study(&p, Some(1)).unwrap();
        let b = run_study(&p, Some(4)).unwrap();
        assert_eq!(a, b);
        let sa = summary_csv_bytes(&summarize(&a, &p).unwrap()).unwrap();
        let sb = summary_csv_bytes(&summarize(&b, &p).unwrap()).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn more_reps_keep_earlier_records() {
        let small = plan(vec![MethodId::Wilcoxon], 5);
        let mut big = small.clone();
        big.n_rep = 9;
        let a = run_study(&small, None).unwrap();
        let b = run_study(&big, None).unwrap();
        for r in &a {
            assert!(b.contains(r));
        }
    }

    #[test]
    fn power_round_trips_from_records() {
        let p = plan(vec![MethodId::Wilcoxon], 200);
        let recs = run_study(&p, None).unwrap();
        let sums = summarize(&recs, &p).unwrap();
        for (d, s) in sums.iter().enumerate() {
            let ps: Vec<f64> = recs
                .iter()
                .filter(|r| r.dgm == d && r.valid)
                .filter_map(|r| r.p_value)
                .collect();
            let rej = ps.iter().filter(|&&x| x <= 0.05).count() as f64 / ps.len() as f64;
            assert_eq!(s.estimate, Some(rej));
        }
        assert_eq!(sums[0].covariate_value, Some(0.0));
    }

    #[test]
    fn validity_filter_and_exclusion() {
        let rare: [f64; 4] = [0.497, 0.497, 0.003, 0.003];
        let mut p = StudyPlan::new(
            ordinal_dgms(&[(&rare, &rare), (&FLAT, &FLAT)], &[20.0]),
            vec![MethodId::Chisq],
            vec![Measure::Power { alpha: 0.05 }],
            100,
            3,
        );
        p.validity_filter = ValidityFilter::AllCategoriesObserved;
        let recs = run_study(&p, None).unwrap();
        let sums = summarize(&recs, &p).unwrap();
        assert!(sums[0].excluded);
        assert_eq!(sums[0].estimate, None);
        assert!(!sums[1].excluded);
        let csv = String::from_utf8(summary_csv_bytes(&sums).unwrap()).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn exclusion_threshold_is_exact() {
        let p = StudyPlan {
            min_valid_reps: Some(8000),
            ..plan(vec![MethodId::Wilcoxon], 10_000)
        };
        assert_eq!(p.min_valid(), 8000);
        assert_eq!(plan(vec![MethodId::Wilcoxon], 2000).min_valid(), 1600);
        assert_eq!(plan(vec![MethodId::Wilcoxon], 11).min_valid(), 9);
        let recs: Vec<RepRecord> = (0..7999)
            .map(|rep| RepRecord {
                dgm: 0,
                rep,
                method: MethodId::Wilcoxon,
                valid: true,
                invalid_reason: None,
                p_value: Some(0.5),
                value: None,
                failure: None,
            })
            .collect();
        let s = summarize(&recs, &p).unwrap();
        assert!(s[0].excluded);
    }

    #[test]
    fn filter_predicates() {
        let t =
            ContingencyTable::new(vec![1, 1, 1, 1, 1, 0, 1], vec![1, 2, 3, 4, 5, 0, 7]).unwrap();
        let data = SimulatedData::Ordinal(t);
        assert_eq!(
            filter_validity(&data, ValidityFilter::AllCategoriesObserved).unwrap(),
            Validity::Invalid("category 6 unobserved".into())
        );
        assert_eq!(
            filter_validity(&data, ValidityFilter::None).unwrap(),
            Validity::Valid
        );
        assert!(matches!(
            "bogus".parse::<ValidityFilter>(),
            Err(Error::UnknownPredicate(_))
        ));
    }

    #[test]
    fn measure_labels_parse_back() {
        for m in [
            Measure::Power { alpha: 0.05 },
            Measure::Power { alpha: 0.1 },
            Measure::Auc,
            Measure::Mean,
        ] {
            assert_eq!(m.label().parse::<Measure>().unwrap(), m);
        }
        assert!("bias".parse::<Measure>().is_err());
    }

    #[test]
    fn rejects_mismatched_method() {
        let p = plan(vec![MethodId::Tau2Dl], 3);
        assert!(run_study(&p, None).is_err());
    }

    #[test]
    fn export_writes_manifest() {
        let p = plan(vec![MethodId::Wilcoxon], 10);
        let recs = run_study(&p, None).unwrap();
        let sums = summarize(&recs, &p).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m1 = export_results(dir.path(), &p, &recs, &sums, &[]).unwrap();
        let m2 = export_results(dir.path(), &p, &recs, &sums, &[]).unwrap();
        assert_eq!(m1, m2);
        let back = read_summary_csv(&dir.path().join("summary.csv")).unwrap();
        assert_eq!(back.len(), sums.len());
        assert_eq!(back[0].estimate, sums[0].estimate);
        assert!(dir.path().join("records.jsonl").exists());
    }
}
