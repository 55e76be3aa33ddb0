//! Parameter inference from selected datasets and mapping to considered
//! parameter vectors.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dgm::{flatten_into, EventDist, ParamValue, ParameterVector, Params, Provenance};
use crate::error::{Error, Result};
use crate::families::estimate_ordinal_probs;
use crate::rng::seeded;
use crate::selection::{load_ordinal_table, DatasetRecord, Op, OrdinalFixtureRow};
use crate::table::ContingencyTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    Direct,
    Aggregated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "kebab-case")]
pub enum AggregationStrategy {
    RangeEquidistant { a: usize },
    RangeUniformSample { a: usize, seed: u64 },
    FitNormalSample { a: usize, seed: u64 },
}

impl AggregationStrategy {
    pub fn count(self) -> usize {
        match self {
            AggregationStrategy::RangeEquidistant { a }
            | AggregationStrategy::RangeUniformSample { a, .. }
            | AggregationStrategy::FitNormalSample { a, .. } => a,
        }
    }
}

/// Values of one parameter: one per dataset (direct) or A generated values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredValueSet {
    pub parameter: String,
    pub values: Vec<ParamValue>,
    pub mode: InferenceMode,
    /// Dataset ids; index-aligned with `values` in direct mode, the base
    /// datasets in aggregated mode.
    pub sources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<AggregationStrategy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl InferredValueSet {
    pub fn direct(parameter: &str, values: Vec<ParamValue>, sources: Vec<String>) -> Result<Self> {
        if values.len() != sources.len() {
            return Err(Error::input(format!(
                "`{parameter}`: {} values for {} datasets",
                values.len(),
                sources.len()
            )));
        }
        Ok(Self {
            parameter: parameter.to_string(),
            values,
            mode: InferenceMode::Direct,
            sources,
            strategy: None,
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Source label of value `i` for vector labelling.
    fn value_label(&self, i: usize) -> String {
        match self.mode {
            InferenceMode::Direct => self.sources[i].clone(),
            InferenceMode::Aggregated => format!("{}[{}]", self.parameter, i + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "design", rename_all = "kebab-case")]
pub enum MappingDesign {
    OneToOne,
    FullFactorial,
    /// Indices into the full Cartesian product (first set varies slowest).
    PartialFactorial {
        indices: Vec<usize>,
    },
}

/// The L considered parameter vectors of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsideredParameterSet {
    pub vectors: Vec<ParameterVector>,
    pub design: MappingDesign,
    /// Number of product cells collapsed into each vector.
    pub multiplicity: Vec<usize>,
}

impl ConsideredParameterSet {
    /// A single empty vector, for studies whose parameters are all
    /// researcher-specified.
    pub fn researcher_only() -> Self {
        Self {
            vectors: vec![ParameterVector::researcher_empty()],
            design: MappingDesign::OneToOne,
            multiplicity: vec![1],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.multiplicity.len() != self.vectors.len() {
            return Err(Error::input(
                "multiplicity length differs from vector count",
            ));
        }
        if let Some(first) = self.vectors.first() {
            let schema: Vec<&String> = first.entries.keys().collect();
            for v in &self.vectors[1..] {
                if v.entries.keys().collect::<Vec<_>>() != schema {
                    return Err(Error::input(format!(
                        "vector `{}` has a different parameter schema",
                        v.label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        set.validate()?;
        Ok(set)
    }
}

/// How a parameter's value is obtained from one dataset record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "kebab-case")]
pub enum Estimator {
    /// A number or list of numbers stored under `key`.
    Metadata { key: String },
    /// Sum of several numeric keys (e.g. total sample size from group sizes).
    Sum { keys: Vec<String> },
    /// Published per-group category probabilities from the payload table,
    /// producing the joint entry (`pi1`, `pi2`).
    OrdinalProbabilityPair,
    /// Per-group proportions estimated from a 2 x K count table under `key`,
    /// producing the joint entry (`pi1`, `pi2`).
    OrdinalProportions { key: String },
    /// Total sample size n1 + n2 from the payload table.
    PayloadTotalN,
    /// Number of categories of the payload probability table.
    PayloadCategories,
    /// Expression-parameter file named by the payload, producing the joint
    /// entry (`mu`, `phi`) of file references.
    ExpressionFile,
    /// Maximum-likelihood exponential rate of uncensored event times.
    ExponentialRate { key: String },
    /// Largest observed follow-up time, as a censoring bound.
    CensoringBound { key: String },
}

impl Estimator {
    /// Parameter ids written when the estimator is bound to `param`.
    pub fn produces(&self, param: &str) -> Vec<String> {
        match self {
            Estimator::OrdinalProbabilityPair | Estimator::OrdinalProportions { .. } => {
                vec!["pi1".to_string(), "pi2".to_string()]
            }
            Estimator::ExpressionFile => vec!["mu".to_string(), "phi".to_string()],
            _ => vec![param.to_string()],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Estimator::Metadata { .. } => "metadata",
            Estimator::Sum { .. } => "sum",
            Estimator::OrdinalProbabilityPair => "ordinal-probability-pair",
            Estimator::OrdinalProportions { .. } => "ordinal-proportions",
            Estimator::PayloadTotalN => "payload-total-n",
            Estimator::PayloadCategories => "payload-categories",
            Estimator::ExpressionFile => "expression-file",
            Estimator::ExponentialRate { .. } => "exponential-rate",
            Estimator::CensoringBound { .. } => "censoring-bound",
        }
    }
}

/// Resolves record payloads (`file` or `file#row-id`) relative to a base
/// directory, caching parsed probability tables.
#[derive(Debug, Default)]
pub struct PayloadResolver {
    base: PathBuf,
    tables: RefCell<HashMap<PathBuf, Vec<OrdinalFixtureRow>>>,
}

impl PayloadResolver {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        Self {
            base: base.into(),
            tables: RefCell::new(HashMap::new()),
        }
    }

    pub fn path(&self, payload: &str) -> PathBuf {
        let file = payload.split('#').next().unwrap_or(payload);
        self.base.join(file)
    }

    pub fn ordinal_row(
        &self,
        record: &DatasetRecord,
    ) -> std::result::Result<OrdinalFixtureRow, String> {
        let payload = record.payload.as_deref().ok_or("record has no payload")?;
        let path = self.path(payload);
        let row_id = payload
            .split_once('#')
            .map_or(record.id.as_str(), |(_, id)| id);
        let mut cache = self.tables.borrow_mut();
        if !cache.contains_key(&path) {
            let rows = load_ordinal_table(&path).map_err(|e| e.to_string())?;
            cache.insert(path.clone(), rows);
        }
        cache[&path]
            .iter()
            .find(|r| r.dataset_id == row_id)
            .cloned()
            .ok_or_else(|| format!("row `{row_id}` not in {}", path.display()))
    }
}

fn numbers(v: &Value) -> Option<ParamValue> {
    match v {
        Value::Number(n) => n.as_f64().map(ParamValue::Scalar),
        Value::Array(items) => items
            .iter()
            .map(Value::as_f64)
            .collect::<Option<Vec<f64>>>()
            .map(ParamValue::Tuple),
        _ => None,
    }
}

fn joint(pairs: [(&str, ParamValue); 2]) -> ParamValue {
    ParamValue::Joint(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn estimate(
    estimator: &Estimator,
    record: &DatasetRecord,
    resolver: &PayloadResolver,
) -> std::result::Result<ParamValue, String> {
    let meta = |key: &str| {
        record
            .metadata
            .get(key)
            .ok_or_else(|| format!("metadata key `{key}` missing"))
    };
    let times = |key: &str| -> std::result::Result<Vec<f64>, String> {
        match numbers(meta(key)?) {
            Some(ParamValue::Tuple(t)) if !t.is_empty() => Ok(t),
            _ => Err(format!("`{key}` must be a non-empty list of numbers")),
        }
    };
    match estimator {
        Estimator::Metadata { key } => {
            numbers(meta(key)?).ok_or_else(|| format!("`{key}` is not numeric"))
        }
        Estimator::Sum { keys } => keys
            .iter()
            .map(|k| {
                meta(k)?
                    .as_f64()
                    .ok_or_else(|| format!("`{k}` is not a number"))
            })
            .sum::<std::result::Result<f64, String>>()
            .map(ParamValue::Scalar),
        Estimator::OrdinalProbabilityPair => {
            let row = resolver.ordinal_row(record)?;
            Ok(joint([
                ("pi1", ParamValue::Tuple(row.pi1)),
                ("pi2", ParamValue::Tuple(row.pi2)),
            ]))
        }
        Estimator::OrdinalProportions { key } => {
            let rows: Vec<Vec<u64>> = serde_json::from_value(meta(key)?.clone())
                .map_err(|_| format!("`{key}` must be a 2 x K count table"))?;
            let [a, b]: [Vec<u64>; 2] = rows
                .try_into()
                .map_err(|_| format!("`{key}` must have two rows"))?;
            let table = ContingencyTable::new(a, b).map_err(|e| e.to_string())?;
            let (p1, p2) = estimate_ordinal_probs::<f64>(&table).map_err(|e| e.to_string())?;
            Ok(joint([
                ("pi1", ParamValue::Tuple(p1)),
                ("pi2", ParamValue::Tuple(p2)),
            ]))
        }
        Estimator::PayloadTotalN => {
            let row = resolver.ordinal_row(record)?;
            match (row.n1, row.n2) {
                (Some(a), Some(b)) => Ok(ParamValue::Scalar((a + b) as f64)),
                _ => Err("group sizes not reported".to_string()),
            }
        }
        Estimator::PayloadCategories => Ok(ParamValue::Scalar(
            resolver.ordinal_row(record)?.pi1.len() as f64,
        )),
        Estimator::ExpressionFile => {
            let payload = record.payload.as_deref().ok_or("record has no payload")?;
            let path = resolver.path(payload);
            if !path.is_file() {
                return Err(format!("{} not found", path.display()));
            }
            let p = path.display().to_string();
            Ok(joint([
                ("mu", ParamValue::Ref(p.clone())),
                ("phi", ParamValue::Ref(p)),
            ]))
        }
        Estimator::ExponentialRate { key } => {
            let t = times(key)?;
            let total: f64 = t.iter().sum();
            if !(total > 0.0) {
                return Err("event times must sum to a positive value".to_string());
            }
            Ok(ParamValue::Scalar(t.len() as f64 / total))
        }
        Estimator::CensoringBound { key } => Ok(ParamValue::Scalar(
            times(key)?.into_iter().fold(f64::NEG_INFINITY, f64::max),
        )),
    }
}

/// One value per dataset for every bound parameter, in dataset order.
pub fn direct_infer(
    datasets: &[DatasetRecord],
    estimators: &IndexMap<String, Estimator>,
    resolver: &PayloadResolver,
) -> Result<Vec<InferredValueSet>> {
    let sources: Vec<String> = datasets.iter().map(|d| d.id.clone()).collect();
    estimators
        .iter()
        .map(|(param, est)| {
            let values = datasets
                .iter()
                .map(|d| {
                    estimate(est, d, resolver).map_err(|reason| Error::Estimator {
                        estimator: est.name().to_string(),
                        dataset: d.id.clone(),
                        reason,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            InferredValueSet::direct(param, values, sources.clone())
        })
        .collect()
}

/// Generates A values of a scalar parameter from its direct values.
pub fn aggregate_infer(
    base: &InferredValueSet,
    strategy: AggregationStrategy,
) -> Result<InferredValueSet> {
    let a = strategy.count();
    if a < 1 {
        return Err(Error::input("aggregation needs A >= 1"));
    }
    let xs: Vec<f64> = base
        .values
        .iter()
        .map(|v| {
            v.as_scalar().ok_or_else(|| {
                Error::input(format!(
                    "`{}`: only scalar values can be aggregated",
                    base.parameter
                ))
            })
        })
        .collect::<Result<_>>()?;
    if xs.is_empty() {
        return Err(Error::input(format!("`{}` has no values", base.parameter)));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut warnings = Vec::new();
    let constant = |warnings: &mut Vec<String>, v: f64, why: &str| {
        warnings.push(format!(
            "`{}`: {why}; using the constant {v}",
            base.parameter
        ));
        vec![v; a]
    };
    let values = match strategy {
        AggregationStrategy::RangeEquidistant { .. } if lo == hi => {
            constant(&mut warnings, lo, "zero range")
        }
        AggregationStrategy::RangeEquidistant { .. } if a == 1 => vec![lo + (hi - lo) / 2.0],
        AggregationStrategy::RangeEquidistant { .. } => {
            let step = (hi - lo) / (a - 1) as f64;
            (0..a)
                .map(|i| if i == a - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
        AggregationStrategy::RangeUniformSample { .. } if lo == hi => {
            constant(&mut warnings, lo, "zero range")
        }
        AggregationStrategy::RangeUniformSample { seed, .. } => {
            let u = Uniform::new_inclusive(lo, hi).expect("lo < hi");
            let mut rng = seeded(seed);
            (0..a).map(|_| u.sample(&mut rng)).collect()
        }
        AggregationStrategy::FitNormalSample { seed, .. } => {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            if sd > 0.0 {
                let d = Normal::new(mean, sd).expect("sd > 0");
                let mut rng = seeded(seed);
                (0..a).map(|_| d.sample(&mut rng)).collect()
            } else {
                constant(&mut warnings, mean, "zero variance")
            }
        }
    };
    Ok(InferredValueSet {
        parameter: base.parameter.clone(),
        values: values.into_iter().map(ParamValue::Scalar).collect(),
        mode: InferenceMode::Aggregated,
        sources: base.sources.clone(),
        strategy: Some(strategy),
        warnings,
    })
}

fn source_datasets(set: &InferredValueSet, i: usize) -> Vec<String> {
    match set.mode {
        InferenceMode::Direct => vec![set.sources[i].clone()],
        InferenceMode::Aggregated => set.sources.clone(),
    }
}

fn build_vector(sets: &[InferredValueSet], picks: &[usize]) -> Result<ParameterVector> {
    let mut entries = Params::new();
    let mut labels: Vec<String> = Vec::new();
    let mut datasets = BTreeSet::new();
    for (set, &i) in sets.iter().zip(picks) {
        flatten_into(&mut entries, &set.parameter, &set.values[i])?;
        let l = set.value_label(i);
        if !labels.contains(&l) {
            labels.push(l);
        }
        datasets.extend(source_datasets(set, i));
    }
    let single_direct = sets.iter().all(|s| s.mode == InferenceMode::Direct) && labels.len() == 1;
    let provenance = if single_direct {
        Provenance::Dataset {
            id: labels[0].clone(),
        }
    } else {
        Provenance::Aggregated {
            sources: datasets.into_iter().collect(),
        }
    };
    Ok(ParameterVector {
        label: labels.join("+"),
        entries,
        provenance,
    })
}

/// Combines value sets into considered parameter vectors.
///
/// One-to-one zips direct sets by dataset. Factorial designs take the
/// Cartesian product (first set slowest) and collapse identical vectors,
/// recording how many product cells each one stands for.
pub fn map_to_considered_vectors(
    value_sets: &[InferredValueSet],
    design: MappingDesign,
) -> Result<ConsideredParameterSet> {
    if value_sets.is_empty() {
        return Err(Error::input("no value sets to map"));
    }
    if let Some(s) = value_sets.iter().find(|s| s.is_empty()) {
        return Err(Error::input(format!("`{}` has no values", s.parameter)));
    }
    match &design {
        MappingDesign::OneToOne => {
            if let Some(s) = value_sets.iter().find(|s| s.mode != InferenceMode::Direct) {
                return Err(Error::input(format!(
                    "one-to-one mapping needs direct sets; `{}` is aggregated",
                    s.parameter
                )));
            }
            let sources = &value_sets[0].sources;
            if let Some(s) = value_sets.iter().find(|s| &s.sources != sources) {
                return Err(Error::input(format!(
                    "`{}` is not aligned with `{}` by dataset",
                    s.parameter, value_sets[0].parameter
                )));
            }
            let vectors = (0..sources.len())
                .map(|r| build_vector(value_sets, &vec![r; value_sets.len()]))
                .collect::<Result<Vec<_>>>()?;
            Ok(ConsideredParameterSet {
                multiplicity: vec![1; vectors.len()],
                vectors,
                design,
            })
        }
        MappingDesign::FullFactorial | MappingDesign::PartialFactorial { .. } => {
            let sizes: Vec<usize> = value_sets.iter().map(InferredValueSet::len).collect();
            let total: usize = sizes.iter().product();
            let cells: Vec<usize> = match &design {
                MappingDesign::PartialFactorial { indices } => {
                    if let Some(bad) = indices.iter().find(|&&i| i >= total) {
                        return Err(Error::input(format!(
                            "factorial index {bad} outside the {total}-cell product"
                        )));
                    }
                    indices.clone()
                }
                _ => (0..total).collect(),
            };
            let mut vectors: Vec<ParameterVector> = Vec::new();
            let mut multiplicity: Vec<usize> = Vec::new();
            for cell in cells {
                // mixed-radix decode, last set fastest
                let mut picks = vec![0; sizes.len()];
                let mut rest = cell;
                for (p, &s) in picks.iter_mut().zip(&sizes).rev() {
                    *p = rest % s;
                    rest /= s;
                }
                let v = build_vector(value_sets, &picks)?;
                match vectors.iter().position(|u| u.entries == v.entries) {
                    Some(j) => multiplicity[j] += 1,
                    None => {
                        vectors.push(v);
                        multiplicity.push(1);
                    }
                }
            }
            Ok(ConsideredParameterSet {
                vectors,
                design,
                multiplicity,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionFamily {
    Exponential,
    Weibull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFit {
    pub family: DistributionFamily,
    /// Hazard-scale rate: the exponential rate, or 1 / Weibull scale.
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<f64>,
    pub log_likelihood: f64,
    pub aic: f64,
}

impl CandidateFit {
    pub fn event_dist(&self) -> EventDist {
        match (self.family, self.shape) {
            (DistributionFamily::Weibull, Some(shape)) => EventDist::Weibull { shape },
            _ => EventDist::Exponential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionChoice {
    pub chosen: CandidateFit,
    pub fits: Vec<CandidateFit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

fn fit_exponential(t: &[f64]) -> CandidateFit {
    let n = t.len() as f64;
    let sum: f64 = t.iter().sum();
    let rate = n / sum;
    let ll = n * rate.ln() - rate * sum;
    CandidateFit {
        family: DistributionFamily::Exponential,
        rate,
        shape: None,
        log_likelihood: ll,
        aic: 2.0 - 2.0 * ll,
    }
}

fn fit_weibull(t: &[f64]) -> std::result::Result<CandidateFit, String> {
    let n = t.len() as f64;
    // work on t / max(t) so t^k stays bounded
    let top = t.iter().copied().fold(0.0, f64::max);
    let z: Vec<f64> = t.iter().map(|&x| x / top).collect();
    let logs: Vec<f64> = z.iter().map(|x| x.ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / n;
    // profile score in the shape; increasing in k
    let score = |k: f64| {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (&x, &l) in z.iter().zip(&logs) {
            let p = x.powf(k);
            s0 += p;
            s1 += p * l;
        }
        s1 / s0 - 1.0 / k - mean_log
    };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while score(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err("weibull shape diverged".to_string());
        }
    }
    if score(lo) > 0.0 {
        return Err("weibull shape below 1e-3".to_string());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let k = 0.5 * (lo + hi);
    let mean_pow = z.iter().map(|x| x.powf(k)).sum::<f64>() / n;
    let scale = top * mean_pow.powf(1.0 / k);
    let sum_log_t: f64 = t.iter().map(|x| x.ln()).sum();
    let ll = n * k.ln() - n * k * scale.ln() + (k - 1.0) * sum_log_t
        - t.iter().map(|x| (x / scale).powf(k)).sum::<f64>();
    if !ll.is_finite() {
        return Err("non-finite weibull likelihood".to_string());
    }
    Ok(CandidateFit {
        family: DistributionFamily::Weibull,
        rate: 1.0 / scale,
        shape: Some(k),
        log_likelihood: ll,
        aic: 4.0 - 2.0 * ll,
    })
}

pub const MIN_FIT_OBSERVATIONS: usize = 10;

/// ML fit of each candidate on uncensored times; the minimum-AIC fit wins.
pub fn select_distribution(
    times: &[f64],
    candidates: &[DistributionFamily],
) -> Result<DistributionChoice> {
    let t: Vec<f64> = times
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > 0.0)
        .collect();
    if t.len() < MIN_FIT_OBSERVATIONS {
        return Err(Error::FitFailed(format!(
            "{} usable observations, at least {MIN_FIT_OBSERVATIONS} needed",
            t.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::FitFailed("no candidate families".to_string()));
    }
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for &c in candidates {
        match c {
            DistributionFamily::Exponential => fits.push(fit_exponential(&t)),
            DistributionFamily::Weibull => match fit_weibull(&t) {
                Ok(f) => fits.push(f),
                Err(e) => failures.push(e),
            },
        }
    }
    let chosen = fits
        .iter()
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .cloned()
        .ok_or_else(|| Error::FitFailed(failures.join("; ")))?;
    Ok(DistributionChoice {
        chosen,
        fits,
        failures,
    })
}

/// A scalar condition on one parameter, or on one component of a tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub op: Op,
    pub value: f64,
}

impl Condition {
    fn holds(&self, v: &ParameterVector) -> Option<bool> {
        let p = v.entries.get(&self.param)?;
        let x = match (p, self.index) {
            (ParamValue::Scalar(x), None) => *x,
            (ParamValue::Tuple(t), Some(i)) => *t.get(i)?,
            _ => return None,
        };
        Some(self.op.eval(&Value::from(x), &Value::from(self.value)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum PlausibilityRule {
    /// Every numeric component within [min, max].
    Bounds {
        param: String,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
    },
    /// Every numeric component strictly positive.
    AllPositive { param: String },
    /// Components sum to `target` within `tol`.
    SumsTo {
        param: String,
        target: f64,
        tol: f64,
    },
    /// Flags vectors where all conditions hold at once.
    Forbid { name: String, all: Vec<Condition> },
}

impl PlausibilityRule {
    pub fn name(&self) -> String {
        match self {
            PlausibilityRule::Bounds { param, .. } => format!("bounds({param})"),
            PlausibilityRule::AllPositive { param } => format!("all-positive({param})"),
            PlausibilityRule::SumsTo { param, .. } => format!("sums-to({param})"),
            PlausibilityRule::Forbid { name, .. } => name.clone(),
        }
    }

    fn check(&self, v: &ParameterVector) -> Option<String> {
        let nums = |param: &str| v.entries.get(param).map(ParamValue::numbers);
        match self {
            PlausibilityRule::Bounds { param, min, max } => {
                let xs = nums(param)?;
                let bad: Vec<f64> = xs
                    .into_iter()
                    .filter(|x| min.is_some_and(|m| *x < m) || max.is_some_and(|m| *x > m))
                    .collect();
                (!bad.is_empty()).then(|| format!("`{param}` values {bad:?} out of bounds"))
            }
            PlausibilityRule::AllPositive { param } => {
                let xs = nums(param)?;
                let bad: Vec<usize> = (0..xs.len()).filter(|&i| !(xs[i] > 0.0)).collect();
                (!bad.is_empty()).then(|| format!("`{param}` has non-positive entries at {bad:?}"))
            }
            PlausibilityRule::SumsTo { param, target, tol } => {
                let s: f64 = nums(param)?.iter().sum();
                ((s - target).abs() > *tol).then(|| format!("`{param}` sums to {s}"))
            }
            PlausibilityRule::Forbid { all, .. } => {
                let hit = all.iter().all(|c| c.holds(v) == Some(true));
                hit.then(|| "forbidden combination".to_string())
            }
        }
    }

    fn params(&self) -> Vec<&str> {
        match self {
            PlausibilityRule::Bounds { param, .. }
            | PlausibilityRule::AllPositive { param }
            | PlausibilityRule::SumsTo { param, .. } => vec![param],
            PlausibilityRule::Forbid { all, .. } => all.iter().map(|c| c.param.as_str()).collect(),
        }
    }
}

/// User-supplied check run alongside the declarative rules.
pub trait PlausibilityHook: Sync {
    fn name(&self) -> &str;
    fn check(&self, vector: &ParameterVector) -> Option<String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub vector: usize,
    pub label: String,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityReport {
    pub violations: Vec<Violation>,
}

impl PlausibilityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn plausibility_check(
    set: &ConsideredParameterSet,
    rules: &[PlausibilityRule],
    hooks: &[&dyn PlausibilityHook],
) -> PlausibilityReport {
    let mut report = PlausibilityReport::default();
    for (i, v) in set.vectors.iter().enumerate() {
        let mut push = |rule: String, detail: String| {
            report.violations.push(Violation {
                vector: i,
                label: v.label.clone(),
                rule,
                detail,
            })
        };
        for r in rules {
            if let Some(missing) = r.params().into_iter().find(|p| !v.entries.contains_key(*p)) {
                push(r.name(), format!("parameter `{missing}` missing"));
            } else if let Some(d) = r.check(v) {
                push(r.name(), d);
            }
        }
        for h in hooks {
            if let Some(d) = h.check(v) {
                push(h.name().to_string(), d);
            }
        }
    }
    report
}
