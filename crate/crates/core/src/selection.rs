//! Dataset screening, count bounds and subset-level rules.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::seeded;

/// One candidate dataset with its screening metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub metadata: IndexMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: String::new(),
            metadata: IndexMap::new(),
            payload: None,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.metadata.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriterionLevel {
    Dataset,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Requirement {
    #[serde(rename = "R1-accessibility", alias = "R1")]
    R1Accessibility,
    #[serde(rename = "R2-domain", alias = "R2")]
    R2Domain,
    #[serde(rename = "R3-information", alias = "R3")]
    R3Information,
}

impl Requirement {
    pub fn short(self) -> &'static str {
        match self {
            Requirement::R1Accessibility => "R1",
            Requirement::R2Domain => "R2",
            Requirement::R3Information => "R3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Inclusion,
    Exclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "=", alias = "==")]
    Eq,
    #[serde(rename = "!=", alias = "≠")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "in")]
    In,
    #[serde(rename = "has")]
    Has,
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

impl Op {
    /// Applies `actual op expected`. Incomparable operands evaluate to false.
    pub fn eval(self, actual: &Value, expected: &Value) -> bool {
        let order = || match (actual, expected) {
            (Value::String(a), Value::String(b)) => Some(a.cmp(b)),
            _ => actual.as_f64()?.partial_cmp(&expected.as_f64()?),
        };
        match self {
            Op::Eq => values_equal(actual, expected),
            Op::Ne => !values_equal(actual, expected),
            Op::Lt => order().is_some_and(|o| o.is_lt()),
            Op::Le => order().is_some_and(|o| o.is_le()),
            Op::Gt => order().is_some_and(|o| o.is_gt()),
            Op::Ge => order().is_some_and(|o| o.is_ge()),
            Op::In => match expected {
                Value::Array(items) => items.iter().any(|v| values_equal(actual, v)),
                Value::String(s) => actual.as_str().is_some_and(|a| s.contains(a)),
                _ => false,
            },
            Op::Has => match actual {
                Value::Array(items) => items.iter().any(|v| values_equal(v, expected)),
                Value::Object(map) => expected.as_str().is_some_and(|k| map.contains_key(k)),
                Value::String(s) => expected.as_str().is_some_and(|e| s.contains(e)),
                _ => false,
            },
        }
    }
}

/// A declarative eligibility predicate over one metadata key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityCriterion {
    pub id: String,
    #[serde(default = "default_level")]
    pub level: CriterionLevel,
    pub requirement: Requirement,
    pub phase: Phase,
    pub key: String,
    pub op: Op,
    pub value: Value,
    #[serde(default)]
    pub note: String,
}

fn default_level() -> CriterionLevel {
    CriterionLevel::Dataset
}

impl EligibilityCriterion {
    pub fn new(
        id: &str,
        requirement: Requirement,
        phase: Phase,
        key: &str,
        op: Op,
        value: impl Into<Value>,
    ) -> Self {
        Self {
            id: id.to_string(),
            level: CriterionLevel::Dataset,
            requirement,
            phase,
            key: key.to_string(),
            op,
            value: value.into(),
            note: String::new(),
        }
    }

    /// `None` if the record lacks the key; otherwise whether it stays in.
    pub fn admits(&self, record: &DatasetRecord) -> Option<bool> {
        let actual = record.metadata.get(&self.key)?;
        let hit = self.op.eval(actual, &self.value);
        Some(match self.phase {
            Phase::Inclusion => hit,
            Phase::Exclusion => !hit,
        })
    }
}

pub const UNASSESSABLE_STAGE: &str = "unassessable";
pub const COUNT_BOUND_STAGE: &str = "count-bound";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStage {
    pub criterion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<Requirement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    pub assessed: usize,
    pub removed: usize,
    pub remaining: usize,
}

/// Attrition record of a screening run, in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLog {
    pub initial: usize,
    pub stages: Vec<SelectionStage>,
    pub final_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SelectionLog {
    pub fn total_removed(&self) -> usize {
        self.stages.iter().map(|s| s.removed).sum()
    }

    pub fn balances(&self) -> bool {
        self.initial == self.total_removed() + self.final_ids.len()
    }

    /// Records remaining after the named stage.
    pub fn remaining_after(&self, criterion: &str) -> Option<usize> {
        self.stages
            .iter()
            .find(|s| s.criterion == criterion)
            .map(|s| s.remaining)
    }

    /// Appends a down-selection stage after [`enforce_count_bounds`].
    pub fn record_bounds(&mut self, outcome: &CountBound) {
        if let CountBound::Downselected { records, seed, .. } = outcome {
            let before = self.final_ids.len();
            self.stages.push(SelectionStage {
                criterion: COUNT_BOUND_STAGE.to_string(),
                requirement: None,
                phase: None,
                assessed: before,
                removed: before - records.len(),
                remaining: records.len(),
            });
            self.final_ids = records.iter().map(|r| r.id.clone()).collect();
            self.seed = Some(*seed);
        }
    }

    /// Plain-text flow summary.
    pub fn prisma_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Records identified: {}", self.initial);
        for st in &self.stages {
            let tag = match (st.requirement, st.phase) {
                (Some(r), Some(p)) => format!(" [{}, {}]", r.short(), phase_name(p)),
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "  {}{}: assessed {}, removed {}, remaining {}",
                st.criterion, tag, st.assessed, st.removed, st.remaining
            );
        }
        let _ = writeln!(s, "Records included: {}", self.final_ids.len());
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "Down-selection seed: {seed}");
        }
        s
    }
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Inclusion => "inclusion",
        Phase::Exclusion => "exclusion",
    }
}

/// Applies dataset-level criteria in order.
///
/// A record missing a criterion's key is set aside when that criterion is
/// reached and removed at a final `unassessable` stage. A key that no record
/// declares is a configuration error.
pub fn screen(
    database: &[DatasetRecord],
    criteria: &[EligibilityCriterion],
) -> Result<(Vec<DatasetRecord>, SelectionLog)> {
    let mut ids = HashSet::new();
    for r in database {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::input(format!("duplicate record id `{}`", r.id)));
        }
    }
    let declared: BTreeSet<&str> = database
        .iter()
        .flat_map(|r| r.metadata.keys().map(String::as_str))
        .collect();
    for c in criteria {
        if c.level != CriterionLevel::Dataset {
            return Err(Error::config(format!(
                "criterion `{}` is subset-level; screening takes dataset-level criteria",
                c.id
            )));
        }
        if !declared.contains(c.key.as_str()) {
            return Err(Error::UndeclaredKey {
                criterion: c.id.clone(),
                key: c.key.clone(),
            });
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Active,
        Unassessable,
    }
    let mut pool: Vec<(usize, State)> = (0..database.len()).map(|i| (i, State::Active)).collect();
    let mut stages = Vec::with_capacity(criteria.len() + 1);
    for c in criteria {
        let mut assessed = 0;
        let before = pool.len();
        pool.retain_mut(|(i, state)| {
            if *state == State::Unassessable {
                return true;
            }
            match c.admits(&database[*i]) {
                None => {
                    *state = State::Unassessable;
                    true
                }
                Some(keep) => {
                    assessed += 1;
                    keep
                }
            }
        });
        stages.push(SelectionStage {
            criterion: c.id.clone(),
            requirement: Some(c.requirement),
            phase: Some(c.phase),
            assessed,
            removed: before - pool.len(),
            remaining: pool.len(),
        });
    }
    let unassessable = pool
        .iter()
        .filter(|(_, s)| *s == State::Unassessable)
        .count();
    if unassessable > 0 {
        let before = pool.len();
        pool.retain(|(_, s)| *s == State::Active);
        stages.push(SelectionStage {
            criterion: UNASSESSABLE_STAGE.to_string(),
            requirement: None,
            phase: None,
            assessed: before,
            removed: unassessable,
            remaining: pool.len(),
        });
    }
    let selected: Vec<DatasetRecord> = pool.iter().map(|(i, _)| database[*i].clone()).collect();
    let log = SelectionLog {
        initial: database.len(),
        stages,
        final_ids: selected.iter().map(|r| r.id.clone()).collect(),
        seed: None,
    };
    Ok((selected, log))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CountBound {
    Ok(Vec<DatasetRecord>),
    /// Fewer than the minimum; the database has to be expanded.
    TooFew {
        deficit: usize,
        records: Vec<DatasetRecord>,
    },
    Downselected {
        records: Vec<DatasetRecord>,
        dropped: Vec<String>,
        seed: u64,
    },
}

impl CountBound {
    pub fn records(&self) -> &[DatasetRecord] {
        match self {
            CountBound::Ok(r) => r,
            CountBound::TooFew { records, .. } => records,
            CountBound::Downselected { records, .. } => records,
        }
    }
}

/// Checks `min <= |selected| <= max`, drawing a seeded uniform subset of size
/// `max` (kept in database order) when there are too many.
pub fn enforce_count_bounds(
    selected: Vec<DatasetRecord>,
    min: usize,
    max: usize,
    seed: u64,
) -> Result<CountBound> {
    if min < 1 || min > max {
        return Err(Error::config(format!(
            "count bounds need 1 <= min <= max, got [{min}, {max}]"
        )));
    }
    let n = selected.len();
    if n < min {
        return Ok(CountBound::TooFew {
            deficit: min - n,
            records: selected,
        });
    }
    if n <= max {
        return Ok(CountBound::Ok(selected));
    }
    let mut keep = index::sample(&mut seeded(seed), n, max).into_vec();
    keep.sort_unstable();
    let mut kept = Vec::with_capacity(max);
    let mut dropped = Vec::with_capacity(n - max);
    let mut next = keep.iter().peekable();
    for (i, r) in selected.into_iter().enumerate() {
        if next.peek() == Some(&&i) {
            next.next();
            kept.push(r);
        } else {
            dropped.push(r.id);
        }
    }
    Ok(CountBound::Downselected {
        records: kept,
        dropped,
        seed,
    })
}

/// Subset-level rules choosing arms and the analysed outcome of one record.
///
/// Record metadata layout: `arms` is an array of `{"id", "n"}` objects, and
/// `outcomes` an array of objects with `id` plus whatever keys the rules read
/// (`priority`, a completeness flag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SubsetRule {
    /// Keep the `count` arms with the largest sizes.
    LargestArms {
        #[serde(default = "two")]
        count: usize,
    },
    /// Drop arms smaller than `min`.
    MinArmSize { min: f64 },
    /// Keep only outcomes whose `flag` is true.
    OutcomeComplete {
        #[serde(default = "complete_flag")]
        flag: String,
    },
    /// Prefer the outcome with the lowest `priority`.
    OutcomePriority,
}

fn two() -> usize {
    2
}

fn complete_flag() -> String {
    "complete".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetDescriptor {
    pub record: String,
    pub arms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
}

fn list_of_objects<'a>(
    record: &'a DatasetRecord,
    key: &str,
) -> Result<Vec<&'a serde_json::Map<String, Value>>> {
    match record.metadata.get(key) {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_object().ok_or_else(|| Error::SubsetRule {
                    record: record.id.clone(),
                    reason: format!("`{key}` entries must be objects"),
                })
            })
            .collect(),
        Some(_) => Err(Error::SubsetRule {
            record: record.id.clone(),
            reason: format!("`{key}` must be an array"),
        }),
    }
}

fn entry_id(record: &DatasetRecord, obj: &serde_json::Map<String, Value>) -> Result<String> {
    obj.get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::SubsetRule {
            record: record.id.clone(),
            reason: "entry without a string `id`".to_string(),
        })
}

/// Applies filters first, then orders the survivors by the preference rules
/// in declared order. Ties keep metadata order.
pub fn apply_subset_rules(
    record: &DatasetRecord,
    rules: &[SubsetRule],
) -> Result<SubsetDescriptor> {
    let err = |reason: String| Error::SubsetRule {
        record: record.id.clone(),
        reason,
    };
    let mut arms: Vec<(String, f64)> = Vec::new();
    for obj in list_of_objects(record, "arms")? {
        let n = obj
            .get("n")
            .and_then(Value::as_f64)
            .ok_or_else(|| err("arm without a numeric `n`".to_string()))?;
        arms.push((entry_id(record, obj)?, n));
    }
    let mut outcomes = list_of_objects(record, "outcomes")?;

    let mut required_arms = 2;
    for rule in rules {
        match rule {
            SubsetRule::MinArmSize { min } => arms.retain(|(_, n)| n >= min),
            SubsetRule::OutcomeComplete { flag } => {
                outcomes.retain(|o| o.get(flag).and_then(Value::as_bool).unwrap_or(false))
            }
            SubsetRule::LargestArms { count } => required_arms = *count,
            SubsetRule::OutcomePriority => {}
        }
    }
    for rule in rules {
        match rule {
            SubsetRule::LargestArms { count } => {
                // stable sort keeps declared order among equal sizes
                arms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
                arms.truncate(*count);
            }
            SubsetRule::OutcomePriority => outcomes.sort_by(|a, b| {
                let p = |o: &serde_json::Map<String, Value>| {
                    o.get("priority")
                        .and_then(Value::as_f64)
                        .unwrap_or(f64::INFINITY)
                };
                p(a).partial_cmp(&p(b)).unwrap_or(std::cmp::Ordering::Equal)
            }),
            _ => {}
        }
    }
    if arms.len() < required_arms {
        return Err(err(format!(
            "{} arm(s) left after rules, {required_arms} required",
            arms.len()
        )));
    }
    let has_outcome_rules = rules.iter().any(|r| {
        matches!(
            r,
            SubsetRule::OutcomeComplete { .. } | SubsetRule::OutcomePriority
        )
    });
    let outcome = match outcomes.first() {
        Some(o) => Some(entry_id(record, o)?),
        None if has_outcome_rules => return Err(err("no outcome left after rules".to_string())),
        None => None,
    };
    Ok(SubsetDescriptor {
        record: record.id.clone(),
        arms: arms.into_iter().map(|(id, _)| id).collect(),
        outcome,
    })
}

fn infer_cell(raw: &str) -> Value {
    let t = raw.trim();
    if t.is_empty() {
        return Value::Null;
    }
    match t {
        "true" | "TRUE" => return Value::Bool(true),
        "false" | "FALSE" => return Value::Bool(false),
        _ => {}
    }
    if let Ok(i) = t.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(f) = t.parse::<f64>() {
        return Value::from(f);
    }
    Value::String(t.to_string())
}

/// Reads a database from CSV (`id`, optional `source`/`payload`, remaining
/// columns as metadata; empty cells are treated as missing) or JSON lines.
pub fn load_records(path: &Path) -> Result<Vec<DatasetRecord>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let id_col = headers
            .iter()
            .position(|h| h == "id" || h == "dataset_id")
            .ok_or_else(|| Error::input(format!("{}: no `id` column", path.display())))?;
        let mut out = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let mut rec = DatasetRecord::new(&row[id_col]);
            for (h, cell) in headers.iter().zip(row.iter()) {
                match h {
                    _ if h == &headers[id_col] => {}
                    "source" => rec.source = cell.to_string(),
                    "payload" => rec.payload = Some(cell.to_string()).filter(|s| !s.is_empty()),
                    _ => {
                        let v = infer_cell(cell);
                        if !v.is_null() {
                            rec.metadata.insert(h.to_string(), v);
                        }
                    }
                }
            }
            out.push(rec);
        }
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::input(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn load_criteria(path: &Path) -> Result<Vec<EligibilityCriterion>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn write_records_jsonl(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row of an ordinal probability table: `dataset_id, publication,
/// condition, measure, n1, n2, p1_1..p1_K, p2_1..p2_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalFixtureRow {
    pub dataset_id: String,
    pub publication: String,
    pub condition: String,
    pub measure: String,
    pub n1: Option<u64>,
    pub n2: Option<u64>,
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
}

pub fn load_ordinal_table(path: &Path) -> Result<Vec<OrdinalFixtureRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| {
        col(name)
            .ok_or_else(|| Error::input(format!("{}: missing column `{name}`", path.display())))
    };
    let prob_cols =
        |g: usize| -> Vec<usize> { (1..).map_while(|k| col(&format!("p{g}_{k}"))).collect() };
    let (c1, c2) = (prob_cols(1), prob_cols(2));
    if c1.len() < 2 || c1.len() != c2.len() {
        return Err(Error::input(format!(
            "{}: expected matching p1_k and p2_k columns",
            path.display()
        )));
    }
    let id = need("dataset_id")?;
    let optional = |row: &csv::StringRecord, name: &str| {
        col(name)
            .map(|i| row[i].trim().to_string())
            .unwrap_or_default()
    };
    let count = |row: &csv::StringRecord, name: &str| -> Result<Option<u64>> {
        match col(name).map(|i| row[i].trim()) {
            None | Some("") | Some("NA") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::input(format!("bad `{name}` value `{v}`"))),
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let probs = |cols: &[usize]| -> Result<Vec<f64>> {
            cols.iter()
                .map(|&i| {
                    row[i].trim().parse::<f64>().map_err(|_| {
                        Error::input(format!("{}: bad probability `{}`", &row[id], &row[i]))
                    })
                })
                .collect()
        };
        out.push(OrdinalFixtureRow {
            dataset_id: row[id].trim().to_string(),
            publication: optional(&row, "publication"),
            condition: optional(&row, "condition"),
            measure: optional(&row, "measure"),
            n1: count(&row, "n1")?,
            n2: count(&row, "n2")?,
            pi1: probs(&c1)?,
            pi2: probs(&c2)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn crit(id: &str, phase: Phase, key: &str, op: Op, value: Value) -> EligibilityCriterion {
        EligibilityCriterion::new(id, Requirement::R2Domain, phase, key, op, value)
    }

    fn db() -> Vec<DatasetRecord> {
        vec![
            DatasetRecord::new("a").with("rct", true).with("n", 120),
            DatasetRecord::new("b").with("rct", false).with("n", 300),
            DatasetRecord::new("c").with("rct", true).with("n", 40),
            DatasetRecord::new("d").with("rct", true),
        ]
    }

    #[test]
    fn operators() {
        assert!(Op::Eq.eval(&json!(3), &json!(3.0)));
        assert!(Op::Ne.eval(&json!("x"), &json!("y")));
        assert!(Op::Le.eval(&json!(2), &json!(2)));
        assert!(!Op::Lt.eval(&json!("a"), &json!(2)));
        assert!(Op::In.eval(&json!("BRCA"), &json!(["KIRC", "BRCA"])));
        assert!(Op::Has.eval(&json!(["tumor", "normal"]), &json!("normal")));
        assert!(Op::Has.eval(&json!({"tumor": 3}), &json!("tumor")));
        let parsed: Vec<Op> = serde_json::from_str(r#"["≠","≤","≥","==","in"]"#).unwrap();
        assert_eq!(parsed, vec![Op::Ne, Op::Le, Op::Ge, Op::Eq, Op::In]);
    }

    #[test]
    fn screen_with_unassessable() {
        let criteria = [
            crit("rct", Phase::Inclusion, "rct", Op::Eq, json!(true)),
            crit("small", Phase::Exclusion, "n", Op::Lt, json!(50)),
        ];
        let (sel, log) = screen(&db(), &criteria).unwrap();
        assert_eq!(sel.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a"]);
        assert_eq!(log.stages[0].removed, 1);
        assert_eq!(log.stages[1].assessed, 2);
        assert_eq!(log.stages[1].removed, 1);
        assert_eq!(log.stages[2].criterion, UNASSESSABLE_STAGE);
        assert_eq!(log.stages[2].removed, 1);
        assert!(log.balances());
        assert!(log.prisma_text().contains("Records included: 1"));
    }

    #[test]
    fn empty_criteria_is_identity() {
        let (sel, log) = screen(&db(), &[]).unwrap();
        assert_eq!(sel.len(), 4);
        assert!(log.stages.is_empty());
        assert_eq!(log.initial, 4);
    }

    #[test]
    fn undeclared_key_is_config_error() {
        let c = [crit("x", Phase::Inclusion, "nope", Op::Eq, json!(1))];
        assert!(matches!(
            screen(&db(), &c),
            Err(Error::UndeclaredKey { .. })
        ));
    }

    #[test]
    fn count_bounds() {
        let recs: Vec<DatasetRecord> = (0..15)
            .map(|i| DatasetRecord::new(format!("r{i}")))
            .collect();
        assert!(matches!(
            enforce_count_bounds(recs.clone(), 3, 20, 0).unwrap(),
            CountBound::Ok(r) if r.len() == 15
        ));
        let a = enforce_count_bounds(recs.clone(), 3, 10, 7).unwrap();
        let b = enforce_count_bounds(recs.clone(), 3, 10, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records().len(), 10);
        assert!(matches!(
            enforce_count_bounds(recs[..2].to_vec(), 3, 20, 0).unwrap(),
            CountBound::TooFew { deficit: 1, .. }
        ));
        assert!(enforce_count_bounds(recs, 5, 4, 0).is_err());
    }

    #[test]
    fn downselection_logged() {
        let recs: Vec<DatasetRecord> = (0..6)
            .map(|i| DatasetRecord::new(format!("r{i}")).with("k", 1))
            .collect();
        let (sel, mut log) = screen(&recs, &[]).unwrap();
        let out = enforce_count_bounds(sel, 1, 4, 3).unwrap();
        log.record_bounds(&out);
        assert_eq!(log.final_ids.len(), 4);
        assert_eq!(log.seed, Some(3));
        assert!(log.balances());
    }

    fn trial() -> DatasetRecord {
        DatasetRecord::new("rosas2021")
            .with(
                "arms",
                json!([{"id": "A", "n": 294}, {"id": "B", "n": 144}, {"id": "C", "n": 30}]),
            )
            .with(
                "outcomes",
                json!([
                    {"id": "primary", "priority": 1, "complete": false},
                    {"id": "secondary", "priority": 2, "complete": true}
                ]),
            )
    }

    #[test]
    fn subset_rules() {
        let d = apply_subset_rules(&trial(), &[SubsetRule::LargestArms { count: 2 }]).unwrap();
        assert_eq!(d.arms, ["A", "B"]);
        let rules = [
            SubsetRule::OutcomePriority,
            SubsetRule::OutcomeComplete {
                flag: "complete".into(),
            },
        ];
        let d = apply_subset_rules(&trial(), &rules).unwrap();
        assert_eq!(d.outcome.as_deref(), Some("secondary"));
        let two = DatasetRecord::new("x")
            .with("arms", json!([{"id": "P", "n": 10}, {"id": "Q", "n": 12}]));
        assert_eq!(apply_subset_rules(&two, &[]).unwrap().arms, ["P", "Q"]);
        let too_few = [SubsetRule::MinArmSize { min: 200.0 }];
        assert!(matches!(
            apply_subset_rules(&trial(), &too_few),
            Err(Error::SubsetRule { .. })
        ));
    }

    #[test]
    fn subset_ties_keep_declared_order() {
        let r = DatasetRecord::new("t").with(
            "arms",
            json!([{"id": "X", "n": 50}, {"id": "Y", "n": 80}, {"id": "Z", "n": 50}]),
        );
        let d = apply_subset_rules(&r, &[SubsetRule::LargestArms { count: 2 }]).unwrap();
        assert_eq!(d.arms, ["Y", "X"]);
    }

    fn arb_db() -> impl Strategy<Value = Vec<DatasetRecord>> {
        prop::collection::vec((0i64..10, any::<bool>(), prop::option::of(0i64..5)), 1..40).prop_map(
            |rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (n, f, opt))| {
                        let mut r = DatasetRecord::new(format!("r{i}"))
                            .with("n", n)
                            .with("flag", f);
                        if let Some(o) = opt {
                            r = r.with("o", o);
                        }
                        r
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn log_balances_and_exclusion_monotone(db in arb_db(), cut in 0i64..10) {
            let base = [crit("flag", Phase::Inclusion, "flag", Op::Eq, json!(true))];
            let more = [
                base[0].clone(),
                crit("n", Phase::Exclusion, "n", Op::Ge, json!(cut)),
            ];
            let (a, la) = screen(&db, &base).unwrap();
            let (b, lb) = screen(&db, &more).unwrap();
            prop_assert!(la.balances() && lb.balances());
            let ids: HashSet<_> = a.iter().map(|r| &r.id).collect();
            prop_assert!(b.iter().all(|r| ids.contains(&r.id)));
        }

        #[test]
        fn exclusion_order_only_changes_attribution(db in arb_db(), c1 in 0i64..10, c2 in 0i64..5) {
            let e1 = crit("n", Phase::Exclusion, "n", Op::Gt, json!(c1));
            let e2 = crit("o", Phase::Exclusion, "o", Op::Lt, json!(c2));
            prop_assume!(db.iter().any(|r| r.metadata.contains_key("o")));
            let (a, _) = screen(&db, &[e1.clone(), e2.clone()]).unwrap();
            let (b, _) = screen(&db, &[e2, e1]).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
