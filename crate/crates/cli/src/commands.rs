use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use dgmsim::dgm::{cross_design, load_dgms, write_dgms_jsonl, DgmInstance};
use dgmsim::engine::{export_results, plan_inputs, run_study_with_progress, summarize, StudyPlan};
use dgmsim::inference::{
    aggregate_infer, direct_infer, map_to_considered_vectors, plausibility_check,
    ConsideredParameterSet, PayloadResolver,
};
use dgmsim::selection::{
    apply_subset_rules, enforce_count_bounds, load_criteria, load_records, screen,
    write_records_jsonl, CountBound,
};

use crate::config::{StudyConfig, VectorSource};
use crate::{report, Cli, CliError, Command};

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = StudyConfig::load(&cli.config)?;
    let out_dir = match &cli.out_dir {
        Some(d) => d.clone(),
        None => cfg.resolve(&cfg.output.dir),
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    match &cli.command {
        Command::Select => select(&cfg, &out_dir),
        Command::Infer { selected } => {
            let path = selected
                .clone()
                .unwrap_or_else(|| out_dir.join("selected.jsonl"));
            infer(&cfg, &path, &out_dir)
        }
        Command::Plan => plan(&cfg, &out_dir),
        Command::Run { dgms } => {
            let path = dgms.clone().unwrap_or_else(|| out_dir.join("dgms.jsonl"));
            run(&cfg, &path, &out_dir, cli.seed, cli.workers)
        }
        Command::Report { summary } => {
            let path = summary
                .clone()
                .unwrap_or_else(|| out_dir.join("summary.csv"));
            report::write_report(&path, &out_dir, &cfg.report.highlight)
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what} {} not found",
            path.display()
        )))
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn select(cfg: &StudyConfig, out_dir: &Path) -> Result<(), CliError> {
    let sel = cfg
        .selection
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [selection] section".into()))?;
    let db_path = cfg.resolve(&sel.database);
    let crit_path = cfg.resolve(&sel.criteria);
    require_file(&db_path, "database")?;
    require_file(&crit_path, "criteria file")?;
    let database = load_records(&db_path)?;
    let criteria = load_criteria(&crit_path)?;
    let (selected, mut log) = screen(&database, &criteria)?;

    let bounded = match sel.bounds {
        Some([min, max]) => enforce_count_bounds(selected, min, max, sel.seed)?,
        None => CountBound::Ok(selected),
    };
    log.record_bounds(&bounded);
    write_json(&out_dir.join("selection_log.json"), &log)?;
    let prisma = log.prisma_text();
    std::fs::write(out_dir.join("prisma.txt"), &prisma)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    print!("{prisma}");
    if let CountBound::TooFew { deficit, records } = &bounded {
        return Err(CliError::TooFew {
            selected: records.len(),
            min: records.len() + deficit,
            deficit: *deficit,
        });
    }
    let records = bounded.records();
    write_records_jsonl(&out_dir.join("selected.jsonl"), records)?;
    if !sel.subset_rules.is_empty() {
        let subsets = records
            .iter()
            .map(|r| apply_subset_rules(r, &sel.subset_rules))
            .collect::<Result<Vec<_>, _>>()?;
        write_json(&out_dir.join("subsets.json"), &subsets)?;
    }
    println!("selected {} of {} records", records.len(), database.len());
    Ok(())
}

fn infer(cfg: &StudyConfig, selected: &Path, out_dir: &Path) -> Result<(), CliError> {
    let inf = cfg
        .inference
        .as_ref()
        .ok_or_else(|| CliError::Validation("missing [inference] section".into()))?;
    require_file(selected, "selected-records file")?;
    let records = load_records(selected)?;
    // payloads are relative to the database file
    let base = cfg
        .selection
        .as_ref()
        .map(|s| cfg.resolve(&s.database))
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| cfg.base_dir.clone());
    let base = std::fs::canonicalize(&base).unwrap_or(base);
    let resolver = PayloadResolver::new(base);
    let mut sets = direct_infer(&records, &inf.estimators, &resolver)?;
    for agg in &inf.aggregate {
        let slot = sets
            .iter_mut()
            .find(|s| s.parameter == agg.param)
            .ok_or_else(|| CliError::Validation(format!("no estimator for `{}`", agg.param)))?;
        *slot = aggregate_infer(slot, agg.strategy)?;
    }
    for s in &sets {
        for w in &s.warnings {
            eprintln!("warning: {}: {w}", s.parameter);
        }
    }
    let considered = map_to_considered_vectors(&sets, inf.design.clone())?;
    let plausibility = plausibility_check(&considered, &inf.plausibility, &[]);
    write_json(&out_dir.join("inferred_values.json"), &sets)?;
    write_json(&out_dir.join("considered.json"), &considered)?;
    write_json(&out_dir.join("plausibility.json"), &plausibility)?;
    for v in &plausibility.violations {
        eprintln!(
            "implausible: vector {} ({}): {}: {}",
            v.vector, v.label, v.rule, v.detail
        );
    }
    println!(
        "{} considered parameter vectors from {} datasets",
        considered.len(),
        records.len()
    );
    Ok(())
}

fn plan(cfg: &StudyConfig, out_dir: &Path) -> Result<(), CliError> {
    if cfg.plan.is_empty() {
        return Err(CliError::Validation("no [[plan]] entries".into()));
    }
    let mut inferred: Option<ConsideredParameterSet> = None;
    let mut dgms: Vec<DgmInstance> = Vec::new();
    for p in &cfg.plan {
        let set = match p.vectors {
            VectorSource::Researcher => ConsideredParameterSet::researcher_only(),
            VectorSource::Inferred => match &inferred {
                Some(s) => s.clone(),
                None => {
                    let path = out_dir.join("considered.json");
                    require_file(&path, "considered parameter set")?;
                    let s = ConsideredParameterSet::load(&path)?;
                    inferred = Some(s.clone());
                    s
                }
            },
        };
        let grids = p
            .grids
            .iter()
            .map(|g| cfg.grid(g))
            .collect::<Result<Vec<_>, _>>()?;
        let made = cross_design(&set, &cfg.structure(), &grids, p.crossing)?;
        println!("{}: {} DGMs", p.name, made.len());
        dgms.extend(made);
    }
    let mut labels: Vec<&str> = dgms.iter().map(|d| d.label.as_str()).collect();
    labels.sort_unstable();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Validation(format!(
            "duplicate DGM label `{}`",
            w[0]
        )));
    }
    let path = out_dir.join("dgms.jsonl");
    let file = std::fs::File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    write_dgms_jsonl(std::io::BufWriter::new(file), &dgms)?;
    println!("{} DGMs written to {}", dgms.len(), path.display());
    Ok(())
}

fn run(
    cfg: &StudyConfig,
    dgm_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<(), CliError> {
    let settings = cfg.engine_settings()?;
    require_file(dgm_path, "DGM file")?;
    let dgms = load_dgms(dgm_path)?;
    let mut plan = StudyPlan::new(
        dgms,
        settings.methods,
        settings.measures,
        settings.n_rep,
        seed.unwrap_or(settings.master_seed),
    );
    plan.validity_filter = settings.validity_filter;
    plan.min_valid_reps = settings.min_valid_reps;
    if let Some(b) = settings.fisher_replicates {
        plan.fisher_replicates = b;
    }
    if let Some(f) = settings.expression_mean_floor {
        plan.expression_mean_floor = f;
    }
    plan.validate()?;
    for p in plan_inputs(&plan) {
        require_file(&p, "expression file")?;
    }

    let start = Instant::now();
    let done = AtomicUsize::new(0);
    let total = plan.dgms.len();
    let records = run_study_with_progress(&plan, workers, &|_, d| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!("[{k}/{total}] {}", d.label);
    })?;
    let summaries = summarize(&records, &plan)?;
    let inputs: Vec<PathBuf> = cfg.input_files();
    let manifest = export_results(out_dir, &plan, &records, &summaries, &inputs)?;
    let excluded = summaries.iter().filter(|s| s.excluded).count();
    println!(
        "{}: {} summary rows ({excluded} excluded) in {:.1} s; results hash {}",
        cfg.study.name,
        summaries.len(),
        start.elapsed().as_secs_f64(),
        manifest.results_hash
    );
    Ok(())
}
