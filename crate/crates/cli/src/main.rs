mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use vcat_core::data::{
    derive_binary_outcome, draw_training_set, impute_chained, load_csv, recode_categories, select_n_first,
    write_csv, Schema, TrialDataset,
};
use vcat_core::experiments::{
    run_n_first, run_sensitivity, simulate_trial, write_csv_rows, write_json, GeneratorConfig,
};
use vcat_core::fidelity::general_score;
use vcat_core::generators::{fit, GeneratorKind};
use vcat_core::seed::{derive_seed, stream};
use vcat_core::tuning::multi_trainset_tune;

use crate::config::{env_seed, Overrides, RunConfig, DEFAULT_IMPUTE_ITERATIONS};

#[derive(Parser)]
#[command(name = "vcat-sim", version, about = "Virtual control arm trial simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete the control arm after its first `n` patients.
    NFirst(RunArgs),
    /// Repeat the averaged procedure over `k` random training sets.
    Sensitivity(RunArgs),
    /// Write a simulated trial and its schema.
    Simulate(RunArgs),
    /// Fidelity score of synthetic data against the trial data.
    Score(RunArgs),
    /// Cross-validated hyperparameter search.
    Tune(RunArgs),
    /// Apply preprocessing (including imputation) and write the result.
    Impute(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (default: config, then $VCAT_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training set size.
    #[arg(long)]
    n: Option<usize>,
    /// Number of random training sets.
    #[arg(long)]
    k: Option<usize>,
    /// Generated replicates per training set.
    #[arg(long)]
    l: Option<usize>,
    /// Trial CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema JSON for the trial CSV.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Synthetic CSV for `score`.
    #[arg(long)]
    synthetic: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Runtime(String),
    External(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::External(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) | Failure::External(m) => m,
        }
    }

    fn validation(e: vcat_core::Error) -> Self {
        if e.is_external() {
            Failure::External(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }

    fn runtime(e: vcat_core::Error) -> Self {
        if e.is_external() {
            Failure::External(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Validation(msg.into()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: &'a str,
    seed: u64,
    config_sha256: String,
    effective_config: &'a RunConfig,
    outputs: &'a [String],
}

struct Run {
    scenario: &'static str,
    cfg: RunConfig,
    out: PathBuf,
    outputs: Vec<String>,
}

impl Run {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Outcome<()> {
        let p = self.path(name);
        write_json(&p, value).map_err(Failure::runtime)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Outcome<()> {
        let p = self.path(name);
        write_csv_rows(&p, rows).map_err(Failure::runtime)
    }

    fn seed(&self) -> u64 {
        self.cfg.seed()
    }

    fn generator(&self) -> GeneratorConfig {
        let mut g = self.cfg.generator.clone().expect("filled by merge");
        if let GeneratorKind::External(ext) = &mut g.kind {
            if ext.work_root.is_none() {
                ext.work_root = Some(self.out.join("work"));
            }
        }
        g
    }

    fn require(&self, name: &str, v: Option<usize>) -> Outcome<usize> {
        v.map_or_else(|| invalid(format!("`{name}` is required for {}", self.scenario)), Ok)
    }

    fn finish(mut self) -> Outcome<()> {
        let canonical = serde_json::to_vec(&self.cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
        let hash = hex::encode(Sha256::digest(&canonical));
        let p = self.path("manifest.json");
        let mut outputs = self.outputs.clone();
        outputs.sort();
        let manifest = Manifest {
            tool: "vcat-sim",
            version: env!("CARGO_PKG_VERSION"),
            scenario: self.scenario,
            seed: self.seed(),
            config_sha256: hash,
            effective_config: &self.cfg,
            outputs: &outputs,
        };
        write_json(&p, &manifest).map_err(Failure::runtime)
    }
}

fn check_exists(label: &str, p: &Path) -> Outcome<()> {
    if !p.exists() {
        return invalid(format!("{label} file not found: {}", p.display()));
    }
    Ok(())
}

/// Loads (or simulates) the trial and applies the configured preprocessing.
fn dataset(cfg: &RunConfig) -> Outcome<TrialDataset> {
    let mut ds = match (&cfg.simulation, &cfg.data) {
        (Some(_), Some(_)) => return invalid("config has both `simulation` and `data`"),
        (Some(spec), None) => simulate_trial(spec).map_err(Failure::validation)?,
        (None, Some(data)) => {
            let schema_path = match &cfg.schema {
                Some(p) => p,
                None => return invalid("`schema` is required with `data`"),
            };
            check_exists("schema", schema_path)?;
            check_exists("data", data)?;
            let schema = Schema::from_json_file(schema_path).map_err(Failure::validation)?;
            load_csv(data, Arc::new(schema)).map_err(Failure::validation)?
        }
        (None, None) => return invalid("config needs `data` and `schema`, or `simulation`"),
    };
    let pre = &cfg.preprocess;
    if let Some(d) = &pre.derive_outcome {
        ds = derive_binary_outcome(&ds, &d.col_a, &d.col_b, &d.outcome, &d.rule).map_err(Failure::validation)?;
    }
    for (column, mapping) in &pre.recode {
        ds = recode_categories(&ds, column, mapping).map_err(Failure::validation)?;
    }
    if let Some(imp) = &pre.impute {
        let seed = derive_seed(cfg.seed(), &[stream::IMPUTATION]);
        ds = impute_chained(&ds, imp.iterations, seed).map_err(Failure::validation)?;
    }
    Ok(ds)
}

fn check_n(ds: &TrialDataset, n: usize) -> Outcome<()> {
    if n == 0 || n > ds.m0() {
        return invalid(format!("n = {n} outside 1..={} (control arm size)", ds.m0()));
    }
    Ok(())
}

fn check_analysable(ds: &TrialDataset) -> Outcome<()> {
    if ds.has_missing() {
        return invalid("dataset has missing values; configure `preprocess.impute`");
    }
    if ds.m0() == 0 || ds.m1() == 0 {
        return invalid("both arms need at least one patient");
    }
    Ok(())
}

fn n_first(run: &mut Run) -> Outcome<()> {
    let ds = dataset(&run.cfg)?;
    check_analysable(&ds)?;
    let n = run.require("n", run.cfg.n)?;
    check_n(&ds, n)?;
    let l = run.cfg.l.unwrap_or(config::DEFAULT_L);
    if l == 0 {
        return invalid("l must be at least 1");
    }
    let report = run_n_first(&ds, n, &run.generator(), l, run.seed()).map_err(Failure::runtime)?;
    run.json("n_first.json", &report)?;
    run.csv("n_first_replicates.csv", &report.replicates)
}

#[derive(Serialize)]
struct HistogramRow {
    bin_low: f64,
    bin_high: f64,
    count: usize,
}

fn sensitivity(run: &mut Run) -> Outcome<()> {
    let ds = dataset(&run.cfg)?;
    check_analysable(&ds)?;
    let n = run.require("n", run.cfg.n)?;
    check_n(&ds, n)?;
    let (k, l) = (run.cfg.k.unwrap_or(config::DEFAULT_K), run.cfg.l.unwrap_or(config::DEFAULT_L));
    if k == 0 || l == 0 {
        return invalid("k and l must be at least 1");
    }
    let report = run_sensitivity(&ds, n, k, &run.generator(), l, run.seed()).map_err(Failure::runtime)?;
    run.json("sensitivity.json", &report)?;
    run.csv("sensitivity_sets.csv", &report.sets)?;
    run.csv("sensitivity_panel.csv", &report.panel)?;
    let h = &report.histogram;
    let rows: Vec<HistogramRow> = h
        .counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramRow {
            bin_low: h.edges[i],
            bin_high: h.edges[i + 1],
            count,
        })
        .collect();
    run.csv("sensitivity_histogram.csv", &rows)
}

fn simulate(run: &mut Run) -> Outcome<()> {
    let spec = match &run.cfg.simulation {
        Some(s) => s.clone(),
        None => return invalid("`simulation` is required for simulate"),
    };
    let ds = simulate_trial(&spec).map_err(Failure::validation)?;
    let p = run.path("trial.csv");
    write_csv(&p, ds.schema(), ds.records()).map_err(Failure::runtime)?;
    let p = run.path("schema.json");
    ds.schema().to_json_file(&p).map_err(Failure::runtime)
}

fn score(run: &mut Run) -> Outcome<()> {
    let ds = dataset(&run.cfg)?;
    let report = match run.cfg.synthetic.clone() {
        Some(path) => {
            check_exists("synthetic", &path)?;
            let syn = load_csv(&path, ds.schema_arc().clone()).map_err(Failure::validation)?;
            general_score(ds.schema(), ds.records(), syn.schema(), syn.records()).map_err(Failure::runtime)?
        }
        None => {
            // Generated patients against the training set they were fitted on.
            check_analysable(&ds)?;
            let n = run.cfg.n.unwrap_or(ds.m0());
            check_n(&ds, n)?;
            let train = ds.resolve(&select_n_first(&ds, n).map_err(Failure::validation)?).map_err(Failure::runtime)?;
            let g = run.generator();
            let seed = run.seed();
            let model = fit(&g.kind, &train, &g.hyperparams, derive_seed(seed, &[stream::FIT])).map_err(Failure::runtime)?;
            let batch = model.sample(n, derive_seed(seed, &[stream::SAMPLE])).map_err(Failure::runtime)?;
            general_score(&train.schema, &train.records, &batch.schema, &batch.records).map_err(Failure::runtime)?
        }
    };
    run.json("quality.json", &report)
}

fn tune(run: &mut Run) -> Outcome<()> {
    let ds = dataset(&run.cfg)?;
    check_analysable(&ds)?;
    let n = run.require("n", run.cfg.n)?;
    check_n(&ds, n)?;
    let g = run.generator();
    let t = match &g.tuning {
        Some(t) => t.clone(),
        None => return invalid("`generator.tuning` is required for tune"),
    };
    let seed = derive_seed(run.seed(), &[stream::TUNING]);
    if n < t.folds {
        return invalid(format!("n = {n} is smaller than folds = {}", t.folds));
    }
    // Validates the draw before spending time on the search.
    draw_training_set(&ds, n, 0).map_err(Failure::validation)?;
    let result = multi_trainset_tune(&g.kind, &ds, n, t.num_sets, &t.grid, t.folds, seed).map_err(Failure::runtime)?;
    run.json("tuning.json", &result)
}

fn impute(run: &mut Run) -> Outcome<()> {
    let mut cfg = run.cfg.clone();
    if cfg.preprocess.impute.is_none() {
        cfg.preprocess.impute = Some(config::ImputeConfig {
            iterations: DEFAULT_IMPUTE_ITERATIONS,
        });
        run.cfg.preprocess.impute = cfg.preprocess.impute.clone();
    }
    let ds = dataset(&cfg)?;
    let p = run.path("imputed.csv");
    write_csv(&p, ds.schema(), ds.records()).map_err(Failure::runtime)?;
    let p = run.path("schema.json");
    ds.schema().to_json_file(&p).map_err(Failure::runtime)
}

fn execute(scenario: &'static str, args: RunArgs) -> Outcome<()> {
    let base = match &args.config {
        Some(path) => {
            check_exists("config", path)?;
            RunConfig::from_file(path).map_err(Failure::Validation)?
        }
        None => RunConfig::default(),
    };
    let overrides = Overrides {
        data: args.data,
        schema: args.schema,
        synthetic: args.synthetic,
        output: args.out,
        seed: args.seed,
        n: args.n,
        k: args.k,
        l: args.l,
    };
    let mut cfg = base.merge(overrides, env_seed().map_err(Failure::Validation)?);
    let out = match cfg.output.take() {
        Some(o) => o,
        None => return invalid("an output directory is required (`output` or --out)"),
    };
    std::fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", out.display())))?;

    let jobs = match args.jobs {
        Some(0) => return invalid("--jobs must be at least 1"),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, usize::from),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    log::info!("{scenario}: seed {}, {jobs} worker(s), output {}", cfg.seed(), out.display());

    let mut run = Run {
        scenario,
        cfg,
        out,
        outputs: Vec::new(),
    };
    pool.install(|| match scenario {
        "n-first" => n_first(&mut run),
        "sensitivity" => sensitivity(&mut run),
        "simulate" => simulate(&mut run),
        "score" => score(&mut run),
        "tune" => tune(&mut run),
        "impute" => impute(&mut run),
        _ => unreachable!(),
    })?;
    run.finish()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (scenario, args) = match cli.command {
        Command::NFirst(a) => ("n-first", a),
        Command::Sensitivity(a) => ("sensitivity", a),
        Command::Simulate(a) => ("simulate", a),
        Command::Score(a) => ("score", a),
        Command::Tune(a) => ("tune", a),
        Command::Impute(a) => ("impute", a),
    };
    match execute(scenario, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
