//! strata-miner: subgroup-discovery pipeline as a single executable.
//!
//! Subcommands mirror the pipeline stages: `prepare` builds a cohort
//! from visit-level CSV, `mine` discovers rules, `importance` ranks
//! features, `grid` and `stratify` run the experiment protocol, and
//! `oracle` cross-checks the beam engine against exhaustive
//! enumeration. All randomness takes an explicit `--seed`; reruns with
//! identical inputs write byte-identical reports (manifest aside).
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 oracle
//! mismatch.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use strata_miner_core::cohort::{build_cohort, CohortTable, SchemaConfig};
use strata_miner_core::error::Error;
use strata_miner_core::experiments::{run_grid, run_stratified, AbsentPolicy, GridSpec};
use strata_miner_core::importance::{score_features, top_features, RuleSelection};
use strata_miner_core::miner::{
    candidate_count, diff_pools, mine, top_k, Engine, Level1Sample, MinerConfig,
};
use strata_miner_core::report::{
    self, digest_of, read_comparison_csv, read_importance_json, read_rules_json, sha256_file,
    FileDigest, GridReport, RunManifest,
};
use strata_miner_core::rule::P0Mode;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ORACLE_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "strata-miner",
    version,
    about = "Beam-search rule mining and rule-based feature importance over binarized cohorts"
)]
struct Cli {
    /// Bound the worker pool; output bytes are identical at any value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cohort table from visit-level CSV plus a schema config.
    Prepare(PrepareArgs),
    /// Mine rules from a cohort and write rules.json.
    Mine(MineArgs),
    /// Rank features from a rules.json by average WRAcc.
    Importance(ImportanceArgs),
    /// Run the width-by-length setting grid with CI aggregation.
    Grid(GridArgs),
    /// Re-run the grid inside every stratum and compare features.
    Stratify(StratifyArgs),
    /// Mine with both engines and verify the pools agree.
    Oracle(OracleArgs),
    /// Generate a seeded synthetic cohort with planted rules.
    Synth(SynthArgs),
    /// Flatten a report into plot-ready long-format CSV.
    ExportPlot(ExportPlotArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// Visit-level CSV: patient_id,visit_date,<variables>.
    #[arg(long)]
    visits: PathBuf,
    /// JSON schema config (variable kinds, bins, categories, groups).
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Collapse the schema's column groups after encoding.
    #[arg(long)]
    apply_groups: bool,
}

#[derive(Args, Clone)]
struct MinerFlags {
    #[arg(long, default_value_t = 2_000)]
    beam_width: usize,
    #[arg(long, default_value_t = 3)]
    max_len: usize,
    /// WRAcc threshold for keeping a rule.
    #[arg(long, default_value_t = 5.0e-4, allow_negative_numbers = true)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    min_coverage: u64,
    #[arg(long, value_enum, default_value_t = P0ModeArg::DatasetRate)]
    p0_mode: P0ModeArg,
    /// Seed level 1 from this many randomly sampled features.
    #[arg(long)]
    sample_level1: Option<usize>,
    /// Seed for all randomized behavior.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Candidate budget for the exhaustive engine.
    #[arg(long, default_value_t = 5_000_000)]
    max_candidates: u64,
}

impl MinerFlags {
    fn config(&self, engine: Engine) -> MinerConfig {
        MinerConfig {
            engine,
            beam_width: self.beam_width,
            max_len: self.max_len,
            threshold: self.threshold,
            min_coverage: self.min_coverage,
            p0_mode: self.p0_mode.into(),
            level1_sample: self
                .sample_level1
                .map(|size| Level1Sample { size, seed: self.seed }),
            max_candidates: self.max_candidates,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum P0ModeArg {
    /// p0 = dataset positives / dataset size.
    DatasetRate,
    /// p0 = subgroup positives / dataset size.
    SubgroupShare,
}

impl From<P0ModeArg> for P0Mode {
    fn from(v: P0ModeArg) -> P0Mode {
        match v {
            P0ModeArg::DatasetRate => P0Mode::DatasetRate,
            P0ModeArg::SubgroupShare => P0Mode::SubgroupShare,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Beam,
    Exhaustive,
}

#[derive(Args)]
struct MineArgs {
    /// Cohort CSV produced by `prepare` or `synth`.
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = EngineArg::Beam)]
    engine: EngineArg,
    #[command(flatten)]
    miner: MinerFlags,
}

#[derive(Args)]
struct ImportanceArgs {
    /// rules.json written by `mine`.
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// How many top features to print.
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Score only the best n rules instead of every surviving rule.
    #[arg(long)]
    top_n: Option<usize>,
}

#[derive(Args, Clone)]
struct GridFlags {
    #[arg(long, value_delimiter = ',', default_values_t = [2_000, 5_000, 10_000])]
    widths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [3, 4, 5])]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 5.0e-4, allow_negative_numbers = true)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    min_coverage: u64,
    #[arg(long, value_enum, default_value_t = P0ModeArg::DatasetRate)]
    p0_mode: P0ModeArg,
    /// How absent features enter the aggregation.
    #[arg(long, value_enum, default_value_t = AbsentPolicyArg::Zero)]
    absent_policy: AbsentPolicyArg,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    sample_level1: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AbsentPolicyArg {
    /// Absent features contribute 0 in that setting.
    Zero,
    /// Average only over settings where the feature survived.
    PresentOnly,
}

impl GridFlags {
    fn spec(&self, strata_variables: Vec<String>) -> GridSpec {
        GridSpec {
            widths: self.widths.clone(),
            lengths: self.lengths.clone(),
            threshold: self.threshold,
            min_coverage: self.min_coverage,
            p0_mode: self.p0_mode.into(),
            level1_sample: self
                .sample_level1
                .map(|size| Level1Sample { size, seed: self.seed }),
            absent_policy: match self.absent_policy {
                AbsentPolicyArg::Zero => AbsentPolicy::Zero,
                AbsentPolicyArg::PresentOnly => AbsentPolicy::PresentOnly,
            },
            top_k: self.top_k,
            strata_variables,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args)]
struct StratifyArgs {
    #[arg(long)]
    cohort: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Stratum variables to slice on (default: all registered).
    #[arg(long, value_delimiter = ',')]
    variables: Vec<String>,
    #[command(flatten)]
    grid: GridFlags,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    cohort: PathBuf,
    /// Optional directory for both pools and the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    miner: MinerFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthesis spec JSON.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's patient count.
    #[arg(long)]
    patients: Option<usize>,
}

#[derive(Args)]
struct ExportPlotArgs {
    /// aggregated.json from `grid` or `stratify`.
    #[arg(long, conflicts_with_all = ["importance", "comparison"])]
    grid: Option<PathBuf>,
    /// importance.json from `importance` or a grid setting.
    #[arg(long, conflicts_with = "comparison")]
    importance: Option<PathBuf>,
    /// comparison.csv from `stratify`.
    #[arg(long)]
    comparison: Option<PathBuf>,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

struct CliError {
    code: u8,
    message: String,
}

type CliResult<T = ()> = Result<T, CliError>;

/// Tags an error with its pipeline stage and the matching exit code.
fn stage<T>(name: &str, result: Result<T, Error>) -> CliResult<T> {
    result.map_err(|err| CliError {
        code: if err.is_config() { EXIT_USAGE } else { EXIT_DATA },
        message: format!("{name}: {err}"),
    })
}

fn config_stage<T>(name: &str, result: Result<T, Error>) -> CliResult<T> {
    result.map_err(|err| CliError { code: EXIT_USAGE, message: format!("{name}: {err}") })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("STRATA_MINER_LOG", "warn"),
    )
    .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints help/version on stdout with success
            let is_help = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(EXIT_USAGE) };
        }
    };

    if let Some(workers) = cli.workers {
        if workers == 0 {
            eprintln!("error: --workers must be >= 1");
            return ExitCode::from(EXIT_USAGE);
        }
        rayon_pool(workers);
    }

    let result = match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Mine(args) => cmd_mine(args),
        Command::Importance(args) => cmd_importance(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Stratify(args) => cmd_stratify(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Synth(args) => cmd_synth(args),
        Command::ExportPlot(args) => cmd_export_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

fn rayon_pool(workers: usize) {
    if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        log::warn!("worker pool already initialized: {err}");
    }
}

fn open_reader(stage_name: &str, path: &Path, config: bool) -> CliResult<BufReader<File>> {
    let open = File::open(path).map_err(|e| Error::io(path.display().to_string(), e));
    if config {
        config_stage(stage_name, open.map(BufReader::new))
    } else {
        stage(stage_name, open.map(BufReader::new))
    }
}

fn load_cohort(path: &Path) -> CliResult<CohortTable> {
    let reader = open_reader("cohort", path, false)?;
    stage("cohort", CohortTable::read_csv(reader))
}

fn input_digest(path: &Path) -> CliResult<FileDigest> {
    stage(
        "digest",
        sha256_file(path).map(|sha256| FileDigest {
            path: path.display().to_string(),
            sha256,
        }),
    )
}

fn write_manifest(
    out: &Path,
    subcommand: &str,
    config: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: &[PathBuf],
    details: serde_json::Value,
    started: Instant,
) -> CliResult {
    let manifest = RunManifest {
        tool: "strata-miner".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand.to_string(),
        config,
        inputs,
        outputs: stage(
            "manifest",
            outputs.iter().map(|p| digest_of(p, out)).collect::<Result<Vec<_>, _>>(),
        )?,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        details,
    };
    stage("manifest", report::write_json(&out.join("manifest.json"), &manifest))?;
    Ok(())
}

fn cmd_prepare(args: PrepareArgs) -> CliResult {
    let started = Instant::now();
    let schema_reader = open_reader("schema", &args.schema, true)?;
    let schema = config_stage("schema", SchemaConfig::from_reader(schema_reader))?;
    let visits_reader = open_reader("visits", &args.visits, false)?;
    let outcome = stage("cohort", build_cohort(visits_reader, &schema))?;
    let table = if args.apply_groups {
        stage("groups", outcome.table.group_columns(&schema.groups))?
    } else {
        outcome.table
    };

    let outputs = vec![
        stage("report", report::write_cohort_csv(&args.out.join("cohort.csv"), &table))?,
        stage(
            "report",
            report::write_exclusions_csv(&args.out.join("exclusions.csv"), &outcome.exclusions),
        )?,
    ];
    let inputs = vec![input_digest(&args.visits)?, input_digest(&args.schema)?];
    write_manifest(
        &args.out,
        "prepare",
        json!({
            "visits": args.visits.display().to_string(),
            "schema": args.schema.display().to_string(),
            "apply_groups": args.apply_groups,
        }),
        inputs,
        &outputs,
        json!({
            "patients": table.patients(),
            "positives": table.positives(),
            "features": table.features(),
            "excluded": outcome.exclusions.len(),
        }),
        started,
    )?;
    println!(
        "cohort: {} patients ({} positive), {} features, {} excluded",
        table.patients(),
        table.positives(),
        table.features(),
        outcome.exclusions.len()
    );
    Ok(())
}

fn cmd_mine(args: MineArgs) -> CliResult {
    let started = Instant::now();
    let engine = match args.engine {
        EngineArg::Beam => Engine::Beam,
        EngineArg::Exhaustive => Engine::Exhaustive,
    };
    let config = args.miner.config(engine);
    let table = load_cohort(&args.cohort)?;
    let pool = stage("mine", mine(&table, &config))?;
    let records = pool.records(&table);

    let outputs = vec![stage(
        "report",
        report::write_rules_json(&args.out.join("rules.json"), &records),
    )?];
    let inputs = vec![input_digest(&args.cohort)?];
    write_manifest(
        &args.out,
        "mine",
        serde_json::to_value(&config).unwrap_or_default(),
        inputs,
        &outputs,
        json!({
            "dataset_fingerprint": pool.dataset_fingerprint,
            "levels": pool.levels,
            "rules": records.len(),
        }),
        started,
    )?;
    println!("rules: {} above threshold {}", records.len(), config.threshold);
    for rule in top_k(&pool, 5) {
        println!(
            "  wracc {:.6}  n {:>6}  {}",
            rule.stats.wracc,
            rule.stats.n,
            rule.rule
                .selectors()
                .iter()
                .map(|&s| table.feature_name(s as usize))
                .collect::<Vec<_>>()
                .join(" & ")
        );
    }
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> CliResult {
    let started = Instant::now();
    let records = stage("rules", read_rules_json(&args.rules))?;
    let selection = match args.top_n {
        Some(n) => RuleSelection::TopN(n),
        None => RuleSelection::All,
    };
    let report = score_features(&records, selection);

    let outputs = vec![stage(
        "report",
        report::write_importance_json(&args.out.join("importance.json"), &report),
    )?];
    let inputs = vec![input_digest(&args.rules)?];
    write_manifest(
        &args.out,
        "importance",
        json!({
            "rules": args.rules.display().to_string(),
            "top_n": args.top_n,
            "top_k": args.top_k,
        }),
        inputs,
        &outputs,
        json!({ "features": report.scores.len(), "rules": records.len() }),
        started,
    )?;
    println!("features scored: {}", report.scores.len());
    for score in top_features(&report, args.top_k) {
        println!("  a_w {:.6}  rules {:>5}  {}", score.a_w, score.rule_count, score.feature);
    }
    Ok(())
}

fn cmd_grid(args: GridArgs) -> CliResult {
    let started = Instant::now();
    let spec = args.grid.spec(Vec::new());
    config_stage("grid", spec.validate())?;
    let table = load_cohort(&args.cohort)?;
    let result = stage("grid", run_grid(&table, &spec))?;
    let outputs = stage("report", report::write_grid_tree(&args.out, &table, &spec, &result))?;

    let timing: Vec<serde_json::Value> = result
        .settings
        .iter()
        .map(|s| json!({ "id": s.id, "levels": s.levels }))
        .collect();
    let inputs = vec![input_digest(&args.cohort)?];
    write_manifest(
        &args.out,
        "grid",
        serde_json::to_value(&spec).unwrap_or_default(),
        inputs,
        &outputs,
        json!({ "settings": timing }),
        started,
    )?;
    println!(
        "grid: {} settings, {} aggregated features",
        result.settings.len(),
        result.aggregated.len()
    );
    Ok(())
}

fn cmd_stratify(args: StratifyArgs) -> CliResult {
    let started = Instant::now();
    let spec = args.grid.spec(args.variables.clone());
    config_stage("stratify", spec.validate())?;
    let table = load_cohort(&args.cohort)?;
    let result = stage("stratify", run_stratified(&table, &spec))?;
    let outputs =
        stage("report", report::write_stratified_tree(&args.out, &table, &spec, &result))?;

    let inputs = vec![input_digest(&args.cohort)?];
    write_manifest(
        &args.out,
        "stratify",
        serde_json::to_value(&spec).unwrap_or_default(),
        inputs,
        &outputs,
        json!({
            "strata": result.strata.len(),
            "skipped": result.skipped,
        }),
        started,
    )?;
    println!(
        "stratify: {} strata mined, {} skipped, comparison {}x{}",
        result.strata.len(),
        result.skipped.len(),
        result.comparison.features.len(),
        result.comparison.columns.len()
    );
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> CliResult {
    let started = Instant::now();
    let table = load_cohort(&args.cohort)?;
    let beam_config = args.miner.config(Engine::Beam);
    let exhaustive_config = args.miner.config(Engine::Exhaustive);
    let beam = stage("mine", mine(&table, &beam_config))?;
    let exhaustive = stage("mine", mine(&table, &exhaustive_config))?;
    let diffs = diff_pools(&beam, &exhaustive, 1e-12);

    if let Some(out) = &args.out {
        let outputs = vec![
            stage("report", report::write_rules_json(&out.join("beam_rules.json"), &beam.records(&table)))?,
            stage(
                "report",
                report::write_rules_json(
                    &out.join("exhaustive_rules.json"),
                    &exhaustive.records(&table),
                ),
            )?,
        ];
        let inputs = vec![input_digest(&args.cohort)?];
        write_manifest(
            out,
            "oracle",
            serde_json::to_value(&beam_config).unwrap_or_default(),
            inputs,
            &outputs,
            json!({
                "mismatches": diffs.len(),
                "beam_rules": beam.rules.len(),
                "exhaustive_rules": exhaustive.rules.len(),
            }),
            started,
        )?;
    }

    let saturated = args.miner.beam_width as u128
        >= candidate_count(table.usable_features(), args.miner.max_len);
    if diffs.is_empty() {
        println!("pools identical: {} candidates", exhaustive.total_candidates());
        if !saturated {
            log::warn!(
                "beam width {} does not saturate the candidate space; agreement is not guaranteed",
                args.miner.beam_width
            );
        }
        Ok(())
    } else {
        for diff in diffs.iter().take(20) {
            eprintln!("mismatch: {diff}");
        }
        Err(CliError {
            code: EXIT_ORACLE_MISMATCH,
            message: format!(
                "pools differ: {} mismatches over {} candidates",
                diffs.len(),
                exhaustive.total_candidates()
            ),
        })
    }
}

fn cmd_synth(args: SynthArgs) -> CliResult {
    let started = Instant::now();
    let spec_reader = open_reader("spec", &args.spec, true)?;
    let mut spec = config_stage(
        "spec",
        strata_miner_core::synth::SynthSpec::from_reader(spec_reader),
    )?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(patients) = args.patients {
        spec.patients = patients;
    }
    let (table, truth) = stage("synth", strata_miner_core::synth::generate(&spec))?;

    let outputs = vec![
        stage("report", report::write_cohort_csv(&args.out.join("cohort.csv"), &table))?,
        stage("report", report::write_json(&args.out.join("truth.json"), &truth))?,
    ];
    let inputs = vec![input_digest(&args.spec)?];
    write_manifest(
        &args.out,
        "synth",
        serde_json::to_value(&spec).unwrap_or_default(),
        inputs,
        &outputs,
        json!({
            "patients": table.patients(),
            "positives": table.positives(),
            "features": table.features(),
            "expected_positive_rate": truth.expected_positive_rate,
        }),
        started,
    )?;
    println!(
        "synth: {} patients ({} positive), {} features, seed {}",
        table.patients(),
        table.positives(),
        table.features(),
        spec.seed
    );
    Ok(())
}

fn cmd_export_plot(args: ExportPlotArgs) -> CliResult {
    let write_out = |f: &dyn Fn(&mut BufWriter<File>) -> Result<(), Error>| -> CliResult {
        if let Some(parent) = args.out.parent() {
            if !parent.as_os_str().is_empty() {
                stage(
                    "plot",
                    std::fs::create_dir_all(parent)
                        .map_err(|e| Error::io(parent.display().to_string(), e)),
                )?;
            }
        }
        let file = stage(
            "plot",
            File::create(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e)),
        )?;
        let mut writer = BufWriter::new(file);
        stage("plot", f(&mut writer))
    };

    match (&args.grid, &args.importance, &args.comparison) {
        (Some(path), None, None) => {
            let grid: GridReport = stage("grid report", report::read_json(path))?;
            write_out(&|w| report::export_grid_plot(&grid, w))?;
        }
        (None, Some(path), None) => {
            let scores = stage("importance report", read_importance_json(path))?;
            write_out(&|w| report::export_importance_plot(&scores, w))?;
        }
        (None, None, Some(path)) => {
            let table = stage("comparison report", read_comparison_csv(path))?;
            write_out(&|w| report::export_comparison_plot(&table, w))?;
        }
        _ => {
            return Err(CliError {
                code: EXIT_USAGE,
                message: "export-plot needs exactly one of --grid, --importance, --comparison"
                    .into(),
            });
        }
    }
    println!("plot CSV written to {}", args.out.display());
    Ok(())
}
