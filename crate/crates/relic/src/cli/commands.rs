//! The `relic` command line: argument definitions and one handler per
//! subcommand. Handlers stay thin over the library; anything two commands
//! both need lives in the sibling modules.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::auxselect::{load_selection, save_selection, select_auxiliary, AuxSelection};
use crate::corpus::{load_bank, load_preference_set, ExampleBank};
use crate::eval::{build_report, load_records, EvalRecord, StrategyTag};
use crate::reward::serve_oracle_blocking;
use crate::trainer::LossMode;

use super::pipeline::{
    distributions_path, load_mode_params, modes_for_strategies, open_cache, records_path,
    run_pipeline, scan_params_dir, stage_evaluate, stage_retrieve, stage_train, RunArtifacts,
    TrainedParams,
};
use super::synth::{synth_gen, SyntheticCorpusSpec};
use super::{
    bank_language_from_path, load_aux_banks, load_run_config, load_target_bank, load_test_set,
    CliError, Overrides, RunConfig, MODEL_URL_ENV,
};

#[derive(Parser)]
#[command(
    name = "relic",
    version,
    about = "Train and evaluate example-pair retrieval for reward scoring in low-resource languages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate an example bank or preference set and print its summary
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with a planted retrieval signal
    SynthGen(SynthGenArgs),
    /// Rank candidate auxiliary banks against the target bank
    SelectAux(SelectAuxArgs),
    /// Train per-language retrievers against the selected banks
    Train(TrainArgs),
    /// Retrieve in-context pairs for a test set without scoring them
    Retrieve(RetrieveArgs),
    /// Score a test set under one or more strategies and report accuracy
    Evaluate(EvaluateArgs),
    /// Merge record files into one accuracy table
    Report(ReportArgs),
    /// Serve the synthetic oracle over the wire protocol
    OracleServe(OracleServeArgs),
    /// Run selection, training, retrieval, evaluation, and reporting
    Pipeline(PipelineArgs),
}

/// Flags shared by every run-configured subcommand. Each one overrides the
/// matching config-file field.
#[derive(Args, Debug, Default)]
struct RunFlags {
    /// TOML run configuration; flags override its fields
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run seed feeding every stage
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent reward-model requests
    #[arg(long)]
    parallelism: Option<usize>,
    /// Keep reward scores out of the on-disk cache
    #[arg(long)]
    no_cache: bool,
    /// Comma-separated strategies to evaluate
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<StrategyTag>>,
    /// Reward-model endpoint speaking the wire protocol
    #[arg(long, value_name = "URL")]
    model_url: Option<String>,
    /// Score with the in-process synthetic oracle instead of an endpoint
    #[arg(long)]
    oracle: bool,
    /// Directory where run artifacts land
    #[arg(long, value_name = "DIR")]
    run_dir: Option<PathBuf>,
    /// Target-language bank, named {language}.bank.jsonl
    #[arg(long, value_name = "FILE")]
    target: Option<PathBuf>,
    /// Directory of candidate auxiliary banks
    #[arg(long, value_name = "DIR")]
    aux_dir: Option<PathBuf>,
    /// Preference-pair test set
    #[arg(long, value_name = "FILE")]
    test: Option<PathBuf>,
    /// Percentile threshold for auxiliary-bank selection
    #[arg(long)]
    gamma: Option<f64>,
    /// Hashed feature dimension
    #[arg(long)]
    d_in: Option<usize>,
    /// Embedding dimension
    #[arg(long)]
    d_out: Option<usize>,
    /// Mined candidates per polarity
    #[arg(long)]
    f: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Minibatch size
    #[arg(long)]
    batch: Option<usize>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Training objective: pairwise or relevance
    #[arg(long)]
    loss: Option<LossMode>,
    /// Cap on each anchor's candidate pair set
    #[arg(long)]
    max_pairs_per_sample: Option<usize>,
    /// In-context pairs per prompt
    #[arg(long)]
    c: Option<usize>,
    /// Per-polarity pair-bank bound
    #[arg(long)]
    m: Option<usize>,
    /// Approximate character budget for rendered context
    #[arg(long)]
    token_budget: Option<usize>,
    /// Oracle context-bonus weight
    #[arg(long)]
    beta: Option<f64>,
    /// Oracle quality-marker substring
    #[arg(long)]
    marker: Option<String>,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            parallelism: self.parallelism,
            cache: self.no_cache.then_some(false),
            strategies: self.strategies.clone(),
            model_url: self.model_url.clone(),
            oracle: self.oracle,
            target_bank: self.target.clone(),
            aux_dir: self.aux_dir.clone(),
            test_set: self.test.clone(),
            run_dir: self.run_dir.clone(),
            gamma: self.gamma,
            d_in: self.d_in,
            d_out: self.d_out,
            f: self.f,
            learning_rate: self.lr,
            batch_size: self.batch,
            epochs: self.epochs,
            loss_mode: self.loss,
            max_pairs_per_sample: self.max_pairs_per_sample,
            c: self.c,
            top_m_per_polarity: self.m,
            token_budget: self.token_budget,
            beta: self.beta,
            good_marker: self.marker.clone(),
        }
    }

    fn config(&self, adjust: impl FnOnce(&mut Overrides)) -> Result<RunConfig, CliError> {
        let mut overrides = self.overrides();
        adjust(&mut overrides);
        load_run_config(
            self.config.as_deref(),
            &overrides,
            std::env::var(MODEL_URL_ENV).ok(),
        )
    }
}

#[derive(Args)]
struct IngestArgs {
    /// Record file to validate: a bank or a preference set
    #[arg(long, value_name = "FILE")]
    path: PathBuf,
    /// Expected language; defaults to the one the file name carries
    #[arg(long)]
    language: Option<String>,
    /// Stop after validation instead of printing the full summary
    #[arg(long)]
    validate_only: bool,
}

#[derive(Args)]
struct SynthGenArgs {
    /// Directory the corpus is written into
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Corpus spec as TOML; field flags below override it
    #[arg(long, value_name = "FILE")]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    num_topics: Option<usize>,
    #[arg(long)]
    bank_size: Option<usize>,
    #[arg(long)]
    triplets_per_language: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    noise_rate: Option<f64>,
    #[arg(long)]
    tie_rate: Option<f64>,
    #[arg(long)]
    target_language: Option<String>,
    #[arg(long, value_delimiter = ',')]
    aux_languages: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    unrelated_languages: Option<Vec<String>>,
}

#[derive(Args)]
struct SelectAuxArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Directory of candidate banks; same as --aux-dir
    #[arg(long, value_name = "DIR")]
    candidates: Option<PathBuf>,
    /// Where the selection record file is written; defaults into --run-dir
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Selection record file; defaults to the one under --run-dir
    #[arg(long, value_name = "FILE")]
    aux_selection: Option<PathBuf>,
    /// Artifact directory; same as --run-dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Directory of trained parameter files; defaults to params/ under
    /// --run-dir
    #[arg(long, value_name = "DIR")]
    retrievers: Option<PathBuf>,
    /// Selection record file steering language order and remainder slots
    #[arg(long, value_name = "FILE")]
    aux_selection: Option<PathBuf>,
    /// Where context records are written; defaults into --run-dir
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Directory of trained parameter files; defaults to params/ under
    /// --run-dir
    #[arg(long, value_name = "DIR")]
    retrievers: Option<PathBuf>,
    /// Selection record file; defaults to the one under --run-dir
    #[arg(long, value_name = "FILE")]
    aux_selection: Option<PathBuf>,
    /// Where the accuracy table is written; defaults into --run-dir
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Directory for per-strategy record files; defaults into --run-dir
    #[arg(long, value_name = "DIR")]
    records: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Record files, or directories of them, to merge
    #[arg(value_name = "PATH", required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the table to this file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleServeArgs {
    /// TOML run configuration supplying the [oracle] section
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    addr: String,
    #[arg(long, default_value_t = 7878)]
    port: u16,
    /// Context-bonus weight
    #[arg(long)]
    beta: Option<f64>,
    /// Quality-marker substring
    #[arg(long)]
    marker: Option<String>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    run: RunFlags,
}

/// Parses arguments, runs the subcommand, and maps errors onto the exit-code
/// contract.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::SynthGen(args) => cmd_synth_gen(args),
        Command::SelectAux(args) => cmd_select_aux(args),
        Command::Train(args) => cmd_train(args),
        Command::Retrieve(args) => cmd_retrieve(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Report(args) => cmd_report(args),
        Command::OracleServe(args) => cmd_oracle_serve(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

/// Artifacts root when a run directory is configured.
fn artifacts(cfg: &RunConfig) -> Option<RunArtifacts> {
    (!cfg.paths.run_dir.as_os_str().is_empty()).then(|| RunArtifacts::new(&cfg.paths.run_dir))
}

fn require_artifacts(cfg: &RunConfig) -> Result<RunArtifacts, CliError> {
    artifacts(cfg).ok_or_else(|| CliError::config("this command needs --run-dir"))
}

/// Detects whether a record file holds preference pairs or bank triplets by
/// the shape of its first record.
fn is_preference_file(path: &Path) -> Result<bool, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let first = content.lines().find(|line| !line.trim().is_empty());
    match first {
        Some(line) => {
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
                CliError::data(format!("{}:1: malformed record: {e}", path.display()))
            })?;
            Ok(value.get("chosen").is_some())
        }
        None => Ok(false),
    }
}

fn cmd_ingest(args: IngestArgs) -> Result<(), CliError> {
    if !args.path.exists() {
        return Err(CliError::data(format!(
            "{} does not exist",
            args.path.display()
        )));
    }
    if is_preference_file(&args.path)? {
        let pairs = load_preference_set(&args.path)?;
        if let Some(language) = &args.language {
            if let Some(pair) = pairs.iter().find(|p| p.language != *language) {
                return Err(CliError::data(format!(
                    "pair {:?} has language {:?}, expected {language:?}",
                    pair.id, pair.language
                )));
            }
        }
        println!("{}: valid preference set, {} pairs", args.path.display(), pairs.len());
        return Ok(());
    }
    let language = match args.language {
        Some(language) => language,
        None => bank_language_from_path(&args.path)?,
    };
    let bank = load_bank(&args.path, &language)?;
    println!(
        "{}: valid bank, language {}, {} positives, {} negatives",
        args.path.display(),
        bank.language,
        bank.positives.len(),
        bank.negatives.len()
    );
    if !args.validate_only {
        println!("fingerprint {}", bank.fingerprint());
    }
    Ok(())
}

fn cmd_synth_gen(args: SynthGenArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::config(format!("cannot read spec {}: {e}", path.display()))
            })?;
            toml::from_str::<SyntheticCorpusSpec>(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => SyntheticCorpusSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.num_topics {
        spec.num_topics = n;
    }
    if let Some(n) = args.bank_size {
        spec.bank_size = n;
    }
    if let Some(n) = args.triplets_per_language {
        spec.triplets_per_language = n;
    }
    if let Some(n) = args.test_size {
        spec.test_size = n;
    }
    if let Some(rate) = args.noise_rate {
        spec.noise_rate = rate;
    }
    if let Some(rate) = args.tie_rate {
        spec.tie_rate = rate;
    }
    if let Some(language) = args.target_language {
        spec.target_language = language;
    }
    if let Some(languages) = args.aux_languages {
        spec.aux_languages = languages;
    }
    if let Some(languages) = args.unrelated_languages {
        spec.unrelated_languages = languages;
    }
    let corpus = synth_gen(&spec, &args.out)?;
    println!(
        "wrote corpus to {}: target bank {} ({}), {} candidate banks ({} each), {} test pairs",
        args.out.display(),
        spec.target_language,
        corpus.target_bank.len(),
        corpus.aux_banks.len(),
        spec.triplets_per_language,
        corpus.test_set.len()
    );
    Ok(())
}

fn print_selection(selection: &AuxSelection) {
    let mut ranked: Vec<(&String, f64)> = selection
        .similarities
        .iter()
        .map(|(language, &similarity)| (language, similarity))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("similarities are finite"));
    let width = ranked
        .iter()
        .map(|(language, _)| language.len())
        .max()
        .unwrap_or(0)
        .max("language".len());
    println!("{:<width$}  similarity  selected", "language");
    for (language, similarity) in ranked {
        let mark = if selection.selected.contains(language) {
            "yes"
        } else {
            "no"
        };
        println!("{language:<width$}  {similarity:10.6}  {mark}");
    }
}

fn cmd_select_aux(args: SelectAuxArgs) -> Result<(), CliError> {
    let cfg = args.run.config(|overrides| {
        if args.candidates.is_some() && overrides.aux_dir.is_none() {
            overrides.aux_dir = args.candidates.clone();
        }
    })?;
    let target = load_target_bank(&cfg.paths)?;
    let banks = load_aux_banks(&cfg.paths, &target.language)?;
    let candidates: Vec<ExampleBank> = banks.values().cloned().collect();
    let selection = select_auxiliary(&target, &candidates, &cfg.auxselect, &cfg.encoder)?;
    print_selection(&selection);
    if let Some(path) = args.out.or_else(|| artifacts(&cfg).map(|a| a.selection())) {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        }
        save_selection(&selection, &path)?;
        println!("selection written to {}", path.display());
    }
    Ok(())
}

/// The selection backing a command: an explicit file, the run artifact, or,
/// when `fallback_languages` is given, a synthesized all-selected set with
/// equal similarities.
fn resolve_selection(
    explicit: Option<&Path>,
    cfg: &RunConfig,
    fallback_languages: Option<&[String]>,
) -> Result<AuxSelection, CliError> {
    if let Some(path) = explicit {
        return Ok(load_selection(path)?);
    }
    if let Some(arts) = artifacts(cfg) {
        if arts.selection().exists() {
            return Ok(load_selection(arts.selection())?);
        }
    }
    match fallback_languages {
        Some(languages) => {
            log::info!(
                "no selection file; treating every language with parameters as selected"
            );
            Ok(AuxSelection {
                similarities: languages.iter().map(|l| (l.clone(), 1.0)).collect(),
                selected: languages.to_vec(),
            })
        }
        None => Err(CliError::config(
            "no auxiliary selection: pass --aux-selection or run select-aux into --run-dir",
        )),
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let cfg = args.run.config(|overrides| {
        if args.out.is_some() {
            overrides.run_dir = args.out.clone();
        }
    })?;
    let arts = require_artifacts(&cfg)?;
    let target = load_target_bank(&cfg.paths)?;
    let banks = load_aux_banks(&cfg.paths, &target.language)?;
    let selection = resolve_selection(args.aux_selection.as_deref(), &cfg, None)?;
    let model = cfg.model.build(&cfg.oracle)?;
    let cache = open_cache(&cfg, &arts)?;
    let mode = cfg.train.loss_mode;
    stage_train(
        &cfg, &target, &selection, &banks, &[mode], model.as_ref(), &cache, &arts,
    )?;
    for language in &selection.selected {
        println!("trained {language}: {}", arts.params(language, mode).display());
    }
    Ok(())
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<(), CliError> {
    let cfg = args.run.config(|_| {})?;
    let retrievers = args
        .retrievers
        .or_else(|| artifacts(&cfg).map(|a| a.params_dir()))
        .ok_or_else(|| CliError::config("pass --retrievers or --run-dir"))?;
    let out = args
        .out
        .or_else(|| artifacts(&cfg).map(|a| a.contexts()))
        .ok_or_else(|| CliError::config("pass --out or --run-dir"))?;
    let languages = scan_params_dir(&retrievers, LossMode::Pairwise)?;
    let selection = resolve_selection(args.aux_selection.as_deref(), &cfg, Some(&languages))?;
    let params = load_mode_params(&retrievers, &selection.selected, LossMode::Pairwise)?;
    let target_language = if cfg.paths.target_bank.as_os_str().is_empty() {
        String::new()
    } else {
        bank_language_from_path(&cfg.paths.target_bank)?
    };
    let mut banks = load_aux_banks(&cfg.paths, &target_language)?;
    banks.retain(|language, _| selection.selected.contains(language));
    let test_set = load_test_set(&cfg.paths)?;
    let records = stage_retrieve(&cfg, &test_set, &banks, &selection, &params, &out)?;
    println!("wrote {} context records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let cfg = args.run.config(|_| {})?;
    let records_dir = args
        .records
        .or_else(|| artifacts(&cfg).map(|a| a.records_dir()))
        .ok_or_else(|| CliError::config("pass --records or --run-dir"))?;
    let report_path = args.report.or_else(|| artifacts(&cfg).map(|a| a.report()));

    let target_language = if cfg.paths.target_bank.as_os_str().is_empty() {
        String::new()
    } else {
        bank_language_from_path(&cfg.paths.target_bank)?
    };
    let mut banks = load_aux_banks(&cfg.paths, &target_language)?;
    let bank_languages: Vec<String> = banks.keys().cloned().collect();
    let selection =
        resolve_selection(args.aux_selection.as_deref(), &cfg, Some(&bank_languages))?;
    banks.retain(|language, _| selection.selected.contains(language));
    let test_set = load_test_set(&cfg.paths)?;

    let modes = modes_for_strategies(&cfg.strategies);
    let mut trained = TrainedParams::default();
    if !modes.is_empty() {
        let retrievers = args
            .retrievers
            .or_else(|| artifacts(&cfg).map(|a| a.params_dir()))
            .ok_or_else(|| CliError::config("pass --retrievers or --run-dir"))?;
        for &mode in &modes {
            let params = load_mode_params(&retrievers, &selection.selected, mode)?;
            match mode {
                LossMode::Pairwise => trained.pairwise = Some(params),
                LossMode::Relevance => trained.relevance = Some(params),
            }
        }
    }

    let model = cfg.model.build(&cfg.oracle)?;
    let cache = match artifacts(&cfg) {
        Some(arts) => open_cache(&cfg, &arts)?,
        None if cfg.cache => {
            return Err(CliError::config(
                "the score cache needs --run-dir; pass --no-cache to evaluate without one",
            ))
        }
        None => crate::reward::ScoreCache::in_memory(),
    };
    let resources = crate::eval::StrategyResources {
        aux_banks: &banks,
        selection: &selection,
        relic_params: trained.for_mode(LossMode::Pairwise),
        epr_params: trained.for_mode(LossMode::Relevance),
        encoder: cfg.encoder,
        train_seed: cfg.seed,
    };
    let by_strategy = stage_evaluate(
        &cfg, &test_set, &resources, model.as_ref(), &cache, &records_dir,
    )?;

    let all: Vec<EvalRecord> = by_strategy.values().flatten().cloned().collect();
    let report = build_report(&all)?;
    let table = report.to_table();
    if let Some(path) = &report_path {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(path, &table)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    }
    print!("{table}");
    for &strategy in &cfg.strategies {
        log::info!(
            "records: {}",
            records_path(&records_dir, strategy).display()
        );
        log::info!(
            "distributions: {}",
            distributions_path(&records_dir, strategy).display()
        );
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), CliError> {
    let mut files = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().and_then(|e| e.to_str()) == Some("jsonl")
                        && !p
                            .file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.ends_with(".distributions.jsonl"))
                })
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::data("no record files to merge".to_string()));
    }
    let mut all = Vec::new();
    for file in &files {
        all.extend(load_records(file)?);
    }
    let report = build_report(&all)?;
    let table = report.to_table();
    if let Some(path) = &args.out {
        std::fs::write(path, &table)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_oracle_serve(args: OracleServeArgs) -> Result<(), CliError> {
    let overrides = Overrides {
        beta: args.beta,
        good_marker: args.marker.clone(),
        // The oracle serves regardless of which model scoring runs use.
        oracle: true,
        ..Overrides::default()
    };
    let cfg = load_run_config(args.config.as_deref(), &overrides, None)?;
    let addr = format!("{}:{}", args.addr, args.port);
    Ok(serve_oracle_blocking(&addr, cfg.oracle)?)
}

fn cmd_pipeline(args: PipelineArgs) -> Result<(), CliError> {
    let cfg = args.run.config(|_| {})?;
    require_artifacts(&cfg)?;
    let report = run_pipeline(&cfg)?;
    print!("{}", report.to_table());
    println!("artifacts under {}", cfg.paths.run_dir.display());
    Ok(())
}
