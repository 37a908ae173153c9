//! Stage orchestration over a run directory. Every stage declares its
//! outputs up front and removes them again when it fails, so artifacts
//! under `run_dir` are either complete or absent; the score cache is the
//! one survivor of a failed stage, since its entries stay valid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::auxselect::{load_selection, save_selection, select_auxiliary, AuxSelection};
use crate::corpus::{ExampleBank, PreferencePair};
use crate::encoder::{load_params, save_params, RetrieverParams};
use crate::eval::{
    build_report, export_distributions, run_strategy, save_records, EvalRecord, Report,
    StrategyResources, StrategyTag,
};
use crate::inference::{assemble_context, retrieve_top_k, PairRetriever};
use crate::reward::{RewardModel, ScoreCache};
use crate::trainer::{train_all, LossMode, TrainConfig};

use super::{
    load_aux_banks, load_target_bank, load_test_set, CliError, RunConfig,
};

/// Artifact locations inside one run directory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    run_dir: PathBuf,
}

impl RunArtifacts {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        RunArtifacts {
            run_dir: run_dir.into(),
        }
    }

    /// The effective configuration the run executed under.
    pub fn config_echo(&self) -> PathBuf {
        self.run_dir.join("config.toml")
    }

    pub fn selection(&self) -> PathBuf {
        self.run_dir.join("aux-selection.jsonl")
    }

    /// Directory holding trained retriever parameters.
    pub fn params_dir(&self) -> PathBuf {
        self.run_dir.join("params")
    }

    pub fn params(&self, language: &str, mode: LossMode) -> PathBuf {
        params_file(&self.params_dir(), language, mode)
    }

    pub fn metrics(&self, language: &str, mode: LossMode) -> PathBuf {
        self.run_dir
            .join("metrics")
            .join(format!("{language}.{mode}.jsonl"))
    }

    pub fn contexts(&self) -> PathBuf {
        self.run_dir.join("retrieval").join("contexts.jsonl")
    }

    /// Directory holding per-strategy records and score distributions.
    pub fn records_dir(&self) -> PathBuf {
        self.run_dir.join("records")
    }

    pub fn records(&self, strategy: StrategyTag) -> PathBuf {
        records_path(&self.records_dir(), strategy)
    }

    pub fn distributions(&self, strategy: StrategyTag) -> PathBuf {
        distributions_path(&self.records_dir(), strategy)
    }

    pub fn report(&self) -> PathBuf {
        self.run_dir.join("report.txt")
    }

    pub fn cache(&self) -> PathBuf {
        self.run_dir.join("scores.cache")
    }
}

/// Parameter file of one language and loss mode inside a parameters
/// directory.
pub fn params_file(params_dir: &Path, language: &str, mode: LossMode) -> PathBuf {
    params_dir.join(format!("{language}.{mode}.bin"))
}

/// Record and distribution files of one strategy inside a records
/// directory.
pub fn records_path(records_dir: &Path, strategy: StrategyTag) -> PathBuf {
    records_dir.join(format!("{}.jsonl", strategy.as_str()))
}

pub fn distributions_path(records_dir: &Path, strategy: StrategyTag) -> PathBuf {
    records_dir.join(format!("{}.distributions.jsonl", strategy.as_str()))
}

fn io_data(path: &Path, e: std::io::Error) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_data(parent, e))?;
    }
    Ok(())
}

/// Runs one stage. On failure the declared outputs are removed and the
/// error is wrapped with the stage name, keeping its exit code.
fn run_stage<T>(
    stage: &'static str,
    outputs: &[PathBuf],
    f: impl FnOnce() -> Result<T, CliError>,
) -> Result<T, CliError> {
    log::info!("stage {stage}");
    f().map_err(|e| {
        for path in outputs {
            let _ = std::fs::remove_file(path);
        }
        CliError::Stage {
            stage,
            source: Box::new(e),
        }
    })
}

/// Scores every candidate bank against the target and persists the ranked
/// selection.
pub fn stage_select_aux(
    cfg: &RunConfig,
    target: &ExampleBank,
    aux_banks: &BTreeMap<String, ExampleBank>,
    arts: &RunArtifacts,
) -> Result<AuxSelection, CliError> {
    let out = arts.selection();
    run_stage("select-aux", std::slice::from_ref(&out), || {
        let candidates: Vec<ExampleBank> = aux_banks.values().cloned().collect();
        let selection = select_auxiliary(target, &candidates, &cfg.auxselect, &cfg.encoder)?;
        log::info!(
            "selected {} of {} candidate banks: {:?}",
            selection.selected.len(),
            candidates.len(),
            selection.selected
        );
        ensure_parent(&out)?;
        save_selection(&selection, &out)?;
        Ok(selection)
    })
}

/// Per-language trained parameters, one map per loss mode that was trained.
#[derive(Debug, Default)]
pub struct TrainedParams {
    pub pairwise: Option<BTreeMap<String, RetrieverParams>>,
    pub relevance: Option<BTreeMap<String, RetrieverParams>>,
}

impl TrainedParams {
    pub fn for_mode(&self, mode: LossMode) -> Option<&BTreeMap<String, RetrieverParams>> {
        match mode {
            LossMode::Pairwise => self.pairwise.as_ref(),
            LossMode::Relevance => self.relevance.as_ref(),
        }
    }

    fn set(&mut self, mode: LossMode, params: BTreeMap<String, RetrieverParams>) {
        match mode {
            LossMode::Pairwise => self.pairwise = Some(params),
            LossMode::Relevance => self.relevance = Some(params),
        }
    }
}

/// Loss modes the configured strategy set needs parameters for.
pub fn modes_for_strategies(strategies: &[StrategyTag]) -> Vec<LossMode> {
    let mut modes = Vec::new();
    if strategies.contains(&StrategyTag::Relic) {
        modes.push(LossMode::Pairwise);
    }
    if strategies.contains(&StrategyTag::Epr) {
        modes.push(LossMode::Relevance);
    }
    modes
}

/// Trains one retriever per selected language and requested loss mode. The
/// modes share the run seed, so their parameter trajectories diverge only
/// through the loss; per-language params and epoch metrics are persisted.
pub fn stage_train(
    cfg: &RunConfig,
    target: &ExampleBank,
    selection: &AuxSelection,
    banks: &BTreeMap<String, ExampleBank>,
    modes: &[LossMode],
    model: &dyn RewardModel,
    cache: &ScoreCache,
    arts: &RunArtifacts,
) -> Result<TrainedParams, CliError> {
    let mut outputs = Vec::new();
    for &mode in modes {
        for language in &selection.selected {
            outputs.push(arts.params(language, mode));
            outputs.push(arts.metrics(language, mode));
        }
    }
    run_stage("train", &outputs, || {
        let mut trained = TrainedParams::default();
        for &mode in modes {
            let train_cfg = TrainConfig {
                loss_mode: mode,
                ..cfg.train.clone()
            };
            let outcomes = train_all(target, selection, banks, model, cache, &train_cfg)?;
            let mut params = BTreeMap::new();
            for (language, outcome) in outcomes {
                let params_path = arts.params(&language, mode);
                ensure_parent(&params_path)?;
                save_params(&outcome.params, &params_path)?;
                let metrics_path = arts.metrics(&language, mode);
                ensure_parent(&metrics_path)?;
                let mut lines = String::new();
                for metric in &outcome.metrics {
                    lines.push_str(
                        &serde_json::to_string(metric).expect("epoch metric serializes"),
                    );
                    lines.push('\n');
                }
                std::fs::write(&metrics_path, lines).map_err(|e| io_data(&metrics_path, e))?;
                params.insert(language, outcome.params);
            }
            trained.set(mode, params);
        }
        Ok(trained)
    })
}

/// One retrieved context, recorded by example identifiers so the artifact
/// stays readable without the banks at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub pair_id: String,
    /// Which response of the pair the context was retrieved for.
    pub side: String,
    pub shortfall: bool,
    /// Ascending by similarity, mirroring prompt order.
    pub pairs: Vec<ContextEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub language: String,
    pub positive_id: String,
    pub negative_id: String,
    pub score: f64,
}

/// Runs trained pair retrieval over the test set and records which context
/// each response side would receive, without touching the reward model.
pub fn stage_retrieve(
    cfg: &RunConfig,
    test_set: &[PreferencePair],
    banks: &BTreeMap<String, ExampleBank>,
    selection: &AuxSelection,
    params: &BTreeMap<String, RetrieverParams>,
    out: &Path,
) -> Result<Vec<ContextRecord>, CliError> {
    let out = out.to_path_buf();
    run_stage("retrieve", std::slice::from_ref(&out), || {
        let mut retrievers = Vec::with_capacity(banks.len());
        for (language, bank) in banks {
            let p = params.get(language).ok_or_else(|| {
                CliError::data(format!("no trained parameters for language {language:?}"))
            })?;
            retrievers.push((language.clone(), p, PairRetriever::new(bank, p)?));
        }
        let mut records = Vec::with_capacity(test_set.len() * 2);
        for pair in test_set {
            for (side, response) in [("preferred", &pair.preferred), ("rejected", &pair.rejected)] {
                let mut per_language = BTreeMap::new();
                for (language, p, retriever) in retrievers.iter_mut() {
                    let bank =
                        retriever.pair_bank(&pair.query, response, cfg.inference.top_m_per_polarity);
                    let top = retrieve_top_k(&bank, p, &pair.query, response, cfg.inference.c)?;
                    per_language.insert(language.clone(), top);
                }
                let ctx = assemble_context(&per_language, &cfg.inference, selection);
                records.push(ContextRecord {
                    pair_id: pair.id.clone(),
                    side: side.to_string(),
                    shortfall: ctx.shortfall,
                    pairs: ctx
                        .pairs
                        .iter()
                        .map(|(p, score)| ContextEntry {
                            language: p.language.clone(),
                            positive_id: p.positive.id.clone(),
                            negative_id: p.negative.id.clone(),
                            score: *score,
                        })
                        .collect(),
                });
            }
        }
        ensure_parent(&out)?;
        let mut lines = String::new();
        for record in &records {
            lines.push_str(&serde_json::to_string(record).expect("context record serializes"));
            lines.push('\n');
        }
        std::fs::write(&out, lines).map_err(|e| io_data(&out, e))?;
        Ok(records)
    })
}

/// Evaluates every configured strategy and persists records and score
/// distributions per strategy.
pub fn stage_evaluate(
    cfg: &RunConfig,
    test_set: &[PreferencePair],
    resources: &StrategyResources,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    records_dir: &Path,
) -> Result<BTreeMap<StrategyTag, Vec<EvalRecord>>, CliError> {
    let mut outputs = Vec::new();
    for &strategy in &cfg.strategies {
        outputs.push(records_path(records_dir, strategy));
        outputs.push(distributions_path(records_dir, strategy));
    }
    let records_dir = records_dir.to_path_buf();
    run_stage("evaluate", &outputs, || {
        let eval_cfg = cfg.eval_config();
        std::fs::create_dir_all(&records_dir).map_err(|e| io_data(&records_dir, e))?;
        let mut by_strategy = BTreeMap::new();
        for &strategy in &cfg.strategies {
            log::info!("evaluating strategy {strategy}");
            let records = run_strategy(strategy, test_set, resources, model, cache, &eval_cfg)?;
            save_records(&records, records_path(&records_dir, strategy))?;
            export_distributions(&records, distributions_path(&records_dir, strategy))?;
            by_strategy.insert(strategy, records);
        }
        Ok(by_strategy)
    })
}

/// Merges all records into the accuracy table and persists it.
pub fn stage_report(
    records_by_strategy: &BTreeMap<StrategyTag, Vec<EvalRecord>>,
    out: &Path,
) -> Result<Report, CliError> {
    let out = out.to_path_buf();
    run_stage("report", std::slice::from_ref(&out), || {
        let all: Vec<EvalRecord> = records_by_strategy
            .values()
            .flat_map(|r| r.iter().cloned())
            .collect();
        let report = build_report(&all)?;
        ensure_parent(&out)?;
        std::fs::write(&out, report.to_table()).map_err(|e| io_data(&out, e))?;
        Ok(report)
    })
}

/// Reads a previously persisted selection.
pub fn load_selection_artifact(arts: &RunArtifacts) -> Result<AuxSelection, CliError> {
    let path = arts.selection();
    if !path.exists() {
        return Err(CliError::data(format!(
            "{} does not exist; run select-aux first",
            path.display()
        )));
    }
    Ok(load_selection(&path)?)
}

/// Reads persisted per-language parameters for one loss mode out of a
/// parameters directory.
pub fn load_mode_params(
    params_dir: &Path,
    languages: &[String],
    mode: LossMode,
) -> Result<BTreeMap<String, RetrieverParams>, CliError> {
    let mut params = BTreeMap::new();
    for language in languages {
        let path = params_file(params_dir, language, mode);
        if !path.exists() {
            return Err(CliError::data(format!(
                "{} does not exist; run train first",
                path.display()
            )));
        }
        params.insert(language.clone(), load_params(&path)?);
    }
    Ok(params)
}

/// Languages that have a parameter file for `mode` in the directory, in
/// lexicographic order.
pub fn scan_params_dir(params_dir: &Path, mode: LossMode) -> Result<Vec<String>, CliError> {
    let suffix = format!(".{mode}.bin");
    let entries = std::fs::read_dir(params_dir).map_err(|e| io_data(params_dir, e))?;
    let mut languages: Vec<String> = entries
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| {
            entry
                .file_name()
                .to_str()
                .and_then(|name| name.strip_suffix(&suffix))
                .map(|language| language.to_string())
        })
        .filter(|language| !language.is_empty())
        .collect();
    languages.sort();
    if languages.is_empty() {
        return Err(CliError::data(format!(
            "{} holds no *{suffix} parameter files",
            params_dir.display()
        )));
    }
    Ok(languages)
}

/// Opens the run's score cache, or an in-memory one when caching is off.
pub fn open_cache(cfg: &RunConfig, arts: &RunArtifacts) -> Result<ScoreCache, CliError> {
    if cfg.cache {
        let path = arts.cache();
        ensure_parent(&path)?;
        Ok(ScoreCache::open(&path)?)
    } else {
        Ok(ScoreCache::in_memory())
    }
}

/// The full run: bank selection, per-language training for every loss mode
/// the strategy set needs, context retrieval, strategy evaluation, and the
/// merged report. Inputs come from `cfg.paths`; artifacts land under
/// `cfg.paths.run_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    let arts = RunArtifacts::new(&cfg.paths.run_dir);
    std::fs::create_dir_all(&cfg.paths.run_dir).map_err(|e| io_data(&cfg.paths.run_dir, e))?;
    std::fs::write(arts.config_echo(), cfg.to_toml())
        .map_err(|e| io_data(&arts.config_echo(), e))?;

    let target = load_target_bank(&cfg.paths)?;
    let mut banks = load_aux_banks(&cfg.paths, &target.language)?;
    let test_set = load_test_set(&cfg.paths)?;
    let model = cfg.model.build(&cfg.oracle)?;
    let cache = open_cache(cfg, &arts)?;

    let selection = stage_select_aux(cfg, &target, &banks, &arts)?;
    banks.retain(|language, _| selection.selected.contains(language));

    let modes = modes_for_strategies(&cfg.strategies);
    let trained = if modes.is_empty() {
        TrainedParams::default()
    } else {
        stage_train(
            cfg, &target, &selection, &banks, &modes, model.as_ref(), &cache, &arts,
        )?
    };

    if let Some(params) = trained.for_mode(LossMode::Pairwise) {
        stage_retrieve(cfg, &test_set, &banks, &selection, params, &arts.contexts())?;
    }

    let resources = StrategyResources {
        aux_banks: &banks,
        selection: &selection,
        relic_params: trained.for_mode(LossMode::Pairwise),
        epr_params: trained.for_mode(LossMode::Relevance),
        encoder: cfg.encoder,
        train_seed: cfg.seed,
    };
    let records = stage_evaluate(
        cfg, &test_set, &resources, model.as_ref(), &cache, &arts.records_dir(),
    )?;
    stage_report(&records, &arts.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::synth::{synth_gen, SyntheticCorpusSpec};
    use crate::cli::RunPaths;
    use crate::encoder::EncoderConfig;
    use crate::inference::InferenceConfig;

    #[test]
    fn artifact_paths_are_stable() {
        let arts = RunArtifacts::new("/run");
        assert_eq!(
            arts.params("de", LossMode::Pairwise),
            PathBuf::from("/run/params/de.pairwise.bin")
        );
        assert_eq!(
            arts.metrics("fr", LossMode::Relevance),
            PathBuf::from("/run/metrics/fr.relevance.jsonl")
        );
        assert_eq!(
            arts.records(StrategyTag::ZeroShot),
            PathBuf::from("/run/records/zero_shot.jsonl")
        );
        assert_eq!(arts.contexts(), PathBuf::from("/run/retrieval/contexts.jsonl"));
    }

    #[test]
    fn failed_stages_remove_their_outputs_and_name_themselves() {
        let dir = tempfile::tempdir().unwrap();
        let keep = dir.path().join("keep.txt");
        let drop = dir.path().join("drop.txt");
        std::fs::write(&keep, "ok").unwrap();
        std::fs::write(&drop, "partial").unwrap();
        let err = run_stage("demo", std::slice::from_ref(&drop), || {
            Err::<(), CliError>(CliError::data("boom"))
        })
        .unwrap_err();
        assert!(err.to_string().contains("stage demo"));
        assert_eq!(err.exit_code(), 3);
        assert!(!drop.exists());
        assert!(keep.exists());
        let ok = run_stage("demo", std::slice::from_ref(&keep), || Ok(7));
        assert_eq!(ok.unwrap(), 7);
        assert!(keep.exists());
    }

    #[test]
    fn strategy_sets_pick_their_training_modes() {
        assert_eq!(
            modes_for_strategies(&[StrategyTag::Relic, StrategyTag::Epr, StrategyTag::Random]),
            vec![LossMode::Pairwise, LossMode::Relevance]
        );
        assert_eq!(
            modes_for_strategies(&[StrategyTag::ZeroShot, StrategyTag::Bm25]),
            Vec::<LossMode>::new()
        );
    }

    fn mini_config(corpus_dir: &Path, run_dir: &Path) -> RunConfig {
        let mut cfg = RunConfig {
            seed: 5,
            parallelism: 2,
            strategies: vec![StrategyTag::ZeroShot, StrategyTag::Random, StrategyTag::Relic],
            paths: RunPaths {
                target_bank: corpus_dir.join("sw.bank.jsonl"),
                aux_dir: corpus_dir.join("aux"),
                test_set: corpus_dir.join("sw.test.jsonl"),
                run_dir: run_dir.to_path_buf(),
            },
            encoder: EncoderConfig {
                d_in: 1 << 10,
                d_out: 8,
            },
            inference: InferenceConfig {
                c: 2,
                top_m_per_polarity: 4,
                ..InferenceConfig::default()
            },
            ..RunConfig::default()
        };
        cfg.model.oracle = true;
        cfg.train.f = 3;
        cfg.train.epochs = 2;
        cfg.train.batch_size = 8;
        cfg.train.max_pairs_per_sample = Some(4);
        cfg.normalize();
        cfg
    }

    fn mini_corpus(dir: &Path) {
        let spec = SyntheticCorpusSpec {
            num_topics: 4,
            bank_size: 30,
            triplets_per_language: 40,
            test_size: 10,
            aux_languages: vec!["de".to_string()],
            unrelated_languages: vec![],
            noise_rate: 0.0,
            seed: 3,
            ..SyntheticCorpusSpec::default()
        };
        synth_gen(&spec, dir).unwrap();
    }

    #[test]
    fn pipeline_runs_produce_identical_artifacts() {
        let corpus = tempfile::tempdir().unwrap();
        mini_corpus(corpus.path());
        let run_a = tempfile::tempdir().unwrap();
        let run_b = tempfile::tempdir().unwrap();
        let report_a = run_pipeline(&mini_config(corpus.path(), run_a.path())).unwrap();
        let report_b = run_pipeline(&mini_config(corpus.path(), run_b.path())).unwrap();
        assert_eq!(report_a.to_table(), report_b.to_table());

        let arts_a = RunArtifacts::new(run_a.path());
        let arts_b = RunArtifacts::new(run_b.path());
        for arts in [&arts_a, &arts_b] {
            assert!(arts.config_echo().exists());
            assert!(arts.selection().exists());
            assert!(arts.params("de", LossMode::Pairwise).exists());
            assert!(arts.metrics("de", LossMode::Pairwise).exists());
            assert!(arts.contexts().exists());
            assert!(arts.report().exists());
            assert!(arts.cache().exists());
        }
        for strategy in [StrategyTag::ZeroShot, StrategyTag::Random, StrategyTag::Relic] {
            let bytes_a = std::fs::read(arts_a.records(strategy)).unwrap();
            let bytes_b = std::fs::read(arts_b.records(strategy)).unwrap();
            assert!(!bytes_a.is_empty());
            assert_eq!(bytes_a, bytes_b);
        }
        assert_eq!(
            std::fs::read(arts_a.contexts()).unwrap(),
            std::fs::read(arts_b.contexts()).unwrap()
        );
        // No relevance-mode artifacts without the singles strategy.
        assert!(!arts_a.params("de", LossMode::Relevance).exists());

        // Persisted artifacts load back into usable resources.
        let selection = load_selection_artifact(&arts_a).unwrap();
        assert_eq!(selection.selected, vec!["de".to_string()]);
        let params =
            load_mode_params(&arts_a.params_dir(), &selection.selected, LossMode::Pairwise)
                .unwrap();
        assert_eq!(params["de"].d_in(), 1 << 10);
        assert_eq!(
            scan_params_dir(&arts_a.params_dir(), LossMode::Pairwise).unwrap(),
            vec!["de".to_string()]
        );
    }

    #[test]
    fn missing_artifacts_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let arts = RunArtifacts::new(dir.path());
        assert_eq!(load_selection_artifact(&arts).unwrap_err().exit_code(), 3);
        let err = load_mode_params(&arts.params_dir(), &["de".to_string()], LossMode::Pairwise)
            .unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert_eq!(
            scan_params_dir(&arts.params_dir(), LossMode::Pairwise)
                .unwrap_err()
                .exit_code(),
            3
        );
    }
}
