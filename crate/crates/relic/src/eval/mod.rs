//! Pairwise-accuracy evaluation over preference test sets. Every strategy,
//! from zero-shot through the trained retrievers, reduces to the same loop:
//! build an augmented prompt for the preferred and the rejected response
//! independently, score both, and count the strict wins.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::RngExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxselect::AuxSelection;
use crate::corpus::{ContextPair, ExampleBank, ExampleTriplet, PreferencePair};
use crate::encoder::{item_text, query_response_text, EncoderConfig, RetrieverParams};
use crate::inference::{
    assemble_context, assemble_singles, pair_budget_cost, render_context_prompt,
    render_singles_prompt, retrieve_top_k, InferError, InferenceConfig, PairRetriever,
    SinglesRetriever,
};
use crate::reward::{
    render_icl, render_zero_shot, score_batch, RenderedPrompt, RewardError, RewardModel,
    ScoreCache,
};
use crate::seeding::{seeded_rng, subseed};
use crate::trainer::{initial_params, TrainConfig};

mod bm25;
mod report;

pub use bm25::{bm25_rank, bm25_scores, BM25_B, BM25_K1};
pub use report::{build_report, Report};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to aggregate")]
    EmptyRecords,
    #[error("strategy {strategy} needs {what}")]
    MissingResource { strategy: StrategyTag, what: String },
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// The closed set of context-selection strategies the harness compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    ZeroShot,
    Random,
    Bm25,
    #[serde(rename = "topk")]
    TopK,
    Epr,
    Relic,
}

impl StrategyTag {
    /// Every strategy in canonical report order.
    pub const ALL: [StrategyTag; 6] = [
        StrategyTag::ZeroShot,
        StrategyTag::Random,
        StrategyTag::Bm25,
        StrategyTag::TopK,
        StrategyTag::Epr,
        StrategyTag::Relic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyTag::ZeroShot => "zero_shot",
            StrategyTag::Random => "random",
            StrategyTag::Bm25 => "bm25",
            StrategyTag::TopK => "topk",
            StrategyTag::Epr => "epr",
            StrategyTag::Relic => "relic",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyTag::ALL
            .into_iter()
            .find(|tag| tag.as_str() == s)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// Outcome of one preference pair under one strategy. `correct` holds
/// exactly when the preferred response scored strictly higher; equal scores
/// count against the strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub pair_id: String,
    pub language: String,
    pub strategy: StrategyTag,
    pub score_preferred: f64,
    pub score_rejected: f64,
    pub correct: bool,
}

impl EvalRecord {
    pub fn new(
        pair_id: impl Into<String>,
        language: impl Into<String>,
        strategy: StrategyTag,
        score_preferred: f64,
        score_rejected: f64,
    ) -> Self {
        EvalRecord {
            pair_id: pair_id.into(),
            language: language.into(),
            strategy,
            score_preferred,
            score_rejected,
            correct: score_preferred > score_rejected,
        }
    }
}

/// Which side of a preference pair a distribution row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseClass {
    Preferred,
    Rejected,
}

/// One score point for external plotting of per-strategy distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub strategy: StrategyTag,
    pub language: String,
    pub pair_id: String,
    pub class: ResponseClass,
    pub score: f64,
}

/// Everything the strategies draw from. Trained parameter maps are optional
/// because only the strategies that rank with them require them.
pub struct StrategyResources<'a> {
    /// Auxiliary banks participating in retrieval, keyed by language.
    pub aux_banks: &'a BTreeMap<String, ExampleBank>,
    /// Similarities steering remainder slots and language ordering.
    pub selection: &'a AuxSelection,
    /// Pairwise-trained parameters per auxiliary language.
    pub relic_params: Option<&'a BTreeMap<String, RetrieverParams>>,
    /// Relevance-trained parameters per auxiliary language.
    pub epr_params: Option<&'a BTreeMap<String, RetrieverParams>>,
    /// Dimensions for reconstructing untrained parameters.
    pub encoder: EncoderConfig,
    /// The seed training ran under; the untrained baseline derives the same
    /// per-language initial parameters from it.
    pub train_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub inference: InferenceConfig,
    /// Run seed; the random baseline draws per-item sub-seeds from it.
    pub seed: u64,
    /// Concurrent reward-model requests while scoring.
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            inference: InferenceConfig::default(),
            seed: 0,
            parallelism: 8,
        }
    }
}

/// Fraction of records whose preferred response strictly outscored the
/// rejected one. Invariant under record order and under any monotone
/// rescoring applied to both sides alike.
pub fn pairwise_accuracy(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let wins = records.iter().filter(|r| r.correct).count();
    Ok(wins as f64 / records.len() as f64)
}

/// Evaluates one strategy over the whole test set: two prompts per pair,
/// preferred side first, scored through the cache in one batch.
pub fn run_strategy(
    strategy: StrategyTag,
    test_set: &[PreferencePair],
    resources: &StrategyResources,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    cfg: &EvalConfig,
) -> Result<Vec<EvalRecord>, EvalError> {
    cfg.inference.validate()?;
    let prompts = match strategy {
        StrategyTag::ZeroShot => zero_shot_prompts(test_set)?,
        StrategyTag::Random => random_prompts(test_set, resources, cfg)?,
        StrategyTag::Bm25 => bm25_prompts(test_set, resources, cfg)?,
        StrategyTag::TopK => {
            let params = untrained_params(resources);
            pair_retrieval_prompts(test_set, resources, cfg, &params)?
        }
        StrategyTag::Epr => {
            let params = required_params(strategy, resources.epr_params, "relevance-trained")?;
            singles_retrieval_prompts(test_set, resources, cfg, params)?
        }
        StrategyTag::Relic => {
            let params = required_params(strategy, resources.relic_params, "pairwise-trained")?;
            pair_retrieval_prompts(test_set, resources, cfg, params)?
        }
    };
    let scores = score_batch(model, &prompts, cache, cfg.parallelism)?;
    Ok(test_set
        .iter()
        .zip(scores.chunks_exact(2))
        .map(|(pair, side)| {
            EvalRecord::new(&pair.id, &pair.language, strategy, side[0].0, side[1].0)
        })
        .collect())
}

fn required_params<'a>(
    strategy: StrategyTag,
    params: Option<&'a BTreeMap<String, RetrieverParams>>,
    kind: &str,
) -> Result<&'a BTreeMap<String, RetrieverParams>, EvalError> {
    params.ok_or_else(|| EvalError::MissingResource {
        strategy,
        what: format!("{kind} retriever parameters"),
    })
}

fn params_for<'a>(
    strategy: StrategyTag,
    params: &'a BTreeMap<String, RetrieverParams>,
    language: &str,
) -> Result<&'a RetrieverParams, EvalError> {
    params.get(language).ok_or_else(|| EvalError::MissingResource {
        strategy,
        what: format!("retriever parameters for language {language:?}"),
    })
}

/// The exact per-language initial parameters a training run over these
/// resources would start from.
fn untrained_params(resources: &StrategyResources) -> BTreeMap<String, RetrieverParams> {
    resources
        .aux_banks
        .keys()
        .map(|language| {
            let cfg = TrainConfig {
                seed: subseed(resources.train_seed, &format!("train:{language}")),
                encoder: resources.encoder,
                ..TrainConfig::default()
            };
            (language.clone(), initial_params(&cfg))
        })
        .collect()
}

/// Both sides of every pair, preferred first, with no context at all.
fn zero_shot_prompts(test_set: &[PreferencePair]) -> Result<Vec<RenderedPrompt>, EvalError> {
    let mut prompts = Vec::with_capacity(test_set.len() * 2);
    for pair in test_set {
        prompts.push(render_zero_shot(&pair.query, &pair.preferred)?);
        prompts.push(render_zero_shot(&pair.query, &pair.rejected)?);
    }
    Ok(prompts)
}

/// The positive-negative cross products of all auxiliary banks flattened
/// into one index space, languages in lexicographic order, each language
/// block row-major with positives outer.
struct FlatPairSpace<'a> {
    blocks: Vec<(&'a ExampleBank, usize)>,
    total: usize,
}

impl<'a> FlatPairSpace<'a> {
    fn new(aux_banks: &'a BTreeMap<String, ExampleBank>) -> Self {
        let mut blocks = Vec::with_capacity(aux_banks.len());
        let mut total = 0;
        for bank in aux_banks.values() {
            blocks.push((bank, total));
            total += bank.positives.len() * bank.negatives.len();
        }
        FlatPairSpace { blocks, total }
    }

    fn pair_at(&self, flat: usize) -> ContextPair {
        let (bank, start) = self
            .blocks
            .iter()
            .rev()
            .find(|(_, start)| *start <= flat)
            .expect("flat index within total");
        let offset = flat - start;
        let width = bank.negatives.len();
        ContextPair::new(
            bank.positives[offset / width].clone(),
            bank.negatives[offset % width].clone(),
        )
    }
}

/// Uniform sample of `c` distinct pairs from the flattened space, kept in
/// draw order. A space no larger than `c` is enumerated whole instead.
fn sample_random_pairs(
    space: &FlatPairSpace,
    c: usize,
    rng: &mut impl rand::Rng,
) -> Vec<ContextPair> {
    if space.total <= c {
        return (0..space.total).map(|flat| space.pair_at(flat)).collect();
    }
    let mut seen = BTreeSet::new();
    let mut picked = Vec::with_capacity(c);
    while picked.len() < c {
        let flat = rng.random_range(0..space.total);
        if seen.insert(flat) {
            picked.push(space.pair_at(flat));
        }
    }
    picked
}

/// Drops pairs from the front until the context fits the character budget;
/// the front holds the context's least preferred entries.
fn trim_pairs_to_budget(pairs: &mut Vec<ContextPair>, budget: usize) {
    let mut total: usize = pairs.iter().map(pair_budget_cost).sum();
    while total > budget && !pairs.is_empty() {
        total -= pair_budget_cost(&pairs[0]);
        pairs.remove(0);
    }
}

fn icl_or_zero_shot(
    pairs: &[ContextPair],
    query: &str,
    response: &str,
    target_language: &str,
) -> Result<RenderedPrompt, RewardError> {
    if pairs.is_empty() {
        render_zero_shot(query, response)
    } else {
        render_icl(pairs, query, response, target_language)
    }
}

/// Seeded uniform pair sampling. Each (test pair, side) owns a sub-seed, so
/// records are reproducible item by item and the two sides of one pair draw
/// independent contexts.
fn random_prompts(
    test_set: &[PreferencePair],
    resources: &StrategyResources,
    cfg: &EvalConfig,
) -> Result<Vec<RenderedPrompt>, EvalError> {
    let space = FlatPairSpace::new(resources.aux_banks);
    if space.total == 0 {
        return Err(EvalError::MissingResource {
            strategy: StrategyTag::Random,
            what: "a non-empty auxiliary pair space".to_string(),
        });
    }
    let base = subseed(cfg.seed, "random-baseline");
    let mut prompts = Vec::with_capacity(test_set.len() * 2);
    for pair in test_set {
        for (side, response) in [("preferred", &pair.preferred), ("rejected", &pair.rejected)] {
            let mut rng = seeded_rng(subseed(base, &format!("{}/{side}", pair.id)));
            let mut picked = sample_random_pairs(&space, cfg.inference.c, &mut rng);
            trim_pairs_to_budget(&mut picked, cfg.inference.token_budget);
            prompts.push(icl_or_zero_shot(&picked, &pair.query, response, &pair.language)?);
        }
    }
    Ok(prompts)
}

/// Pairs the ranked singles greedily: a positive opens a pair that the next
/// negative of the same language closes, and vice versa. Formed pairs carry
/// the mean of their members' scores.
fn greedy_pair_singles(ranked: &[(&ExampleTriplet, f64)]) -> Vec<(ContextPair, f64)> {
    let mut pending_pos: BTreeMap<&str, Vec<(&ExampleTriplet, f64)>> = BTreeMap::new();
    let mut pending_neg: BTreeMap<&str, Vec<(&ExampleTriplet, f64)>> = BTreeMap::new();
    let mut formed = Vec::new();
    for &(item, score) in ranked {
        let language = item.language.as_str();
        if item.polarity >= 0 {
            match pending_neg.get_mut(language).and_then(|q| (!q.is_empty()).then(|| q.remove(0))) {
                Some((neg, neg_score)) => formed.push((
                    ContextPair::new(item.clone(), neg.clone()),
                    (score + neg_score) / 2.0,
                )),
                None => pending_pos.entry(language).or_default().push((item, score)),
            }
        } else {
            match pending_pos.get_mut(language).and_then(|q| (!q.is_empty()).then(|| q.remove(0))) {
                Some((pos, pos_score)) => formed.push((
                    ContextPair::new(pos.clone(), item.clone()),
                    (score + pos_score) / 2.0,
                )),
                None => pending_neg.entry(language).or_default().push((item, score)),
            }
        }
    }
    formed
}

/// Sparse retrieval baseline: BM25 ranks the single examples of every
/// auxiliary bank against the query-response text, the top C are paired
/// greedily within their language, and the pairs enter the prompt ascending
/// by score so the strongest match sits next to the query.
fn bm25_prompts(
    test_set: &[PreferencePair],
    resources: &StrategyResources,
    cfg: &EvalConfig,
) -> Result<Vec<RenderedPrompt>, EvalError> {
    let singles: Vec<&ExampleTriplet> = resources
        .aux_banks
        .values()
        .flat_map(|bank| bank.iter())
        .collect();
    if singles.is_empty() {
        return Err(EvalError::MissingResource {
            strategy: StrategyTag::Bm25,
            what: "a non-empty auxiliary corpus".to_string(),
        });
    }
    let docs: Vec<String> = singles.iter().map(|item| item_text(item)).collect();
    let mut prompts = Vec::with_capacity(test_set.len() * 2);
    for pair in test_set {
        for response in [&pair.preferred, &pair.rejected] {
            let query_text = query_response_text(&pair.query, response);
            let scores = bm25_scores(&query_text, &docs, BM25_K1, BM25_B);
            let ranked: Vec<(&ExampleTriplet, f64)> =
                bm25_rank(&query_text, &docs, BM25_K1, BM25_B)
                    .into_iter()
                    .take(cfg.inference.c)
                    .map(|i| (singles[i], scores[i]))
                    .collect();
            let mut paired = greedy_pair_singles(&ranked);
            paired.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut picked: Vec<ContextPair> = paired.into_iter().map(|(p, _)| p).collect();
            trim_pairs_to_budget(&mut picked, cfg.inference.token_budget);
            prompts.push(icl_or_zero_shot(&picked, &pair.query, response, &pair.language)?);
        }
    }
    Ok(prompts)
}

/// Dense pair retrieval under the given per-language parameters, shared by
/// the trained pipeline and its untrained ablation.
fn pair_retrieval_prompts(
    test_set: &[PreferencePair],
    resources: &StrategyResources,
    cfg: &EvalConfig,
    params: &BTreeMap<String, RetrieverParams>,
) -> Result<Vec<RenderedPrompt>, EvalError> {
    let strategy = StrategyTag::Relic;
    let mut retrievers = Vec::with_capacity(resources.aux_banks.len());
    for (language, bank) in resources.aux_banks {
        let p = params_for(strategy, params, language)?;
        retrievers.push((language.clone(), p, PairRetriever::new(bank, p)?));
    }
    let mut prompts = Vec::with_capacity(test_set.len() * 2);
    for pair in test_set {
        for response in [&pair.preferred, &pair.rejected] {
            let mut per_language = BTreeMap::new();
            for (language, p, retriever) in retrievers.iter_mut() {
                let bank = retriever.pair_bank(&pair.query, response, cfg.inference.top_m_per_polarity);
                let top = retrieve_top_k(&bank, p, &pair.query, response, cfg.inference.c)?;
                per_language.insert(language.clone(), top);
            }
            let ctx = assemble_context(&per_language, &cfg.inference, resources.selection);
            prompts.push(render_context_prompt(&pair.query, response, &pair.language, &ctx)?);
        }
    }
    Ok(prompts)
}

/// Dense single-example retrieval for relevance-trained parameters, filling
/// the prompt with individually labeled examples instead of pairs.
fn singles_retrieval_prompts(
    test_set: &[PreferencePair],
    resources: &StrategyResources,
    cfg: &EvalConfig,
    params: &BTreeMap<String, RetrieverParams>,
) -> Result<Vec<RenderedPrompt>, EvalError> {
    let mut retrievers = Vec::with_capacity(resources.aux_banks.len());
    for (language, bank) in resources.aux_banks {
        let p = params_for(StrategyTag::Epr, params, language)?;
        retrievers.push((language.clone(), SinglesRetriever::new(bank, p)?));
    }
    let mut prompts = Vec::with_capacity(test_set.len() * 2);
    for pair in test_set {
        for response in [&pair.preferred, &pair.rejected] {
            let mut per_language = BTreeMap::new();
            for (language, retriever) in &retrievers {
                per_language.insert(
                    language.clone(),
                    retriever.top_k(&pair.query, response, cfg.inference.c),
                );
            }
            let ctx = assemble_singles(&per_language, &cfg.inference, resources.selection);
            prompts.push(render_singles_prompt(&pair.query, response, &pair.language, &ctx)?);
        }
    }
    Ok(prompts)
}

fn io_err(path: &Path, source: std::io::Error) -> EvalError {
    EvalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<(), EvalError> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row).expect("record serialization is infallible"));
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, EvalError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut rows = Vec::new();
    for (line_no, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path.to_path_buf(),
            line: line_no + 1,
            reason: e.to_string(),
        })?;
        rows.push((line_no + 1, row));
    }
    Ok(rows)
}

/// One JSON record per line, in record order.
pub fn save_records(records: &[EvalRecord], path: impl AsRef<Path>) -> Result<(), EvalError> {
    write_jsonl(records, path.as_ref())
}

/// Reads records back, rejecting any row whose stored flag contradicts its
/// scores.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, EvalError> {
    let path = path.as_ref();
    let mut records = Vec::new();
    for (line, record) in read_jsonl::<EvalRecord>(path)? {
        if record.correct != (record.score_preferred > record.score_rejected) {
            return Err(EvalError::Malformed {
                path: path.to_path_buf(),
                line,
                reason: "correct flag contradicts the scores".to_string(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Flattens records into per-side score rows for external plotting: the
/// preferred then the rejected score of each record, in record order.
pub fn export_distributions(
    records: &[EvalRecord],
    path: impl AsRef<Path>,
) -> Result<(), EvalError> {
    let rows: Vec<DistributionRow> = records
        .iter()
        .flat_map(|r| {
            [
                (ResponseClass::Preferred, r.score_preferred),
                (ResponseClass::Rejected, r.score_rejected),
            ]
            .map(|(class, score)| DistributionRow {
                strategy: r.strategy,
                language: r.language.clone(),
                pair_id: r.pair_id.clone(),
                class,
                score,
            })
        })
        .collect();
    write_jsonl(&rows, path.as_ref())
}

pub fn load_distributions(path: impl AsRef<Path>) -> Result<Vec<DistributionRow>, EvalError> {
    Ok(read_jsonl(path.as_ref())?.into_iter().map(|(_, row)| row).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{OracleModel, SyntheticOracleConfig};

    fn triplet(id: &str, language: &str, query: &str, response: &str, polarity: i8) -> ExampleTriplet {
        ExampleTriplet {
            id: id.into(),
            language: language.into(),
            query: query.into(),
            response: response.into(),
            polarity,
        }
    }

    /// Bank whose positives carry the oracle's goodness marker and whose
    /// queries open with recognizable topic tokens.
    fn marker_bank(language: &str, topics: &[&str]) -> ExampleBank {
        let mut bank = ExampleBank::new(language);
        for (i, topic) in topics.iter().enumerate() {
            bank.positives.push(triplet(
                &format!("{language}-p{i}"),
                language,
                &format!("{topic} question for {language}"),
                &format!("GOOD {topic} answer {i}"),
                1,
            ));
            bank.negatives.push(triplet(
                &format!("{language}-n{i}"),
                language,
                &format!("{topic} prompt for {language}"),
                &format!("poor {topic} answer {i}"),
                -1,
            ));
        }
        bank
    }

    fn test_pair(id: &str, language: &str, topic: &str) -> PreferencePair {
        PreferencePair {
            id: id.to_string(),
            language: language.to_string(),
            query: format!("{topic} question under test"),
            preferred: format!("GOOD reply about {topic}"),
            rejected: format!("bad reply about {topic}"),
        }
    }

    struct Fixture {
        aux_banks: BTreeMap<String, ExampleBank>,
        selection: AuxSelection,
        test_set: Vec<PreferencePair>,
    }

    fn fixture() -> Fixture {
        let aux_banks: BTreeMap<String, ExampleBank> = [
            ("de".to_string(), marker_bank("de", &["alpha", "beta"])),
            ("fr".to_string(), marker_bank("fr", &["alpha", "gamma"])),
        ]
        .into();
        let selection = AuxSelection {
            similarities: [("de".to_string(), 0.9), ("fr".to_string(), 0.7)].into(),
            selected: vec!["de".to_string(), "fr".to_string()],
        };
        let test_set = vec![
            test_pair("t0", "sw", "alpha"),
            test_pair("t1", "sw", "beta"),
            test_pair("t2", "sw", "gamma"),
        ];
        Fixture {
            aux_banks,
            selection,
            test_set,
        }
    }

    fn resources<'a>(fx: &'a Fixture) -> StrategyResources<'a> {
        StrategyResources {
            aux_banks: &fx.aux_banks,
            selection: &fx.selection,
            relic_params: None,
            epr_params: None,
            encoder: EncoderConfig { d_in: 256, d_out: 8 },
            train_seed: 11,
        }
    }

    fn small_cfg() -> EvalConfig {
        EvalConfig {
            inference: InferenceConfig {
                c: 2,
                top_m_per_polarity: 2,
                ..InferenceConfig::default()
            },
            seed: 5,
            parallelism: 2,
        }
    }

    fn oracle() -> OracleModel {
        OracleModel::new(SyntheticOracleConfig::default())
    }

    fn record(strategy: StrategyTag, sp: f64, sr: f64) -> EvalRecord {
        EvalRecord::new("p", "sw", strategy, sp, sr)
    }

    #[test]
    fn accuracy_is_the_mean_of_correct_flags() {
        let all = vec![
            record(StrategyTag::ZeroShot, 2.0, 1.0),
            record(StrategyTag::ZeroShot, 0.5, -0.5),
        ];
        assert_eq!(pairwise_accuracy(&all).unwrap(), 1.0);
        let two_of_three = vec![
            record(StrategyTag::Relic, 2.0, 1.0),
            record(StrategyTag::Relic, 1.0, 2.0),
            record(StrategyTag::Relic, 3.0, 0.0),
        ];
        let acc = pairwise_accuracy(&two_of_three).unwrap();
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
        assert!((acc - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn equal_scores_count_as_incorrect() {
        let tied = vec![record(StrategyTag::Random, 1.0, 1.0); 4];
        assert!(tied.iter().all(|r| !r.correct));
        assert_eq!(pairwise_accuracy(&tied).unwrap(), 0.0);
    }

    #[test]
    fn empty_record_sets_are_rejected() {
        assert!(matches!(pairwise_accuracy(&[]), Err(EvalError::EmptyRecords)));
    }

    #[test]
    fn accuracy_is_permutation_and_affine_invariant() {
        let scores = [(2.0, 1.0), (0.0, 3.0), (1.5, 1.5), (-1.0, -2.0)];
        let records: Vec<EvalRecord> = scores
            .iter()
            .map(|&(sp, sr)| record(StrategyTag::Bm25, sp, sr))
            .collect();
        let base = pairwise_accuracy(&records).unwrap();
        let mut rotated = records.clone();
        rotated.rotate_left(2);
        assert_eq!(pairwise_accuracy(&rotated).unwrap(), base);
        for (shift, scale) in [(5.0, 1.0), (-3.5, 1.0), (0.0, 4.0), (7.0, 0.25)] {
            let transformed: Vec<EvalRecord> = scores
                .iter()
                .map(|&(sp, sr)| {
                    record(StrategyTag::Bm25, sp * scale + shift, sr * scale + shift)
                })
                .collect();
            assert_eq!(pairwise_accuracy(&transformed).unwrap(), base);
        }
    }

    #[test]
    fn zero_shot_separates_the_marker_corpus() {
        let fx = fixture();
        let records = run_strategy(
            StrategyTag::ZeroShot,
            &fx.test_set,
            &resources(&fx),
            &oracle(),
            &ScoreCache::in_memory(),
            &small_cfg(),
        )
        .unwrap();
        assert_eq!(records.len(), fx.test_set.len());
        assert_eq!(pairwise_accuracy(&records).unwrap(), 1.0);
        assert!(records.iter().all(|r| r.strategy == StrategyTag::ZeroShot));
        assert_eq!(records[0].pair_id, "t0");
        assert_eq!(records[0].language, "sw");
    }

    #[test]
    fn random_strategy_is_deterministic() {
        let fx = fixture();
        let run = || {
            run_strategy(
                StrategyTag::Random,
                &fx.test_set,
                &resources(&fx),
                &oracle(),
                &ScoreCache::in_memory(),
                &small_cfg(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_shot_records_ignore_other_strategies_sharing_the_cache() {
        let fx = fixture();
        let res = resources(&fx);
        let cfg = small_cfg();
        let alone = run_strategy(
            StrategyTag::ZeroShot,
            &fx.test_set,
            &res,
            &oracle(),
            &ScoreCache::in_memory(),
            &cfg,
        )
        .unwrap();
        let shared = ScoreCache::in_memory();
        run_strategy(StrategyTag::Random, &fx.test_set, &res, &oracle(), &shared, &cfg).unwrap();
        run_strategy(StrategyTag::Bm25, &fx.test_set, &res, &oracle(), &shared, &cfg).unwrap();
        let after = run_strategy(
            StrategyTag::ZeroShot,
            &fx.test_set,
            &res,
            &oracle(),
            &shared,
            &cfg,
        )
        .unwrap();
        assert_eq!(alone, after);
    }

    #[test]
    fn random_sampling_is_without_replacement_and_exhaustive_when_small() {
        let fx = fixture();
        let space = FlatPairSpace::new(&fx.aux_banks);
        assert_eq!(space.total, 8);
        let mut rng = seeded_rng(3);
        let all = sample_random_pairs(&space, 20, &mut rng);
        assert_eq!(all.len(), 8);
        let mut ids: Vec<(String, String)> = all
            .iter()
            .map(|p| (p.positive.id.clone(), p.negative.id.clone()))
            .collect();
        let expect_first: Vec<(String, String)> = ["de-p0", "de-p0", "de-p1", "de-p1"]
            .iter()
            .zip(["de-n0", "de-n1", "de-n0", "de-n1"])
            .map(|(p, n)| (p.to_string(), n.to_string()))
            .collect();
        assert_eq!(&ids[..4], &expect_first[..]);
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 8);
        let sampled = sample_random_pairs(&space, 5, &mut rng);
        assert_eq!(sampled.len(), 5);
        let mut sampled_ids: Vec<(String, String)> = sampled
            .iter()
            .map(|p| (p.positive.id.clone(), p.negative.id.clone()))
            .collect();
        sampled_ids.sort();
        sampled_ids.dedup();
        assert_eq!(sampled_ids.len(), 5);
        for pair in &sampled {
            assert_eq!(pair.positive.language, pair.negative.language);
        }
    }

    #[test]
    fn greedy_pairing_stays_within_language() {
        let en_pos_a = triplet("a", "en", "q", "r", 1);
        let de_neg_b = triplet("b", "de", "q", "r", -1);
        let en_neg_c = triplet("c", "en", "q", "r", -1);
        let en_pos_d = triplet("d", "en", "q", "r", 1);
        let ranked = vec![
            (&en_pos_a, 3.0),
            (&de_neg_b, 2.5),
            (&en_neg_c, 2.0),
            (&en_pos_d, 1.5),
        ];
        let formed = greedy_pair_singles(&ranked);
        assert_eq!(formed.len(), 1);
        assert_eq!(formed[0].0.positive.id, "a");
        assert_eq!(formed[0].0.negative.id, "c");
        assert!((formed[0].1 - 2.5).abs() < 1e-12);
    }

    #[test]
    fn greedy_pairing_matches_positives_with_next_negatives_in_order() {
        let p0 = triplet("p0", "en", "q", "r", 1);
        let p1 = triplet("p1", "en", "q", "r", 1);
        let n0 = triplet("n0", "en", "q", "r", -1);
        let n1 = triplet("n1", "en", "q", "r", -1);
        let ranked = vec![(&p0, 4.0), (&p1, 3.0), (&n0, 2.0), (&n1, 1.0)];
        let formed = greedy_pair_singles(&ranked);
        let pairs: Vec<(&str, &str)> = formed
            .iter()
            .map(|(p, _)| (p.positive.id.as_str(), p.negative.id.as_str()))
            .collect();
        assert_eq!(pairs, vec![("p0", "n0"), ("p1", "n1")]);
    }

    #[test]
    fn every_strategy_produces_a_full_record_set() {
        let fx = fixture();
        let mut res = resources(&fx);
        let untrained = untrained_params(&res);
        res.relic_params = Some(&untrained);
        res.epr_params = Some(&untrained);
        let cfg = small_cfg();
        let cache = ScoreCache::in_memory();
        let model = oracle();
        for strategy in StrategyTag::ALL {
            let records =
                run_strategy(strategy, &fx.test_set, &res, &model, &cache, &cfg).unwrap();
            assert_eq!(records.len(), fx.test_set.len(), "strategy {strategy}");
            let acc = pairwise_accuracy(&records).unwrap();
            assert!((0.0..=1.0).contains(&acc), "strategy {strategy}: {acc}");
            for (record, pair) in records.iter().zip(&fx.test_set) {
                assert_eq!(record.strategy, strategy);
                assert_eq!(record.pair_id, pair.id);
                assert!(record.score_preferred.is_finite());
                assert!(record.score_rejected.is_finite());
            }
        }
    }

    #[test]
    fn trained_strategies_demand_their_parameters() {
        let fx = fixture();
        let res = resources(&fx);
        let cfg = small_cfg();
        let cache = ScoreCache::in_memory();
        for strategy in [StrategyTag::Relic, StrategyTag::Epr] {
            let err = run_strategy(strategy, &fx.test_set, &res, &oracle(), &cache, &cfg)
                .unwrap_err();
            match err {
                EvalError::MissingResource { strategy: s, .. } => assert_eq!(s, strategy),
                other => panic!("expected MissingResource, got {other:?}"),
            }
        }
    }

    #[test]
    fn strategy_tags_round_trip_through_text_and_json() {
        for tag in StrategyTag::ALL {
            assert_eq!(tag.to_string().parse::<StrategyTag>().unwrap(), tag);
        }
        assert!("relevance".parse::<StrategyTag>().is_err());
        let json = serde_json::to_string(&record(StrategyTag::TopK, 1.0, 0.0)).unwrap();
        assert!(json.contains("\"strategy\":\"topk\""), "{json}");
        let json = serde_json::to_string(&record(StrategyTag::ZeroShot, 1.0, 0.0)).unwrap();
        assert!(json.contains("\"strategy\":\"zero_shot\""), "{json}");
    }

    #[test]
    fn records_round_trip_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records = vec![
            record(StrategyTag::Relic, 1.5, -0.5),
            record(StrategyTag::Relic, 0.0, 0.0),
        ];
        save_records(&records, &path).unwrap();
        assert_eq!(load_records(&path).unwrap(), records);
    }

    #[test]
    fn malformed_and_contradictory_rows_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let good = serde_json::to_string(&record(StrategyTag::Epr, 1.0, 0.0)).unwrap();
        fs::write(&path, format!("{good}\nnot json\n")).unwrap();
        match load_records(&path).unwrap_err() {
            EvalError::Malformed { line, .. } => assert_eq!(line, 2),
            other => panic!("expected Malformed, got {other:?}"),
        }
        let mut lying = record(StrategyTag::Epr, 1.0, 0.0);
        lying.correct = false;
        fs::write(&path, format!("{}\n", serde_json::to_string(&lying).unwrap())).unwrap();
        match load_records(&path).unwrap_err() {
            EvalError::Malformed { line, reason, .. } => {
                assert_eq!(line, 1);
                assert!(reason.contains("contradicts"));
            }
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn distribution_export_round_trips_and_matches_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dist.jsonl");
        let records = vec![
            record(StrategyTag::ZeroShot, 1.5, -1.5),
            record(StrategyTag::ZeroShot, 0.5, 1.0),
            record(StrategyTag::Relic, 2.0, -2.0),
        ];
        export_distributions(&records, &path).unwrap();
        let rows = load_distributions(&path).unwrap();
        assert_eq!(rows.len(), records.len() * 2);
        let mean_of = |class: ResponseClass| {
            let picked: Vec<f64> = rows
                .iter()
                .filter(|r| r.class == class)
                .map(|r| r.score)
                .collect();
            picked.iter().sum::<f64>() / picked.len() as f64
        };
        let direct_preferred =
            records.iter().map(|r| r.score_preferred).sum::<f64>() / records.len() as f64;
        let direct_rejected =
            records.iter().map(|r| r.score_rejected).sum::<f64>() / records.len() as f64;
        assert!((mean_of(ResponseClass::Preferred) - direct_preferred).abs() < 1e-12);
        assert!((mean_of(ResponseClass::Rejected) - direct_rejected).abs() < 1e-12);
        assert_eq!(rows[0].class, ResponseClass::Preferred);
        assert_eq!(rows[1].class, ResponseClass::Rejected);
        assert_eq!(rows[4].strategy, StrategyTag::Relic);
    }
}
