//! Context selection at evaluation time. Each auxiliary language
//! contributes its best positive-negative pairs for the test item, the
//! per-language picks are merged into one list ordered so the most similar
//! pair sits next to the query, and an approximate character budget trims
//! the least similar pairs when the context would grow too large.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxselect::AuxSelection;
use crate::corpus::{ContextPair, ExampleBank, ExampleTriplet};
use crate::encoder::{
    embed, featurize, item_text, pair_text, query_response_text, Embedding, RetrieverParams,
    similarity,
};
use crate::reward::{
    render_icl, render_icl_singles, render_zero_shot, RenderedPrompt, RewardError, RewardModel,
    RewardScore, ScoreCache, NEGATIVE_MARKER, POSITIVE_MARKER,
};

#[derive(Debug, Error)]
pub enum InferError {
    #[error("invalid inference config: {reason}")]
    InvalidConfig { reason: String },
    #[error("bank {language:?} has no {} examples", if *polarity >= 0 { "positive" } else { "negative" })]
    EmptyPartition { language: String, polarity: i8 },
    #[error("pair bank for {language:?} is empty")]
    EmptyBank { language: String },
}

/// How many pairs reach the prompt and how the pair bank is bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Total in-context pairs across all auxiliary languages.
    pub c: usize,
    /// Per-polarity bound on the pair bank; the bank holds at most m*m pairs.
    pub top_m_per_polarity: usize,
    /// Approximate character budget for the rendered context.
    pub token_budget: usize,
    pub ordering: ContextOrdering,
}

/// Placement of retrieved pairs in the prompt. A closed enumeration with a
/// single member: ascending similarity, most similar adjacent to the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextOrdering {
    #[default]
    AscendingSimilarity,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            c: 8,
            top_m_per_polarity: 50,
            token_budget: 6000,
            ordering: ContextOrdering::AscendingSimilarity,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferError> {
        let fail = |reason: &str| {
            Err(InferError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if self.c < 1 {
            return fail("c must be at least 1");
        }
        if self.top_m_per_polarity < 1 {
            return fail("top_m_per_polarity must be at least 1");
        }
        Ok(())
    }
}

/// All candidate pairs of one auxiliary language for one test item, with
/// their embeddings under that language's trained parameters.
#[derive(Debug, Clone)]
pub struct PairBank {
    pub language: String,
    pub pairs: Vec<ContextPair>,
    pub pair_embeddings: Vec<Embedding>,
}

/// The context chosen for one test item, ascending by similarity so the
/// most similar pair is last. `shortfall` marks that fewer than the
/// configured C pairs survived availability and the budget.
#[derive(Debug, Clone)]
pub struct RetrievedContext {
    pub pairs: Vec<(ContextPair, f64)>,
    pub languages_used: Vec<String>,
    pub shortfall: bool,
}

/// Singles analog of [`RetrievedContext`] for retrievers that rank
/// individual examples instead of pairs.
#[derive(Debug, Clone)]
pub struct RetrievedSingles {
    pub items: Vec<(ExampleTriplet, f64)>,
    pub languages_used: Vec<String>,
    pub shortfall: bool,
}

/// Indices of the `m` largest similarities, descending, ties by position.
fn top_m_indices(sims: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}

fn check_partitions(bank: &ExampleBank) -> Result<(), InferError> {
    for (items, polarity) in [(&bank.positives, 1i8), (&bank.negatives, -1i8)] {
        if items.is_empty() {
            return Err(InferError::EmptyPartition {
                language: bank.language.clone(),
                polarity,
            });
        }
    }
    Ok(())
}

/// Bounds each polarity to the top `m` single items most similar to the
/// test item, then embeds every positive-negative pairing (row-major,
/// positives outer) under the same parameters.
pub fn build_pair_bank(
    aux_bank: &ExampleBank,
    params: &RetrieverParams,
    query: &str,
    response: &str,
    m: usize,
) -> Result<PairBank, InferError> {
    check_partitions(aux_bank)?;
    let d_in = params.d_in();
    let test_emb = embed(
        &params.phi,
        &featurize(&query_response_text(query, response), d_in),
    );
    let shortlist = |items: &[ExampleTriplet]| -> Vec<usize> {
        let sims: Vec<f64> = items
            .iter()
            .map(|it| similarity(&test_emb, &embed(&params.psi, &featurize(&item_text(it), d_in))))
            .collect();
        top_m_indices(&sims, m)
    };
    let pos_idx = shortlist(&aux_bank.positives);
    let neg_idx = shortlist(&aux_bank.negatives);
    let mut pairs = Vec::with_capacity(pos_idx.len() * neg_idx.len());
    for &p in &pos_idx {
        for &n in &neg_idx {
            pairs.push(ContextPair::new(
                aux_bank.positives[p].clone(),
                aux_bank.negatives[n].clone(),
            ));
        }
    }
    let pair_embeddings = pairs
        .iter()
        .map(|pair| embed(&params.psi, &featurize(&pair_text(pair), d_in)))
        .collect();
    Ok(PairBank {
        language: aux_bank.language.clone(),
        pairs,
        pair_embeddings,
    })
}

/// Top `k` pairs by dot product between the test-item embedding and each
/// pair embedding; descending, ties by pair index.
pub fn retrieve_top_k(
    bank: &PairBank,
    params: &RetrieverParams,
    query: &str,
    response: &str,
    k: usize,
) -> Result<Vec<(ContextPair, f64)>, InferError> {
    if bank.pairs.is_empty() {
        return Err(InferError::EmptyBank {
            language: bank.language.clone(),
        });
    }
    let test_emb = embed(
        &params.phi,
        &featurize(&query_response_text(query, response), params.d_in()),
    );
    let sims: Vec<f64> = bank
        .pair_embeddings
        .iter()
        .map(|e| similarity(&test_emb, e))
        .collect();
    Ok(top_m_indices(&sims, k)
        .into_iter()
        .map(|i| (bank.pairs[i].clone(), sims[i]))
        .collect())
}

/// Reusable per-language retrieval state: single-item embeddings are
/// computed once, and pair embeddings are cached across test items by the
/// member pair of bank positions. Produces exactly what [`build_pair_bank`]
/// produces, only cheaper on repeated queries.
pub struct PairRetriever<'a> {
    bank: &'a ExampleBank,
    params: &'a RetrieverParams,
    pos_embs: Vec<Embedding>,
    neg_embs: Vec<Embedding>,
    pair_cache: HashMap<(u32, u32), Embedding>,
}

impl<'a> PairRetriever<'a> {
    pub fn new(bank: &'a ExampleBank, params: &'a RetrieverParams) -> Result<Self, InferError> {
        check_partitions(bank)?;
        let d_in = params.d_in();
        let embed_all = |items: &[ExampleTriplet]| -> Vec<Embedding> {
            items
                .iter()
                .map(|it| embed(&params.psi, &featurize(&item_text(it), d_in)))
                .collect()
        };
        Ok(PairRetriever {
            bank,
            params,
            pos_embs: embed_all(&bank.positives),
            neg_embs: embed_all(&bank.negatives),
            pair_cache: HashMap::new(),
        })
    }

    pub fn language(&self) -> &str {
        &self.bank.language
    }

    pub fn pair_bank(&mut self, query: &str, response: &str, m: usize) -> PairBank {
        let d_in = self.params.d_in();
        let test_emb = embed(
            &self.params.phi,
            &featurize(&query_response_text(query, response), d_in),
        );
        let shortlist = |embs: &[Embedding]| -> Vec<usize> {
            let sims: Vec<f64> = embs.iter().map(|e| similarity(&test_emb, e)).collect();
            top_m_indices(&sims, m)
        };
        let pos_idx = shortlist(&self.pos_embs);
        let neg_idx = shortlist(&self.neg_embs);
        let mut pairs = Vec::with_capacity(pos_idx.len() * neg_idx.len());
        let mut pair_embeddings = Vec::with_capacity(pairs.capacity());
        for &p in &pos_idx {
            for &n in &neg_idx {
                let pair = ContextPair::new(
                    self.bank.positives[p].clone(),
                    self.bank.negatives[n].clone(),
                );
                let emb = self
                    .pair_cache
                    .entry((p as u32, n as u32))
                    .or_insert_with(|| {
                        embed(&self.params.psi, &featurize(&pair_text(&pair), d_in))
                    })
                    .clone();
                pairs.push(pair);
                pair_embeddings.push(emb);
            }
        }
        PairBank {
            language: self.bank.language.clone(),
            pairs,
            pair_embeddings,
        }
    }
}

/// Per-language singles retrieval for rankers over individual examples.
/// Items are indexed in bank iteration order, positives before negatives.
pub struct SinglesRetriever<'a> {
    bank: &'a ExampleBank,
    params: &'a RetrieverParams,
    embs: Vec<Embedding>,
}

impl<'a> SinglesRetriever<'a> {
    pub fn new(bank: &'a ExampleBank, params: &'a RetrieverParams) -> Result<Self, InferError> {
        check_partitions(bank)?;
        let d_in = params.d_in();
        let embs = bank
            .iter()
            .map(|it| embed(&params.psi, &featurize(&item_text(it), d_in)))
            .collect();
        Ok(SinglesRetriever { bank, params, embs })
    }

    /// Top `k` bank items by similarity, descending, ties by bank position.
    pub fn top_k(&self, query: &str, response: &str, k: usize) -> Vec<(ExampleTriplet, f64)> {
        let test_emb = embed(
            &self.params.phi,
            &featurize(&query_response_text(query, response), self.params.d_in()),
        );
        let sims: Vec<f64> = self.embs.iter().map(|e| similarity(&test_emb, e)).collect();
        let items: Vec<&ExampleTriplet> = self.bank.iter().collect();
        top_m_indices(&sims, k)
            .into_iter()
            .map(|i| (items[i].clone(), sims[i]))
            .collect()
    }
}

/// Characters this pair occupies in the rendered context, counting the turn
/// texts and their polarity markers.
pub fn pair_budget_cost(pair: &ContextPair) -> usize {
    let marker = |m: &str| m.chars().count() + 1;
    pair.positive.query.chars().count()
        + pair.positive.response.chars().count()
        + marker(POSITIVE_MARKER)
        + pair.negative.query.chars().count()
        + pair.negative.response.chars().count()
        + marker(NEGATIVE_MARKER)
}

/// Characters this single example occupies in the rendered context.
pub fn single_budget_cost(item: &ExampleTriplet) -> usize {
    let marker = if item.polarity >= 0 {
        POSITIVE_MARKER
    } else {
        NEGATIVE_MARKER
    };
    item.query.chars().count() + item.response.chars().count() + marker.chars().count() + 1
}

/// Languages ordered most-similar-first for handing out remainder slots;
/// unknown languages sort last, ties break lexicographically.
fn remainder_order<'a, T>(
    per_language: &'a BTreeMap<String, Vec<(T, f64)>>,
    selection: &AuxSelection,
) -> Vec<&'a String> {
    let sim_of = |language: &String| {
        selection
            .similarities
            .get(language)
            .copied()
            .unwrap_or(f64::NEG_INFINITY)
    };
    let mut order: Vec<&String> = per_language.keys().collect();
    order.sort_by(|a, b| sim_of(b).total_cmp(&sim_of(a)).then(a.cmp(b)));
    order
}

/// Even allocation across languages: `floor(c / p)` per language, with the
/// leftover slots going one each to the most similar languages. Returns the
/// picked items tagged by language, merged ascending by score.
fn allocate<T: Clone>(
    per_language: &BTreeMap<String, Vec<(T, f64)>>,
    c: usize,
    selection: &AuxSelection,
) -> Vec<(T, f64, String)> {
    let p = per_language.len();
    if p == 0 {
        return Vec::new();
    }
    let base = c / p;
    let remainder = c - base * p;
    let favored: Vec<&String> = remainder_order(per_language, selection)
        .into_iter()
        .take(remainder)
        .collect();
    let mut picked: Vec<(T, f64, String)> = Vec::new();
    for (language, list) in per_language {
        let quota = base + usize::from(favored.contains(&language));
        picked.extend(
            list.iter()
                .take(quota)
                .map(|(item, score)| (item.clone(), *score, language.clone())),
        );
    }
    // Stable: ties keep lexicographic-language, then within-language rank.
    picked.sort_by(|a, b| a.1.total_cmp(&b.1));
    picked
}

fn trim_to_budget<T>(picked: &mut Vec<(T, f64, String)>, budget: usize, cost: impl Fn(&T) -> usize) {
    let mut total: usize = picked.iter().map(|(item, _, _)| cost(item)).sum();
    while total > budget {
        match picked.first() {
            Some((item, _, _)) => total -= cost(item),
            None => break,
        }
        picked.remove(0);
    }
}

fn used_languages<T>(picked: &[(T, f64, String)]) -> Vec<String> {
    let mut seen = Vec::new();
    for (_, _, language) in picked {
        if !seen.iter().any(|s| s == language) {
            seen.push(language.clone());
        }
    }
    seen
}

/// Merges per-language top lists (descending by score) into the final
/// context: even quotas, remainder to the most similar languages, ascending
/// order, then budget trimming that drops the least similar pairs first.
pub fn assemble_context(
    per_language: &BTreeMap<String, Vec<(ContextPair, f64)>>,
    cfg: &InferenceConfig,
    selection: &AuxSelection,
) -> RetrievedContext {
    let mut picked = allocate(per_language, cfg.c, selection);
    trim_to_budget(&mut picked, cfg.token_budget, pair_budget_cost);
    let shortfall = picked.len() < cfg.c;
    let languages_used = used_languages(&picked);
    RetrievedContext {
        pairs: picked
            .into_iter()
            .map(|(pair, score, _)| (pair, score))
            .collect(),
        languages_used,
        shortfall,
    }
}

/// [`assemble_context`] over single examples.
pub fn assemble_singles(
    per_language: &BTreeMap<String, Vec<(ExampleTriplet, f64)>>,
    cfg: &InferenceConfig,
    selection: &AuxSelection,
) -> RetrievedSingles {
    let mut picked = allocate(per_language, cfg.c, selection);
    trim_to_budget(&mut picked, cfg.token_budget, single_budget_cost);
    let shortfall = picked.len() < cfg.c;
    let languages_used = used_languages(&picked);
    RetrievedSingles {
        items: picked
            .into_iter()
            .map(|(item, score, _)| (item, score))
            .collect(),
        languages_used,
        shortfall,
    }
}

/// The prompt for a test item under its retrieved context: in-context when
/// any pairs survived, zero-shot otherwise.
pub fn render_context_prompt(
    query: &str,
    response: &str,
    target_language: &str,
    ctx: &RetrievedContext,
) -> Result<RenderedPrompt, RewardError> {
    if ctx.pairs.is_empty() {
        return render_zero_shot(query, response);
    }
    let pairs: Vec<ContextPair> = ctx.pairs.iter().map(|(pair, _)| pair.clone()).collect();
    render_icl(&pairs, query, response, target_language)
}

/// Singles analog of [`render_context_prompt`].
pub fn render_singles_prompt(
    query: &str,
    response: &str,
    target_language: &str,
    ctx: &RetrievedSingles,
) -> Result<RenderedPrompt, RewardError> {
    if ctx.items.is_empty() {
        return render_zero_shot(query, response);
    }
    let items: Vec<&ExampleTriplet> = ctx.items.iter().map(|(item, _)| item).collect();
    render_icl_singles(&items, query, response, target_language)
}

/// Scores the test item with its retrieved context through the cache.
pub fn score_with_context(
    query: &str,
    response: &str,
    target_language: &str,
    ctx: &RetrievedContext,
    model: &dyn RewardModel,
    cache: &ScoreCache,
) -> Result<RewardScore, RewardError> {
    let prompt = render_context_prompt(query, response, target_language, ctx)?;
    crate::reward::score(model, &prompt, cache)
}
