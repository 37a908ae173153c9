//! Trains one retriever per auxiliary language. For every target-language
//! anchor, nearby positive and negative candidates are mined from the
//! auxiliary bank, every candidate pairing is scored by the reward model
//! with the anchor's own response, and the best-scoring pair becomes the
//! ranking target of a softmax NLL over the pair set. Candidates are mined
//! once with the initial parameters and their reward scores are cached, so
//! the reward model is consulted at most once per (anchor, pair).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxselect::AuxSelection;
use crate::corpus::{ContextPair, ExampleBank, ExampleTriplet};
use crate::encoder::{
    embed, featurize, item_text, pair_text, EncoderConfig, FeatureVector, RetrieverParams,
    similarity,
};
use crate::reward::{
    render_icl, render_icl_singles, score_batch, RenderedPrompt, RewardError, RewardModel,
    ScoreCache,
};
use crate::seeding::{seeded_rng, subseed};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {reason}")]
    InvalidConfig { reason: String },
    #[error("bank {language:?} has no {} examples", polarity_name(*.polarity))]
    EmptyPartition { language: String, polarity: i8 },
    #[error("anchor {anchor:?} produced an empty candidate set")]
    EmptyCandidates { anchor: String },
    #[error("non-finite logit while scoring anchor features")]
    NonFiniteLogit,
    #[error("feature dimension {got} does not match parameter rows {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
}

fn polarity_name(polarity: i8) -> &'static str {
    if polarity >= 0 {
        "positive"
    } else {
        "negative"
    }
}

/// Which ranking signal supervises training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Candidates are positive-negative pairs; the target is the pair whose
    /// in-context presence moves the reward furthest in the anchor's
    /// labeled direction.
    Pairwise,
    /// Candidates are single examples, ranked the same way. This reproduces
    /// retrievers tuned for relevance alone.
    Relevance,
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Pairwise => "pairwise",
            LossMode::Relevance => "relevance",
        })
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pairwise" => Ok(LossMode::Pairwise),
            "relevance" => Ok(LossMode::Relevance),
            other => Err(format!("unknown loss mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Candidate count per polarity.
    pub f: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_mode: LossMode,
    pub seed: u64,
    /// Cap on a sample's pair set; `None` keeps the full f*f product.
    pub max_pairs_per_sample: Option<usize>,
    pub encoder: EncoderConfig,
    /// Concurrent reward-model requests while scoring candidates.
    pub parallelism: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            f: 25,
            learning_rate: 1e-4,
            batch_size: 64,
            epochs: 120,
            loss_mode: LossMode::Pairwise,
            seed: 0,
            max_pairs_per_sample: None,
            encoder: EncoderConfig::default(),
            parallelism: 8,
        }
    }
}

impl TrainConfig {
    pub fn pair_cap(&self) -> usize {
        self.max_pairs_per_sample.unwrap_or(self.f * self.f)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |reason: &str| {
            Err(TrainError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if self.f < 1 {
            return fail("f must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1");
        }
        if self.epochs < 1 {
            return fail("epochs must be at least 1");
        }
        if self.pair_cap() < 1 {
            return fail("max_pairs_per_sample must be at least 1");
        }
        if self.parallelism < 1 {
            return fail("parallelism must be at least 1");
        }
        Ok(())
    }
}

/// Nearest auxiliary candidates of each polarity for one anchor, descending
/// by similarity under the parameters they were mined with.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub anchor: ExampleTriplet,
    pub positives: Vec<ExampleTriplet>,
    pub negatives: Vec<ExampleTriplet>,
}

/// Reward scores of one sample's candidate sequence, index-aligned, plus
/// the selected ranking target.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScoreTable {
    pub scores: Vec<f64>,
    pub target_index: usize,
}

/// Indices of the `f` largest similarities, descending, ties by position.
fn top_f_indices(sims: &[f64], f: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    order.truncate(f);
    order
}

/// Ranks the bank's items by `phi(anchor) . psi(item)` and keeps the top
/// `f` of each polarity.
pub fn mine_candidates(
    anchor: &ExampleTriplet,
    bank: &ExampleBank,
    params: &RetrieverParams,
    f: usize,
) -> Result<CandidateSet, TrainError> {
    for (items, polarity) in [(&bank.positives, 1i8), (&bank.negatives, -1i8)] {
        if items.is_empty() {
            return Err(TrainError::EmptyPartition {
                language: bank.language.clone(),
                polarity,
            });
        }
    }
    let d_in = params.d_in();
    let anchor_emb = embed(&params.phi, &featurize(&item_text(anchor), d_in));
    let rank = |items: &[ExampleTriplet]| -> Vec<ExampleTriplet> {
        let sims: Vec<f64> = items
            .iter()
            .map(|it| {
                similarity(&anchor_emb, &embed(&params.psi, &featurize(&item_text(it), d_in)))
            })
            .collect();
        top_f_indices(&sims, f)
            .into_iter()
            .map(|i| items[i].clone())
            .collect()
    };
    Ok(CandidateSet {
        anchor: anchor.clone(),
        positives: rank(&bank.positives),
        negatives: rank(&bank.negatives),
    })
}

/// Every positive-negative pairing in row-major order (outer loop over
/// positives), truncated to `cap`.
pub fn build_pair_set(cands: &CandidateSet, cap: usize) -> Vec<ContextPair> {
    let mut pairs = Vec::with_capacity(cap.min(cands.positives.len() * cands.negatives.len()));
    'outer: for pos in &cands.positives {
        for neg in &cands.negatives {
            if pairs.len() == cap {
                break 'outer;
            }
            pairs.push(ContextPair::new(pos.clone(), neg.clone()));
        }
    }
    pairs
}

/// Reward for the anchor's own response when this single pair is the
/// in-context demonstration.
pub fn score_pair(
    pair: &ContextPair,
    anchor: &ExampleTriplet,
    model: &dyn RewardModel,
    cache: &ScoreCache,
) -> Result<f64, RewardError> {
    let prompt = render_icl(
        std::slice::from_ref(pair),
        &anchor.query,
        &anchor.response,
        &anchor.language,
    )?;
    Ok(crate::reward::score(model, &prompt, cache)?.0)
}

/// Index maximizing `polarity * score`; ties go to the lowest index. `None`
/// on empty input.
pub fn select_target_pair(scores: &[f64], polarity: i8) -> Option<usize> {
    let sign = polarity as f64;
    scores
        .iter()
        .enumerate()
        .max_by(|(ai, a), (bi, b)| {
            (sign * **a).total_cmp(&(sign * **b)).then(bi.cmp(ai))
        })
        .map(|(i, _)| i)
}

/// Scores a candidate sequence of prompts for one anchor and selects the
/// ranking target.
fn score_prompts(
    prompts: &[RenderedPrompt],
    anchor: &ExampleTriplet,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    parallelism: usize,
) -> Result<PairScoreTable, TrainError> {
    let scores: Vec<f64> = score_batch(model, prompts, cache, parallelism)?
        .into_iter()
        .map(|s| s.0)
        .collect();
    let target_index =
        select_target_pair(&scores, anchor.polarity).ok_or(TrainError::EmptyCandidates {
            anchor: anchor.id.clone(),
        })?;
    Ok(PairScoreTable {
        scores,
        target_index,
    })
}

/// Scores every pair as the sole in-context demonstration for the anchor.
pub fn score_pairs(
    pairs: &[ContextPair],
    anchor: &ExampleTriplet,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    parallelism: usize,
) -> Result<PairScoreTable, TrainError> {
    let prompts = pairs
        .iter()
        .map(|pair| {
            render_icl(
                std::slice::from_ref(pair),
                &anchor.query,
                &anchor.response,
                &anchor.language,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    score_prompts(&prompts, anchor, model, cache, parallelism)
}

/// One anchor prepared for the optimizer: its feature vector, its
/// candidates' feature vectors compressed onto the union of their active
/// rows, and the target index.
struct TrainingInstance {
    anchor_fv: FeatureVector,
    union_rows: Vec<u32>,
    cand_feats: Vec<Vec<(u32, f64)>>,
    target: usize,
}

fn build_instance(
    anchor_fv: FeatureVector,
    cand_fvs: &[FeatureVector],
    target: usize,
) -> TrainingInstance {
    let union: BTreeSet<u32> = cand_fvs
        .iter()
        .flat_map(|fv| fv.indices.iter().copied())
        .collect();
    let union_rows: Vec<u32> = union.into_iter().collect();
    let slot: HashMap<u32, u32> = union_rows
        .iter()
        .enumerate()
        .map(|(i, &row)| (row, i as u32))
        .collect();
    let cand_feats = cand_fvs
        .iter()
        .map(|fv| {
            fv.indices
                .iter()
                .zip(&fv.values)
                .map(|(&row, &v)| (slot[&row], v))
                .collect()
        })
        .collect();
    TrainingInstance {
        anchor_fv,
        union_rows,
        cand_feats,
        target,
    }
}

/// Loss plus the three factors the gradients are assembled from: `q` is
/// the anchor embedding, `g_anchor` the loss gradient w.r.t. it, and `w`
/// the per-union-row candidate coefficients.
struct Backward {
    loss: f64,
    q: Vec<f64>,
    g_anchor: Vec<f64>,
    w: Vec<f64>,
}

fn forward_backward(
    inst: &TrainingInstance,
    params: &RetrieverParams,
) -> Result<Backward, TrainError> {
    if inst.anchor_fv.dim != params.d_in() {
        return Err(TrainError::DimensionMismatch {
            expected: params.d_in(),
            got: inst.anchor_fv.dim,
        });
    }
    let d_out = params.d_out();
    let q = embed(&params.phi, &inst.anchor_fv).values;
    let r: Vec<f64> = inst
        .union_rows
        .iter()
        .map(|&row| {
            let prow = params.psi.row(row as usize);
            q.iter().zip(prow).map(|(a, b)| a * b).sum()
        })
        .collect();
    let z: Vec<f64> = inst
        .cand_feats
        .iter()
        .map(|feats| feats.iter().map(|&(u, v)| v * r[u as usize]).sum())
        .collect();
    if z.iter().any(|zi: &f64| !zi.is_finite()) {
        return Err(TrainError::NonFiniteLogit);
    }
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&zi| (zi - zmax).exp()).collect();
    let denom: f64 = exps.iter().sum();
    let loss = denom.ln() - (z[inst.target] - zmax);
    let mut w = vec![0.0; inst.union_rows.len()];
    for (idx, feats) in inst.cand_feats.iter().enumerate() {
        let coeff = exps[idx] / denom - if idx == inst.target { 1.0 } else { 0.0 };
        for &(u, v) in feats {
            w[u as usize] += coeff * v;
        }
    }
    let mut g_anchor = vec![0.0; d_out];
    for (j, &row) in inst.union_rows.iter().enumerate() {
        if w[j] != 0.0 {
            let prow = params.psi.row(row as usize);
            for k in 0..d_out {
                g_anchor[k] += w[j] * prow[k];
            }
        }
    }
    Ok(Backward {
        loss,
        q,
        g_anchor,
        w,
    })
}

/// Gradient with the shape of [`RetrieverParams`], stored as per-matrix row
/// updates sorted by row index. Absent rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    pub phi: Vec<(u32, Vec<f64>)>,
    pub psi: Vec<(u32, Vec<f64>)>,
}

impl SparseGradient {
    /// Entry lookup for tests; rows not present read as zero.
    pub fn phi_entry(&self, row: u32, col: usize) -> f64 {
        lookup(&self.phi, row, col)
    }

    pub fn psi_entry(&self, row: u32, col: usize) -> f64 {
        lookup(&self.psi, row, col)
    }
}

fn lookup(rows: &[(u32, Vec<f64>)], row: u32, col: usize) -> f64 {
    rows.binary_search_by_key(&row, |(r, _)| *r)
        .map(|i| rows[i].1[col])
        .unwrap_or(0.0)
}

/// Softmax NLL of the target candidate among candidate feature vectors,
/// with exact analytic gradients. Rows untouched by the anchor or the
/// candidates carry no gradient.
pub fn nll_from_features(
    anchor_fv: &FeatureVector,
    cand_fvs: &[FeatureVector],
    target: usize,
    params: &RetrieverParams,
) -> Result<(f64, SparseGradient), TrainError> {
    if target >= cand_fvs.len() {
        return Err(TrainError::InvalidConfig {
            reason: format!("target {target} out of range for {} candidates", cand_fvs.len()),
        });
    }
    let inst = build_instance(anchor_fv.clone(), cand_fvs, target);
    let back = forward_backward(&inst, params)?;
    let phi = inst
        .anchor_fv
        .indices
        .iter()
        .zip(&inst.anchor_fv.values)
        .map(|(&row, &a)| (row, back.g_anchor.iter().map(|g| a * g).collect()))
        .collect();
    let psi = inst
        .union_rows
        .iter()
        .enumerate()
        .map(|(j, &row)| (row, back.q.iter().map(|qk| back.w[j] * qk).collect()))
        .collect();
    Ok((back.loss, SparseGradient { phi, psi }))
}

/// NLL of the target pair within the anchor's pair set.
pub fn pairwise_nll_loss(
    anchor: &ExampleTriplet,
    pairs: &[ContextPair],
    target_index: usize,
    params: &RetrieverParams,
) -> Result<(f64, SparseGradient), TrainError> {
    let d_in = params.d_in();
    let anchor_fv = featurize(&item_text(anchor), d_in);
    let cand_fvs: Vec<FeatureVector> = pairs
        .iter()
        .map(|p| featurize(&pair_text(p), d_in))
        .collect();
    nll_from_features(&anchor_fv, &cand_fvs, target_index, params)
}

/// Per-epoch training record, one line of the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: u32,
    pub mean_loss: f64,
    pub wall_ms: u64,
}

/// Trained parameters plus the loss trajectory that produced them.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RetrieverParams,
    pub metrics: Vec<EpochMetric>,
}

/// Adam that materializes moment vectors only for rows a gradient has
/// touched; all other rows are mathematically frozen at zero moments, so
/// skipping them changes nothing.
struct LazyAdam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    phi_m: HashMap<u32, Vec<f64>>,
    phi_v: HashMap<u32, Vec<f64>>,
    psi_m: HashMap<u32, Vec<f64>>,
    psi_v: HashMap<u32, Vec<f64>>,
}

impl LazyAdam {
    fn new(lr: f64) -> Self {
        LazyAdam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            phi_m: HashMap::new(),
            phi_v: HashMap::new(),
            psi_m: HashMap::new(),
            psi_v: HashMap::new(),
        }
    }

    fn step(
        &mut self,
        params: &mut RetrieverParams,
        phi_grads: &BTreeMap<u32, Vec<f64>>,
        psi_grads: &BTreeMap<u32, Vec<f64>>,
    ) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let cols = params.d_out();
        for (matrix, grads, moments_m, moments_v) in [
            (&mut params.phi, phi_grads, &mut self.phi_m, &mut self.phi_v),
            (&mut params.psi, psi_grads, &mut self.psi_m, &mut self.psi_v),
        ] {
            for (&row, g) in grads {
                let m = moments_m.entry(row).or_insert_with(|| vec![0.0; cols]);
                let v = moments_v.entry(row).or_insert_with(|| vec![0.0; cols]);
                let theta = matrix.row_mut(row as usize);
                for k in 0..cols {
                    m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                    v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    theta[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }
}

/// The parameters a training run starts from. Untrained baselines and
/// before-training measurements reconstruct this exact state.
pub fn initial_params(cfg: &TrainConfig) -> RetrieverParams {
    RetrieverParams::seeded_init(&cfg.encoder, subseed(cfg.seed, "init"))
}

/// Mines, scores, and featurizes every anchor of the target bank under the
/// given (initial) parameters.
fn prepare_instances(
    target_bank: &ExampleBank,
    aux_bank: &ExampleBank,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    cfg: &TrainConfig,
    params: &RetrieverParams,
) -> Result<Vec<TrainingInstance>, TrainError> {
    for (items, polarity) in [(&aux_bank.positives, 1i8), (&aux_bank.negatives, -1i8)] {
        if items.is_empty() {
            return Err(TrainError::EmptyPartition {
                language: aux_bank.language.clone(),
                polarity,
            });
        }
    }
    let d_in = cfg.encoder.d_in;
    // The aux bank is embedded once: mining runs under fixed parameters, so
    // per-item embeddings are anchor-independent.
    let embed_items = |items: &[ExampleTriplet]| -> Vec<crate::encoder::Embedding> {
        items
            .iter()
            .map(|it| embed(&params.psi, &featurize(&item_text(it), d_in)))
            .collect()
    };
    let pos_embs = embed_items(&aux_bank.positives);
    let neg_embs = embed_items(&aux_bank.negatives);
    let mut instances = Vec::new();
    for anchor in target_bank.iter() {
        let anchor_fv = featurize(&item_text(anchor), d_in);
        let anchor_emb = embed(&params.phi, &anchor_fv);
        let pick = |items: &[ExampleTriplet],
                    embs: &[crate::encoder::Embedding]|
         -> Vec<ExampleTriplet> {
            let sims: Vec<f64> = embs.iter().map(|e| similarity(&anchor_emb, e)).collect();
            top_f_indices(&sims, cfg.f)
                .into_iter()
                .map(|i| items[i].clone())
                .collect()
        };
        let cands = CandidateSet {
            anchor: anchor.clone(),
            positives: pick(&aux_bank.positives, &pos_embs),
            negatives: pick(&aux_bank.negatives, &neg_embs),
        };
        let instance = match cfg.loss_mode {
            LossMode::Pairwise => {
                let pairs = build_pair_set(&cands, cfg.pair_cap());
                if pairs.is_empty() {
                    return Err(TrainError::EmptyCandidates {
                        anchor: anchor.id.clone(),
                    });
                }
                let table = score_pairs(&pairs, anchor, model, cache, cfg.parallelism)?;
                let cand_fvs: Vec<FeatureVector> = pairs
                    .iter()
                    .map(|p| featurize(&pair_text(p), d_in))
                    .collect();
                build_instance(anchor_fv, &cand_fvs, table.target_index)
            }
            LossMode::Relevance => {
                let singles: Vec<&ExampleTriplet> =
                    cands.positives.iter().chain(cands.negatives.iter()).collect();
                let prompts = singles
                    .iter()
                    .map(|s| {
                        render_icl_singles(
                            std::slice::from_ref(s),
                            &anchor.query,
                            &anchor.response,
                            &anchor.language,
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let table = score_prompts(&prompts, anchor, model, cache, cfg.parallelism)?;
                let cand_fvs: Vec<FeatureVector> = singles
                    .iter()
                    .map(|s| featurize(&item_text(s), d_in))
                    .collect();
                build_instance(anchor_fv, &cand_fvs, table.target_index)
            }
        };
        instances.push(instance);
    }
    Ok(instances)
}

/// Full training run against one auxiliary bank: one-shot candidate mining
/// under the freshly initialized parameters, then minibatch Adam over the
/// mean NLL, reshuffling every epoch.
pub fn train_retriever(
    target_bank: &ExampleBank,
    aux_bank: &ExampleBank,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if target_bank.is_empty() {
        return Err(TrainError::InvalidConfig {
            reason: format!("target bank {:?} is empty", target_bank.language),
        });
    }
    let mut params = initial_params(cfg);
    let instances = prepare_instances(target_bank, aux_bank, model, cache, cfg, &params)?;
    log::info!(
        "mined {} training instances for {} against {}",
        instances.len(),
        target_bank.language,
        aux_bank.language
    );
    let mut shuffle_rng = seeded_rng(subseed(cfg.seed, "shuffle"));
    let mut adam = LazyAdam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let d_out = cfg.encoder.d_out;
    for epoch in 1..=cfg.epochs as u32 {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut phi_acc: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            let mut psi_acc: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            for &idx in batch {
                let inst = &instances[idx];
                let back = forward_backward(inst, &params)?;
                loss_sum += back.loss;
                for (&row, &a) in inst.anchor_fv.indices.iter().zip(&inst.anchor_fv.values) {
                    let acc = phi_acc.entry(row).or_insert_with(|| vec![0.0; d_out]);
                    for k in 0..d_out {
                        acc[k] += scale * a * back.g_anchor[k];
                    }
                }
                for (j, &row) in inst.union_rows.iter().enumerate() {
                    if back.w[j] != 0.0 {
                        let acc = psi_acc.entry(row).or_insert_with(|| vec![0.0; d_out]);
                        for k in 0..d_out {
                            acc[k] += scale * back.w[j] * back.q[k];
                        }
                    }
                }
            }
            adam.step(&mut params, &phi_acc, &psi_acc);
        }
        let mean_loss = loss_sum / instances.len() as f64;
        log::info!("epoch {epoch}: mean loss {mean_loss:.6}");
        metrics.push(EpochMetric {
            epoch,
            mean_loss,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(TrainOutcome { params, metrics })
}

/// Trains one independent retriever per selected auxiliary language, each
/// under its own derived seed.
pub fn train_all(
    target_bank: &ExampleBank,
    selection: &AuxSelection,
    banks: &BTreeMap<String, ExampleBank>,
    model: &dyn RewardModel,
    cache: &ScoreCache,
    cfg: &TrainConfig,
) -> Result<BTreeMap<String, TrainOutcome>, TrainError> {
    if selection.selected.is_empty() {
        return Err(TrainError::InvalidConfig {
            reason: "auxiliary selection is empty".to_string(),
        });
    }
    let mut out = BTreeMap::new();
    for language in &selection.selected {
        let bank = banks.get(language).ok_or_else(|| TrainError::InvalidConfig {
            reason: format!("no bank loaded for selected language {language:?}"),
        })?;
        let sub_cfg = TrainConfig {
            seed: subseed(cfg.seed, &format!("train:{language}")),
            ..cfg.clone()
        };
        log::info!("training retriever for auxiliary language {language}");
        out.insert(
            language.clone(),
            train_retriever(target_bank, bank, model, cache, &sub_cfg)?,
        );
    }
    Ok(out)
}
