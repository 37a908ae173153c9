// Scratch diagnostic, not part of the deliverable.
use relic::cli::synth::{generate, SyntheticCorpusSpec};
use relic::encoder::{embed, featurize, item_text, pair_text, similarity, EncoderConfig, RetrieverParams};
use relic::reward::{OracleModel, ScoreCache};
use relic::trainer::{
    build_pair_set, initial_params, mine_candidates, score_pairs, train_retriever, LossMode,
    TrainConfig,
};

fn main() {
    let spec = SyntheticCorpusSpec {
        num_topics: 6,
        bank_size: 200,
        triplets_per_language: 600,
        test_size: 1,
        aux_languages: vec!["de".to_string()],
        unrelated_languages: vec![],
        noise_rate: 0.0,
        tie_rate: 0.5,
        seed: 11,
        ..SyntheticCorpusSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let cfg = TrainConfig {
        f: 10,
        learning_rate: 3e-3,
        batch_size: 32,
        epochs: 60,
        loss_mode: LossMode::Pairwise,
        seed: 271,
        max_pairs_per_sample: None,
        encoder: EncoderConfig {
            d_in: 4096,
            d_out: 32,
        },
        parallelism: 8,
    };
    let model = OracleModel::default();
    let cache = ScoreCache::in_memory();
    let aux = &corpus.aux_banks["de"];
    let init = initial_params(&cfg);
    let started = std::time::Instant::now();
    let outcome = train_retriever(&corpus.target_bank, aux, &model, &cache, &cfg).unwrap();
    println!("trained in {:.1}s", started.elapsed().as_secs_f64());
    let rank_top1 = |params: &RetrieverParams, anchor_text: &str, pairs: &[relic::corpus::ContextPair]| {
        let a = embed(&params.phi, &featurize(anchor_text, cfg.encoder.d_in));
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, p) in pairs.iter().enumerate() {
            let s = similarity(&a, &embed(&params.psi, &featurize(&pair_text(p), cfg.encoder.d_in)));
            if s > best.0 {
                best = (s, i);
            }
        }
        best.1
    };
    let (mut before, mut after, mut n) = (0usize, 0usize, 0usize);
    for anchor in corpus.target_bank.iter() {
        let cands = mine_candidates(anchor, aux, &init, cfg.f).unwrap();
        let pairs = build_pair_set(&cands, cfg.pair_cap());
        let table = score_pairs(&pairs, anchor, &model, &cache, cfg.parallelism).unwrap();
        let text = item_text(anchor);
        if rank_top1(&init, &text, &pairs) == table.target_index {
            before += 1;
        }
        if rank_top1(&outcome.params, &text, &pairs) == table.target_index {
            after += 1;
        }
        n += 1;
    }
    println!(
        "anchors {n}: before {before} ({:.3})  after {after} ({:.3})",
        before as f64 / n as f64,
        after as f64 / n as f64
    );
    println!("final loss {:.4}", outcome.metrics.last().unwrap().mean_loss);
}
