// Scratch diagnostic, not part of the deliverable.
use std::collections::BTreeMap;

use relic::auxselect::AuxSelection;
use relic::corpus::{load_bank, load_preference_set, ExampleBank};
use relic::encoder::{EncoderConfig, RetrieverParams};
use relic::eval::{pairwise_accuracy, run_strategy, EvalConfig, StrategyResources, StrategyTag};
use relic::inference::InferenceConfig;
use relic::reward::{OracleModel, ScoreCache};
use relic::trainer::{train_all, LossMode, TrainConfig};

fn main() {
    let target = load_bank("/tmp/exp/corpus/sw.bank.jsonl", "sw").unwrap();
    let es = load_bank("/tmp/exp/corpus/aux/es.bank.jsonl", "es").unwrap();
    let test = load_preference_set("/tmp/exp/corpus/sw.test.jsonl").unwrap();
    let model = OracleModel::default();
    let cache = ScoreCache::in_memory();
    let selection_es = AuxSelection {
        similarities: BTreeMap::from([("es".to_string(), 1.0)]),
        selected: vec!["es".to_string()],
    };
    let banks_es = BTreeMap::from([("es".to_string(), es.clone())]);

    let eval_once = |params: &BTreeMap<String, RetrieverParams>,
                     banks: &BTreeMap<String, ExampleBank>,
                     selection: &AuxSelection,
                     enc: EncoderConfig|
     -> f64 {
        let eval_cfg = EvalConfig {
            inference: InferenceConfig {
                c: 8,
                top_m_per_polarity: 50,
                ..InferenceConfig::default()
            },
            seed: 7,
            parallelism: 8,
        };
        let resources = StrategyResources {
            aux_banks: banks,
            selection,
            relic_params: Some(params),
            epr_params: Some(params),
            encoder: enc,
            train_seed: 7,
        };
        let records =
            run_strategy(StrategyTag::Relic, &test, &resources, &model, &cache, &eval_cfg).unwrap();
        pairwise_accuracy(&records).unwrap()
    };

    let train_mode = |cfg: &TrainConfig, mode: LossMode| -> BTreeMap<String, RetrieverParams> {
        let cfg = TrainConfig {
            loss_mode: mode,
            ..cfg.clone()
        };
        train_all(&target, &selection_es, &banks_es, &model, &cache, &cfg)
            .unwrap()
            .into_iter()
            .map(|(l, o)| (l, o.params))
            .collect()
    };

    let base = TrainConfig {
        f: 25,
        learning_rate: 3e-3,
        batch_size: 64,
        epochs: 40,
        loss_mode: LossMode::Pairwise,
        seed: 7,
        max_pairs_per_sample: None,
        encoder: EncoderConfig {
            d_in: 32768,
            d_out: 64,
        },
        parallelism: 8,
    };

    let grid: Vec<(&str, TrainConfig)> = vec![
        ("ep24", TrainConfig { epochs: 24, ..base.clone() }),
        ("ep40", base.clone()),
        ("ep60", TrainConfig { epochs: 60, ..base.clone() }),
        ("ep80", TrainConfig { epochs: 80, ..base.clone() }),
        ("lr2e-3", TrainConfig { learning_rate: 2e-3, ..base.clone() }),
        ("lr5e-3", TrainConfig { learning_rate: 5e-3, ..base.clone() }),
        (
            "d96",
            TrainConfig {
                encoder: EncoderConfig {
                    d_in: 32768,
                    d_out: 96,
                },
                ..base.clone()
            },
        ),
    ];
    for (label, cfg) in &grid {
        let t0 = std::time::Instant::now();
        let pw = train_mode(cfg, LossMode::Pairwise);
        let rv = train_mode(cfg, LossMode::Relevance);
        let acc_pw = eval_once(&pw, &banks_es, &selection_es, cfg.encoder);
        let acc_rv = eval_once(&rv, &banks_es, &selection_es, cfg.encoder);
        let mark = if acc_pw >= acc_rv { "OK " } else { "BAD" };
        println!(
            "{mark} {label:8} pairwise {acc_pw:.4}  relevance {acc_rv:.4}  diff {:+.4}  ({:.0}s)",
            acc_pw - acc_rv,
            t0.elapsed().as_secs_f64()
        );
    }
}
