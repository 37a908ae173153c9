// Scratch diagnostic, not part of the deliverable.
use std::collections::BTreeMap;

use relic::corpus::load_bank;
use relic::encoder::{embed, featurize, item_text, similarity, EncoderConfig};
use relic::seeding::subseed;
use relic::trainer::{initial_params, TrainConfig};

fn main() {
    let target = load_bank("/tmp/exp/corpus/sw.bank.jsonl", "sw").unwrap();
    let aux = load_bank("/tmp/exp/corpus/aux/es.bank.jsonl", "es").unwrap();
    let cfg = TrainConfig {
        f: 25,
        seed: subseed(7, "train:es"),
        encoder: EncoderConfig {
            d_in: 32768,
            d_out: 64,
        },
        ..TrainConfig::default()
    };
    let params = initial_params(&cfg);
    let d_in = cfg.encoder.d_in;
    let pos_embs: Vec<_> = aux
        .positives
        .iter()
        .map(|t| embed(&params.psi, &featurize(&item_text(t), d_in)))
        .collect();
    let mut per_topic: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for anchor in target.iter() {
        let topic = anchor.query.split_whitespace().next().unwrap().to_string();
        let ae = embed(&params.phi, &featurize(&item_text(anchor), d_in));
        let mut sims: Vec<(f64, usize)> = pos_embs
            .iter()
            .enumerate()
            .map(|(i, e)| (similarity(&ae, e), i))
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0));
        let matches = sims[..cfg.f]
            .iter()
            .filter(|&&(_, i)| {
                aux.positives[i].query.split_whitespace().next() == Some(topic.as_str())
            })
            .count();
        let e = per_topic.entry(topic).or_default();
        e.0 += 1;
        if matches > 0 {
            e.1 += 1;
        }
        e.2 += matches;
    }
    println!("topic     anchors with_match total_matches");
    for (topic, (n, with, total)) in &per_topic {
        println!("{topic}  {n:4} {with:4} {total:5}");
    }
}
