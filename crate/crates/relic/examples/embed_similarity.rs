//! Hashed character n-gram features, dual-encoder embeddings, and the dot
//! product the retriever ranks by.
//!
//! The two linear maps start from one seeded generator, so a fixed seed
//! pins every number this prints.

use relic::encoder::{embed, featurize, similarity, EncoderConfig, RetrieverParams};

fn main() {
    let enc = EncoderConfig {
        d_in: 4096,
        d_out: 16,
    };

    // Features are L2-normalized counts of character 2-4-grams, hashed into
    // d_in buckets; texts sharing substrings share buckets.
    let a = featurize("safari which road crosses the valley", enc.d_in);
    let b = featurize("safari which road is flooded", enc.d_in);
    let c = featurize("harvest when does the rain arrive", enc.d_in);
    println!(
        "non-zero feature buckets: a={} b={} c={}",
        a.indices.len(),
        b.indices.len(),
        c.indices.len()
    );

    let params = RetrieverParams::seeded(&enc, &mut seeded_rng(7));
    let ea = embed(&params.phi, &a);
    let eb = embed(&params.psi, &b);
    let ec = embed(&params.psi, &c);

    // Shared "safari ... road" mass keeps (a, b) ahead of (a, c) even under
    // untrained random projections.
    let sim_ab = similarity(&ea, &eb);
    let sim_ac = similarity(&ea, &ec);
    println!("sim(a, b) = {sim_ab:+.4}");
    println!("sim(a, c) = {sim_ac:+.4}");
    assert!(sim_ab > sim_ac);
}
