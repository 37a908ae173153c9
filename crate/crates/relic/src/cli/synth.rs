//! Deterministic synthetic corpora for end-to-end experiments. Queries open
//! with a topic token, responses carry or lack the oracle's quality marker,
//! and auxiliary languages share the target's topics while unrelated
//! languages get disjoint ones, so context selection has a planted signal
//! and bank selection has a planted decoy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{save_bank, save_preference_set, ExampleBank, ExampleTriplet, PreferencePair};
use crate::seeding::{seeded_rng, subseed};

use super::CliError;

/// Positive share of the low-resource target bank; positives are scarce and
/// cover only [`covered_topics`] of the topic list, which is the coverage
/// gap auxiliary banks exist to fill.
const TARGET_POSITIVE_RATE: f64 = 0.15;
/// Positive share of high-resource banks.
const AUX_POSITIVE_RATE: f64 = 0.5;
/// Words per language vocabulary.
const VOCABULARY_SIZE: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub num_topics: usize,
    /// Target-bank triplets.
    pub bank_size: usize,
    /// Triplets per auxiliary or unrelated bank.
    pub triplets_per_language: usize,
    /// Preference pairs in the test set.
    pub test_size: usize,
    pub target_language: String,
    /// Languages sharing the target's topics.
    pub aux_languages: Vec<String>,
    /// Languages with disjoint topic sets, planted to be rejected by bank
    /// selection.
    pub unrelated_languages: Vec<String>,
    /// Probability that a record's label (or a test pair's side order) is
    /// flipped against its marker.
    pub noise_rate: f64,
    /// Fraction of test pairs where both responses carry the same marker
    /// polarity, decidable only through context.
    pub tie_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            num_topics: 20,
            bank_size: 1000,
            triplets_per_language: 5000,
            test_size: 700,
            target_language: "sw".to_string(),
            aux_languages: vec!["de".to_string(), "fr".to_string(), "es".to_string()],
            unrelated_languages: vec!["zz".to_string()],
            noise_rate: 0.05,
            tie_rate: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |reason: String| Err(CliError::Config { reason });
        if self.num_topics < 2 {
            return fail("num_topics must be at least 2 so ties have a decoy topic".into());
        }
        if self.bank_size < 1 || self.triplets_per_language < 1 || self.test_size < 1 {
            return fail("bank_size, triplets_per_language, and test_size must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return fail(format!("noise_rate {} is outside [0, 0.5)", self.noise_rate));
        }
        if !(0.0..=1.0).contains(&self.tie_rate) {
            return fail(format!("tie_rate {} is outside [0, 1]", self.tie_rate));
        }
        let mut languages = vec![self.target_language.clone()];
        languages.extend(self.aux_languages.iter().cloned());
        languages.extend(self.unrelated_languages.iter().cloned());
        if languages.iter().any(|l| l.is_empty()) {
            return fail("language tags must be non-empty".into());
        }
        let mut seen = languages.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != languages.len() {
            return fail("language tags must be distinct across target, aux, and unrelated".into());
        }
        if self.aux_languages.is_empty() {
            return fail("at least one auxiliary language is required".into());
        }
        Ok(())
    }

    /// Topics the target bank's positives are allowed to use: the first
    /// three quarters of the topic list, rounded up.
    pub fn covered_topics(&self) -> usize {
        (self.num_topics * 3).div_ceil(4)
    }
}

/// A generated corpus: the low-resource bank, every candidate bank keyed by
/// language (topic-sharing and unrelated alike), and the preference pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub target_bank: ExampleBank,
    pub aux_banks: BTreeMap<String, ExampleBank>,
    pub test_set: Vec<PreferencePair>,
}

fn chance(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn word(rng: &mut ChaCha8Rng, len_range: std::ops::RangeInclusive<usize>) -> String {
    let len = rng.random_range(len_range);
    (0..len)
        .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
        .collect()
}

/// Topic tokens are always this long while vocabulary words are shorter, so
/// a topic can never collide with a filler word.
const TOPIC_LENGTH: usize = 8;

/// `n` fresh random topic tokens, each rejected until it misses `taken`.
/// Rejection keeps every topic set in a corpus pairwise disjoint no matter
/// which stream it came from.
fn draw_topics(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    (0..n)
        .map(|_| loop {
            let candidate = word(rng, TOPIC_LENGTH..=TOPIC_LENGTH);
            if taken.insert(candidate.clone()) {
                break candidate;
            }
        })
        .collect()
}

/// The topic list the target and auxiliary languages share.
fn shared_topics(spec: &SyntheticCorpusSpec) -> Vec<String> {
    let mut rng = seeded_rng(subseed(subseed(spec.seed, "corpus"), "topics"));
    draw_topics(&mut rng, spec.num_topics, &mut BTreeSet::new())
}

fn vocabulary(spec: &SyntheticCorpusSpec, language: &str) -> Vec<String> {
    let mut rng = seeded_rng(subseed(
        subseed(spec.seed, "corpus"),
        &format!("vocab:{language}"),
    ));
    (0..VOCABULARY_SIZE).map(|_| word(&mut rng, 4..=6)).collect()
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [String]) -> &'a str {
    &items[rng.random_range(0..items.len())]
}

fn query_text(rng: &mut ChaCha8Rng, topic: &str, vocab: &[String]) -> String {
    let a = pick(rng, vocab);
    let b = pick(rng, vocab);
    format!("{topic} {a} {b}")
}

/// Bank responses carry the marker but not the topic: the query alone fixes
/// an item's topic, which keeps topic tokens from dominating item
/// embeddings and starving candidate mining of same-topic matches.
fn bank_response_text(rng: &mut ChaCha8Rng, vocab: &[String], good: bool) -> String {
    let a = pick(rng, vocab);
    let b = pick(rng, vocab);
    if good {
        format!("GOOD {a} {b}")
    } else {
        format!("{a} {b}")
    }
}

/// Test responses commit to a topic; which side of a preference pair
/// commits to the query's own topic is the only signal that separates
/// marker-tied sides.
fn test_response_text(rng: &mut ChaCha8Rng, topic: &str, vocab: &[String], good: bool) -> String {
    let w = pick(rng, vocab);
    if good {
        format!("GOOD {topic} {w}")
    } else {
        format!("{topic} {w}")
    }
}

/// One bank: each triplet gets a topic-opening query, a response whose
/// marker matches its intended polarity, and a recorded label flipped
/// against the marker at the noise rate.
fn generate_bank(
    spec: &SyntheticCorpusSpec,
    language: &str,
    topics: &[String],
    positive_topics: usize,
    size: usize,
    positive_rate: f64,
) -> ExampleBank {
    let vocab = vocabulary(spec, language);
    let mut rng = seeded_rng(subseed(
        subseed(spec.seed, "corpus"),
        &format!("bank:{language}"),
    ));
    let mut bank = ExampleBank::new(language);
    for i in 0..size {
        let good = chance(&mut rng, positive_rate);
        let topic_pool = if good { positive_topics } else { topics.len() };
        let topic = topics[rng.random_range(0..topic_pool)].clone();
        let query = query_text(&mut rng, &topic, &vocab);
        let response = bank_response_text(&mut rng, &vocab, good);
        let flipped = chance(&mut rng, spec.noise_rate);
        let polarity: i8 = match (good, flipped) {
            (true, false) | (false, true) => 1,
            _ => -1,
        };
        let triplet = ExampleTriplet {
            id: format!("{language}-{i:05}"),
            language: language.to_string(),
            query,
            response,
            polarity,
        };
        if polarity >= 0 {
            bank.positives.push(triplet);
        } else {
            bank.negatives.push(triplet);
        }
    }
    bank
}

/// Preference pairs over the target language. Clean pairs are decided by
/// the marker alone. Tie pairs share marker polarity and differ in where
/// the response commits its topic: among marker-good responses the on-topic
/// one is preferred, among marker-bad responses the on-topic one is more
/// confidently wrong and therefore rejected.
fn generate_test_set(spec: &SyntheticCorpusSpec, topics: &[String]) -> Vec<PreferencePair> {
    let vocab = vocabulary(spec, &spec.target_language);
    let mut rng = seeded_rng(subseed(subseed(spec.seed, "corpus"), "test"));
    let mut pairs = Vec::with_capacity(spec.test_size);
    for i in 0..spec.test_size {
        let topic = topics[rng.random_range(0..topics.len())].clone();
        let query = query_text(&mut rng, &topic, &vocab);
        let is_tie = chance(&mut rng, spec.tie_rate);
        let (mut preferred, mut rejected) = if is_tie {
            let offset = rng.random_range(1..topics.len());
            let decoy_index = (topics.iter().position(|t| *t == topic).expect("topic is drawn from the list")
                + offset)
                % topics.len();
            let decoy = topics[decoy_index].clone();
            if chance(&mut rng, 0.5) {
                // Both good: the on-topic response wins.
                (
                    test_response_text(&mut rng, &topic, &vocab, true),
                    test_response_text(&mut rng, &decoy, &vocab, true),
                )
            } else {
                // Both bad: the on-topic response loses.
                (
                    test_response_text(&mut rng, &decoy, &vocab, false),
                    test_response_text(&mut rng, &topic, &vocab, false),
                )
            }
        } else {
            (
                test_response_text(&mut rng, &topic, &vocab, true),
                test_response_text(&mut rng, &topic, &vocab, false),
            )
        };
        if chance(&mut rng, spec.noise_rate) {
            std::mem::swap(&mut preferred, &mut rejected);
        }
        pairs.push(PreferencePair {
            id: format!("{}-t{i:05}", spec.target_language),
            language: spec.target_language.clone(),
            query,
            preferred,
            rejected,
        });
    }
    pairs
}

/// Generates the whole corpus in memory. Pure in the spec: equal specs give
/// equal corpora, field for field.
pub fn generate(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus, CliError> {
    spec.validate()?;
    let topics = shared_topics(spec);
    let mut taken: BTreeSet<String> = topics.iter().cloned().collect();
    let target_bank = generate_bank(
        spec,
        &spec.target_language,
        &topics,
        spec.covered_topics(),
        spec.bank_size,
        TARGET_POSITIVE_RATE,
    );
    let mut aux_banks = BTreeMap::new();
    for language in &spec.aux_languages {
        aux_banks.insert(
            language.clone(),
            generate_bank(
                spec,
                language,
                &topics,
                topics.len(),
                spec.triplets_per_language,
                AUX_POSITIVE_RATE,
            ),
        );
    }
    for language in &spec.unrelated_languages {
        let mut rng = seeded_rng(subseed(
            subseed(spec.seed, "corpus"),
            &format!("topics:{language}"),
        ));
        let private = draw_topics(&mut rng, spec.num_topics, &mut taken);
        aux_banks.insert(
            language.clone(),
            generate_bank(
                spec,
                language,
                &private,
                private.len(),
                spec.triplets_per_language,
                AUX_POSITIVE_RATE,
            ),
        );
    }
    let test_set = generate_test_set(spec, &topics);
    Ok(SyntheticCorpus {
        target_bank,
        aux_banks,
        test_set,
    })
}

/// Artifact layout of a generated corpus directory.
pub struct CorpusPaths {
    pub target_bank: PathBuf,
    pub aux_dir: PathBuf,
    pub test_set: PathBuf,
    pub spec_echo: PathBuf,
}

pub fn corpus_paths(dir: &Path, target_language: &str) -> CorpusPaths {
    CorpusPaths {
        target_bank: dir.join(format!("{target_language}.bank.jsonl")),
        aux_dir: dir.join("aux"),
        test_set: dir.join(format!("{target_language}.test.jsonl")),
        spec_echo: dir.join("corpus-spec.toml"),
    }
}

/// Generates and persists a corpus: target bank and test set at the top
/// level, candidate banks under `aux/`, and the spec echoed beside them.
pub fn synth_gen(spec: &SyntheticCorpusSpec, dir: &Path) -> Result<SyntheticCorpus, CliError> {
    let corpus = generate(spec)?;
    let paths = corpus_paths(dir, &spec.target_language);
    let io = |path: &Path, e: std::io::Error| CliError::data(format!("{}: {e}", path.display()));
    std::fs::create_dir_all(&paths.aux_dir).map_err(|e| io(&paths.aux_dir, e))?;
    save_bank(&corpus.target_bank, &paths.target_bank)?;
    for (language, bank) in &corpus.aux_banks {
        save_bank(bank, paths.aux_dir.join(format!("{language}.bank.jsonl")))?;
    }
    save_preference_set(&corpus.test_set, &paths.test_set)?;
    std::fs::write(
        &paths.spec_echo,
        toml::to_string_pretty(spec).expect("corpus spec serializes"),
    )
    .map_err(|e| io(&paths.spec_echo, e))?;
    Ok(corpus)
}
