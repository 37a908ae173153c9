//! Choosing which high-resource banks are close enough to the target
//! language to be worth retrieving from.
//!
//! Every bank is summarized as its mean embedding under a fixed seeded
//! reference matrix, so the choice depends only on corpus content and the
//! reference seed, never on training state. Candidates at or above the
//! gamma-th percentile of cosine similarity to the target survive.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ExampleBank;
use crate::encoder::{
    mean_bank_embedding, DenseMatrix, Embedding, EncoderConfig, EncoderError,
};
use crate::seeding::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxSelectConfig {
    /// Percentile of the candidate similarity multiset that a candidate must
    /// reach to be selected.
    pub gamma_percentile: f64,
    /// Floor on how many candidates survive, filled top-down by similarity.
    pub min_selected: usize,
    /// Seed of the fixed reference matrix.
    pub reference_seed: u64,
}

impl Default for AuxSelectConfig {
    fn default() -> Self {
        AuxSelectConfig {
            gamma_percentile: 95.0,
            min_selected: 1,
            reference_seed: 0,
        }
    }
}

/// Outcome of auxiliary selection: the full similarity table and the chosen
/// languages in descending similarity order (ties broken lexicographically).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxSelection {
    pub similarities: BTreeMap<String, f64>,
    pub selected: Vec<String>,
}

#[derive(Debug, Error)]
pub enum AuxSelectError {
    #[error("no candidate banks were given")]
    EmptyCandidates,
    #[error("candidate language {language:?} appears more than once")]
    DuplicateLanguage { language: String },
    #[error("gamma percentile {found} is outside [0, 100]")]
    InvalidGamma { found: f64 },
    #[error("{what} has a zero-norm mean embedding; cosine is undefined")]
    ZeroNorm { what: String },
    #[error(transparent)]
    Bank(#[from] EncoderError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed selection record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Cosine similarity. Errors if either vector has zero norm; scaling either
/// argument by any positive factor leaves the result unchanged.
pub fn cosine(u: &Embedding, v: &Embedding) -> Result<f64, AuxSelectError> {
    let nu = u.norm();
    let nv = v.norm();
    if nu == 0.0 || nv == 0.0 {
        return Err(AuxSelectError::ZeroNorm {
            what: "an input embedding".into(),
        });
    }
    Ok(crate::encoder::similarity(u, v) / (nu * nv))
}

/// The gamma-th percentile of `sorted` (ascending) with linear interpolation
/// between closest ranks, endpoints inclusive.
pub fn percentile(sorted: &[f64], gamma: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty set");
    assert!((0.0..=100.0).contains(&gamma), "gamma outside [0, 100]");
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = gamma / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Applies the percentile rule to a finished similarity table. Returns the
/// selected languages in descending similarity, ties lexicographic.
pub fn select_from_scores(
    scores: &BTreeMap<String, f64>,
    cfg: &AuxSelectConfig,
) -> Result<Vec<String>, AuxSelectError> {
    if scores.is_empty() {
        return Err(AuxSelectError::EmptyCandidates);
    }
    if !(0.0..=100.0).contains(&cfg.gamma_percentile) {
        return Err(AuxSelectError::InvalidGamma {
            found: cfg.gamma_percentile,
        });
    }
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(l, &s)| (l, s)).collect();
    // Descending by score; the BTreeMap already yields ties in lexicographic
    // order and the sort is stable.
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("similarities are finite"));

    let mut ascending: Vec<f64> = ranked.iter().map(|(_, s)| *s).rev().collect();
    ascending.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cutoff = percentile(&ascending, cfg.gamma_percentile);

    let mut selected: Vec<String> = ranked
        .iter()
        .filter(|(_, s)| *s >= cutoff)
        .map(|(l, _)| (*l).clone())
        .collect();
    let floor = cfg.min_selected.min(ranked.len());
    if selected.len() < floor {
        selected = ranked[..floor].iter().map(|(l, _)| (*l).clone()).collect();
    }
    Ok(selected)
}

/// Scores every candidate bank against the target under the fixed reference
/// matrix and applies the percentile rule.
pub fn select_auxiliary(
    target: &ExampleBank,
    candidates: &[ExampleBank],
    cfg: &AuxSelectConfig,
    enc: &EncoderConfig,
) -> Result<AuxSelection, AuxSelectError> {
    if candidates.is_empty() {
        return Err(AuxSelectError::EmptyCandidates);
    }
    let mut rng = seeded_rng(cfg.reference_seed);
    let reference = DenseMatrix::seeded(enc.d_in, enc.d_out, &mut rng);
    let target_mean = mean_bank_embedding(target, &reference)?;
    if target_mean.norm() == 0.0 {
        return Err(AuxSelectError::ZeroNorm {
            what: format!("target bank {:?}", target.language),
        });
    }
    let mut similarities = BTreeMap::new();
    for bank in candidates {
        let mean = mean_bank_embedding(bank, &reference)?;
        if mean.norm() == 0.0 {
            return Err(AuxSelectError::ZeroNorm {
                what: format!("candidate bank {:?}", bank.language),
            });
        }
        let sim = cosine(&target_mean, &mean)?;
        if similarities.insert(bank.language.clone(), sim).is_some() {
            return Err(AuxSelectError::DuplicateLanguage {
                language: bank.language.clone(),
            });
        }
    }
    let selected = select_from_scores(&similarities, cfg)?;
    Ok(AuxSelection {
        similarities,
        selected,
    })
}

#[derive(Serialize, Deserialize)]
struct SelectionRecord {
    language: String,
    similarity: f64,
    selected: bool,
}

/// Writes the selection as a record file, one candidate per line in
/// descending similarity order.
pub fn save_selection(
    selection: &AuxSelection,
    path: impl AsRef<Path>,
) -> Result<(), AuxSelectError> {
    let path = path.as_ref();
    let mut ranked: Vec<(&String, f64)> = selection
        .similarities
        .iter()
        .map(|(l, &s)| (l, s))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("similarities are finite"));
    let mut out = Vec::new();
    for (language, similarity) in ranked {
        let record = SelectionRecord {
            language: language.clone(),
            similarity,
            selected: selection.selected.contains(language),
        };
        serde_json::to_writer(&mut out, &record).expect("selection record serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| AuxSelectError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    file.write_all(&out).map_err(|e| AuxSelectError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<AuxSelection, AuxSelectError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| AuxSelectError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut similarities = BTreeMap::new();
    let mut selected = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let record: SelectionRecord =
            serde_json::from_str(line).map_err(|e| AuxSelectError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
        if record.selected {
            selected.push(record.language.clone());
        }
        similarities.insert(record.language, record.similarity);
    }
    Ok(AuxSelection {
        similarities,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ExampleTriplet;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn bank_with(language: &str, texts: &[(&str, &str)]) -> ExampleBank {
        let mut bank = ExampleBank::new(language);
        for (i, (q, r)) in texts.iter().enumerate() {
            bank.positives.push(ExampleTriplet {
                id: format!("{language}-{i}"),
                language: language.into(),
                query: (*q).into(),
                response: (*r).into(),
                polarity: 1,
            });
        }
        bank
    }

    fn emb(values: &[f64]) -> Embedding {
        Embedding {
            values: values.to_vec(),
        }
    }

    #[test]
    fn cosine_reference_values() {
        let u = emb(&[1.0, 0.0]);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let minus = emb(&[-1.0, 0.0]);
        assert!((cosine(&u, &minus).unwrap() + 1.0).abs() < 1e-12);
        let v = emb(&[0.0, 3.0]);
        assert!(cosine(&u, &v).unwrap().abs() < 1e-12);
        let diag = emb(&[1.0, 1.0]);
        let expected = 1.0 / 2.0f64.sqrt();
        assert!((cosine(&u, &diag).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_norm() {
        let u = emb(&[1.0, 2.0]);
        let zero = emb(&[0.0, 0.0]);
        assert!(matches!(
            cosine(&u, &zero),
            Err(AuxSelectError::ZeroNorm { .. })
        ));
    }

    #[test]
    fn percentile_endpoints_and_midpoint() {
        let values = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&values, 0.0), 1.0);
        assert_eq!(percentile(&values, 100.0), 4.0);
        assert_eq!(percentile(&values, 50.0), 2.5);
        assert_eq!(percentile(&[42.0], 95.0), 42.0);
    }

    #[test]
    fn percentile_95_interpolates_between_top_two() {
        // Nine ascending values; rank = 0.95 * 8 = 7.6 lands between the
        // 8th and 9th entries.
        let values: Vec<f64> = (1..=9).map(|v| (v * 10) as f64).collect();
        let expected = 80.0 + 0.6 * (90.0 - 80.0);
        assert!((percentile(&values, 95.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn nine_distinct_scores_at_gamma_95_keep_only_the_top() {
        let mut scores = BTreeMap::new();
        for (i, s) in [0.11, 0.25, 0.31, 0.42, 0.58, 0.63, 0.72, 0.85, 0.93]
            .iter()
            .enumerate()
        {
            scores.insert(format!("lang{i}"), *s);
        }
        let cfg = AuxSelectConfig::default();
        let selected = select_from_scores(&scores, &cfg).unwrap();
        // Cross-check against the percentile computed on the raw values.
        let mut ascending: Vec<f64> = scores.values().copied().collect();
        ascending.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cutoff = percentile(&ascending, 95.0);
        assert!(0.85 < cutoff && cutoff < 0.93);
        assert_eq!(selected, vec!["lang8".to_string()]);
    }

    #[test]
    fn min_selected_floor_fills_top_down() {
        let mut scores = BTreeMap::new();
        scores.insert("a".to_string(), 0.9);
        scores.insert("b".to_string(), 0.5);
        scores.insert("c".to_string(), 0.1);
        let cfg = AuxSelectConfig {
            gamma_percentile: 100.0,
            min_selected: 2,
            reference_seed: 0,
        };
        assert_eq!(
            select_from_scores(&scores, &cfg).unwrap(),
            vec!["a".to_string(), "b".to_string()]
        );
    }

    #[test]
    fn singleton_candidate_is_always_selected() {
        let mut scores = BTreeMap::new();
        scores.insert("only".to_string(), 0.001);
        let selected = select_from_scores(&scores, &AuxSelectConfig::default()).unwrap();
        assert_eq!(selected, vec!["only".to_string()]);
    }

    #[test]
    fn score_ties_break_lexicographically() {
        let mut scores = BTreeMap::new();
        scores.insert("zulu".to_string(), 0.5);
        scores.insert("alpha".to_string(), 0.5);
        scores.insert("mike".to_string(), 0.5);
        let cfg = AuxSelectConfig {
            gamma_percentile: 0.0,
            min_selected: 1,
            reference_seed: 0,
        };
        assert_eq!(
            select_from_scores(&scores, &cfg).unwrap(),
            vec!["alpha".to_string(), "mike".to_string(), "zulu".to_string()]
        );
    }

    #[test]
    fn invalid_gamma_is_rejected() {
        let mut scores = BTreeMap::new();
        scores.insert("a".to_string(), 0.5);
        let cfg = AuxSelectConfig {
            gamma_percentile: 101.0,
            ..AuxSelectConfig::default()
        };
        assert!(matches!(
            select_from_scores(&scores, &cfg),
            Err(AuxSelectError::InvalidGamma { .. })
        ));
    }

    #[test]
    fn identical_bank_scores_cosine_one() {
        let target = bank_with("tgt", &[("how high", "very high"), ("how low", "so low")]);
        let mut twin = target.clone();
        twin.language = "twin".into();
        for t in twin.positives.iter_mut() {
            t.language = "twin".into();
        }
        let enc = EncoderConfig { d_in: 4096, d_out: 16 };
        let selection =
            select_auxiliary(&target, &[twin], &AuxSelectConfig::default(), &enc).unwrap();
        let sim = selection.similarities["twin"];
        assert!((sim - 1.0).abs() < 1e-12, "cosine of identical banks: {sim}");
        assert_eq!(selection.selected, vec!["twin".to_string()]);
    }

    #[test]
    fn duplicate_candidate_language_is_rejected() {
        let target = bank_with("tgt", &[("q", "r")]);
        let a = bank_with("dup", &[("q1", "r1")]);
        let b = bank_with("dup", &[("q2", "r2")]);
        let enc = EncoderConfig { d_in: 256, d_out: 4 };
        assert!(matches!(
            select_auxiliary(&target, &[a, b], &AuxSelectConfig::default(), &enc),
            Err(AuxSelectError::DuplicateLanguage { .. })
        ));
    }

    #[test]
    fn selection_is_independent_of_candidate_order() {
        let target = bank_with("tgt", &[("shared words here", "more shared words")]);
        let banks = vec![
            bank_with("aa", &[("shared words here", "different tail")]),
            bank_with("bb", &[("unrelated topic", "nothing common")]),
            bank_with("cc", &[("shared words", "words here")]),
        ];
        let enc = EncoderConfig { d_in: 2048, d_out: 8 };
        let cfg = AuxSelectConfig {
            gamma_percentile: 50.0,
            ..AuxSelectConfig::default()
        };
        let forward = select_auxiliary(&target, &banks, &cfg, &enc).unwrap();
        let mut reversed_banks = banks;
        reversed_banks.reverse();
        let reversed = select_auxiliary(&target, &reversed_banks, &cfg, &enc).unwrap();
        assert_eq!(forward, reversed);
    }

    #[test]
    fn selection_round_trips_through_record_file() {
        let dir = tempdir().unwrap();
        let mut similarities = BTreeMap::new();
        similarities.insert("hi".to_string(), 0.93);
        similarities.insert("bn".to_string(), 0.88);
        similarities.insert("xx".to_string(), 0.12);
        let selection = AuxSelection {
            similarities,
            selected: vec!["hi".to_string(), "bn".to_string()],
        };
        let path = dir.path().join("selection.jsonl");
        save_selection(&selection, &path).unwrap();
        let loaded = load_selection(&path).unwrap();
        assert_eq!(selection, loaded);
        let text = std::fs::read_to_string(&path).unwrap();
        let first_line: serde_json::Value =
            serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first_line["language"], "hi");
    }

    proptest! {
        #[test]
        fn lowering_gamma_never_drops_a_selection(
            raw in proptest::collection::vec(0.0f64..1.0, 2..12),
            hi_gamma in 0.0f64..100.0,
            delta in 0.0f64..100.0,
        ) {
            let lo_gamma = (hi_gamma - delta).max(0.0);
            let scores: BTreeMap<String, f64> = raw
                .iter()
                .enumerate()
                .map(|(i, s)| (format!("l{i:02}"), *s))
                .collect();
            let strict = select_from_scores(
                &scores,
                &AuxSelectConfig { gamma_percentile: hi_gamma, min_selected: 1, reference_seed: 0 },
            ).unwrap();
            let relaxed = select_from_scores(
                &scores,
                &AuxSelectConfig { gamma_percentile: lo_gamma, min_selected: 1, reference_seed: 0 },
            ).unwrap();
            for language in &strict {
                prop_assert!(relaxed.contains(language), "{language} lost when gamma relaxed");
            }
        }

        #[test]
        fn cosine_is_scale_invariant(
            u in proptest::collection::vec(-5.0f64..5.0, 4),
            v in proptest::collection::vec(-5.0f64..5.0, 4),
            alpha in 0.01f64..100.0,
        ) {
            let eu = emb(&u);
            let ev = emb(&v);
            prop_assume!(eu.norm() > 1e-9 && ev.norm() > 1e-9);
            let scaled = emb(&u.iter().map(|x| x * alpha).collect::<Vec<_>>());
            let base = cosine(&eu, &ev).unwrap();
            let after = cosine(&scaled, &ev).unwrap();
            prop_assert!((base - after).abs() < 1e-9);
        }
    }
}
