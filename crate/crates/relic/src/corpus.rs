//! Example banks, preference sets, and the content hashing that keys every
//! cache in the crate.
//!
//! Record files are line-delimited UTF-8 JSON, one record per line. Bank
//! records carry `id`, `language`, `query`, `response`, `label` where the
//! label is the ASCII `"+"` or `"-"`; preference records carry `id`,
//! `language`, `query`, `chosen`, `rejected`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Field separator inside canonical serializations. Sits below the printable
/// range, so ordinary text never collides with a field boundary.
pub const UNIT_SEP: u8 = 0x1f;

pub(crate) fn fnv_init() -> u64 {
    FNV_OFFSET
}

pub(crate) fn fnv_update(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// 64-bit FNV-1a content digest. The constant offset basis is the seed, so
/// the same bytes hash identically across processes, platforms and releases.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContentHash(pub u64);

impl ContentHash {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        ContentHash(fnv_update(fnv_init(), bytes))
    }

    pub fn of_text(text: &str) -> Self {
        Self::of_bytes(text.as_bytes())
    }

    pub fn to_hex(self) -> String {
        format!("{:016x}", self.0)
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({:016x})", self.0)
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// One labeled (query, response) example.
///
/// `polarity` is `+1` for a preferred-quality response and `-1` for a
/// rejected-quality one; no other value is constructed by the loaders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleTriplet {
    pub id: String,
    pub language: String,
    pub query: String,
    pub response: String,
    pub polarity: i8,
}

impl ExampleTriplet {
    pub fn label_str(&self) -> &'static str {
        if self.polarity >= 0 {
            "+"
        } else {
            "-"
        }
    }

    /// Digest of the canonical serialization
    /// `language US query US response US label`. The id is deliberately
    /// excluded: two banks holding the same content hash the same.
    pub fn content_hash(&self) -> ContentHash {
        let mut bytes = Vec::with_capacity(
            self.language.len() + self.query.len() + self.response.len() + 4,
        );
        bytes.extend_from_slice(self.language.as_bytes());
        bytes.push(UNIT_SEP);
        bytes.extend_from_slice(self.query.as_bytes());
        bytes.push(UNIT_SEP);
        bytes.extend_from_slice(self.response.as_bytes());
        bytes.push(UNIT_SEP);
        bytes.extend_from_slice(self.label_str().as_bytes());
        ContentHash::of_bytes(&bytes)
    }
}

/// All examples of one language, partitioned by polarity. Both partitions
/// preserve the order of the file they were loaded from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExampleBank {
    pub language: String,
    pub positives: Vec<ExampleTriplet>,
    pub negatives: Vec<ExampleTriplet>,
}

impl ExampleBank {
    pub fn new(language: impl Into<String>) -> Self {
        ExampleBank {
            language: language.into(),
            positives: Vec::new(),
            negatives: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    /// Positives in file order, then negatives in file order.
    pub fn iter(&self) -> impl Iterator<Item = &ExampleTriplet> {
        self.positives.iter().chain(self.negatives.iter())
    }

    /// Order-sensitive digest of every member's content hash.
    pub fn fingerprint(&self) -> ContentHash {
        let mut bytes = Vec::with_capacity(8 * self.len());
        for t in self.iter() {
            bytes.extend_from_slice(&t.content_hash().0.to_le_bytes());
        }
        ContentHash::of_bytes(&bytes)
    }
}

/// One evaluation item: a query with a preferred and a rejected response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    pub language: String,
    pub query: String,
    #[serde(rename = "chosen")]
    pub preferred: String,
    pub rejected: String,
}

/// A positive example and a negative example presented together as one unit
/// of in-context evidence. Both members come from the same bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPair {
    pub positive: ExampleTriplet,
    pub negative: ExampleTriplet,
    pub language: String,
}

impl ContextPair {
    pub fn new(positive: ExampleTriplet, negative: ExampleTriplet) -> Self {
        let language = positive.language.clone();
        ContextPair {
            positive,
            negative,
            language,
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: label {found:?} is not \"+\" or \"-\"")]
    BadLabel {
        path: PathBuf,
        line: usize,
        found: String,
    },
    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: language {found:?} does not match expected {expected:?}")]
    LanguageMismatch {
        path: PathBuf,
        line: usize,
        found: String,
        expected: String,
    },
    #[error("{path}:{line}: field {field:?} is empty")]
    EmptyField {
        path: PathBuf,
        line: usize,
        field: &'static str,
    },
    #[error("{path}:{line}: chosen and rejected responses are identical")]
    IdenticalResponses { path: PathBuf, line: usize },
}

#[derive(Deserialize)]
struct BankRecordIn {
    id: String,
    language: String,
    query: String,
    response: String,
    label: String,
}

#[derive(Serialize)]
struct BankRecordOut<'a> {
    id: &'a str,
    language: &'a str,
    query: &'a str,
    response: &'a str,
    label: &'a str,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_non_blank(
    value: &str,
    field: &'static str,
    path: &Path,
    line: usize,
) -> Result<(), CorpusError> {
    if value.trim().is_empty() {
        return Err(CorpusError::EmptyField {
            path: path.to_path_buf(),
            line,
            field,
        });
    }
    Ok(())
}

/// Loads a bank file, validating every record and partitioning by label.
///
/// Records keep their file order within each partition. A record whose
/// language differs from `expected_language` is an error, as are duplicate
/// ids, labels outside `"+"` / `"-"`, and blank text fields. An empty file
/// yields an empty bank.
pub fn load_bank(
    path: impl AsRef<Path>,
    expected_language: &str,
) -> Result<ExampleBank, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut bank = ExampleBank::new(expected_language);
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let record: BankRecordIn =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        check_non_blank(&record.id, "id", path, line_no)?;
        check_non_blank(&record.language, "language", path, line_no)?;
        check_non_blank(&record.query, "query", path, line_no)?;
        check_non_blank(&record.response, "response", path, line_no)?;
        let polarity = match record.label.as_str() {
            "+" => 1i8,
            "-" => -1i8,
            other => {
                return Err(CorpusError::BadLabel {
                    path: path.to_path_buf(),
                    line: line_no,
                    found: other.to_string(),
                })
            }
        };
        if record.language != expected_language {
            return Err(CorpusError::LanguageMismatch {
                path: path.to_path_buf(),
                line: line_no,
                found: record.language,
                expected: expected_language.to_string(),
            });
        }
        if !seen_ids.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: record.id,
            });
        }
        let triplet = ExampleTriplet {
            id: record.id,
            language: record.language,
            query: record.query,
            response: record.response,
            polarity,
        };
        if polarity > 0 {
            bank.positives.push(triplet);
        } else {
            bank.negatives.push(triplet);
        }
    }
    Ok(bank)
}

/// Writes a bank as a record file: positives in order, then negatives.
/// Re-loading the output reproduces the bank field for field.
pub fn save_bank(bank: &ExampleBank, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for t in bank.iter() {
        let record = BankRecordOut {
            id: &t.id,
            language: &t.language,
            query: &t.query,
            response: &t.response,
            label: t.label_str(),
        };
        serde_json::to_writer(&mut out, &record).expect("bank record serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Loads a preference set. An empty file is a valid empty set; a record
/// whose chosen and rejected responses coincide is an error.
pub fn load_preference_set(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let pair: PreferencePair =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                reason: e.to_string(),
            })?;
        check_non_blank(&pair.id, "id", path, line_no)?;
        check_non_blank(&pair.language, "language", path, line_no)?;
        check_non_blank(&pair.query, "query", path, line_no)?;
        check_non_blank(&pair.preferred, "chosen", path, line_no)?;
        check_non_blank(&pair.rejected, "rejected", path, line_no)?;
        if pair.preferred == pair.rejected {
            return Err(CorpusError::IdenticalResponses {
                path: path.to_path_buf(),
                line: line_no,
            });
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Writes a preference set as a record file, one pair per line.
pub fn save_preference_set(
    pairs: &[PreferencePair],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for pair in pairs {
        serde_json::to_writer(&mut out, pair).expect("preference record serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn triplet(id: &str, language: &str, query: &str, response: &str, polarity: i8) -> ExampleTriplet {
        ExampleTriplet {
            id: id.into(),
            language: language.into(),
            query: query.into(),
            response: response.into(),
            polarity,
        }
    }

    fn write_lines(dir: &tempfile::TempDir, name: &str, lines: &[&str]) -> PathBuf {
        let path = dir.path().join(name);
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        path
    }

    #[test]
    fn content_hash_matches_reference_values() {
        // Reference digests of the canonical serialization, fixed for the
        // life of the format. A change here means every persisted cache and
        // fingerprint silently invalidates.
        assert_eq!(
            triplet("any", "hi", "q", "r", 1).content_hash(),
            ContentHash(0x4f45_77c6_48d0_5139)
        );
        assert_eq!(
            triplet("any", "hi", "q", "r", -1).content_hash(),
            ContentHash(0x4f45_79c6_48d0_549f)
        );
        assert_eq!(ContentHash::of_text("aa"), ContentHash(0x089c_4307_b545_96b7));
        assert_eq!(ContentHash::of_bytes(b""), ContentHash(FNV_OFFSET));
    }

    #[test]
    fn content_hash_ignores_id_and_sees_polarity() {
        let a = triplet("a", "hi", "q", "r", 1);
        let b = triplet("b", "hi", "q", "r", 1);
        assert_eq!(a.content_hash(), b.content_hash());
        let flipped = triplet("a", "hi", "q", "r", -1);
        assert_ne!(a.content_hash(), flipped.content_hash());
    }

    #[test]
    fn content_hash_separates_field_boundaries() {
        // "ab" + "c" and "a" + "bc" must not collide through concatenation.
        let left = triplet("x", "t", "ab", "c", 1);
        let right = triplet("x", "t", "a", "bc", 1);
        assert_ne!(left.content_hash(), right.content_hash());
    }

    #[test]
    fn load_bank_partitions_in_file_order() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[
                r#"{"id":"e1","language":"hi","query":"q1","response":"r1","label":"+"}"#,
                r#"{"id":"e2","language":"hi","query":"q2","response":"r2","label":"-"}"#,
                r#"{"id":"e3","language":"hi","query":"q3","response":"r3","label":"+"}"#,
                r#"{"id":"e4","language":"hi","query":"q4","response":"r4","label":"-"}"#,
                r#"{"id":"e5","language":"hi","query":"q5","response":"r5","label":"+"}"#,
            ],
        );
        let bank = load_bank(&path, "hi").unwrap();
        assert_eq!(bank.len(), 5);
        let pos_ids: Vec<&str> = bank.positives.iter().map(|t| t.id.as_str()).collect();
        let neg_ids: Vec<&str> = bank.negatives.iter().map(|t| t.id.as_str()).collect();
        assert_eq!(pos_ids, ["e1", "e3", "e5"]);
        assert_eq!(neg_ids, ["e2", "e4"]);
        assert!(bank.iter().all(|t| t.language == "hi"));
    }

    #[test]
    fn load_bank_rejects_bad_label_with_line_number() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[
                r#"{"id":"e1","language":"hi","query":"q","response":"r","label":"+"}"#,
                r#"{"id":"e2","language":"hi","query":"q","response":"r","label":"0"}"#,
            ],
        );
        let err = load_bank(&path, "hi").unwrap_err();
        assert!(
            matches!(err, CorpusError::BadLabel { line: 2, ref found, .. } if found == "0"),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn load_bank_rejects_unicode_minus_label() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[r#"{"id":"e1","language":"hi","query":"q","response":"r","label":"−"}"#],
        );
        let err = load_bank(&path, "hi").unwrap_err();
        assert!(matches!(err, CorpusError::BadLabel { line: 1, .. }));
    }

    #[test]
    fn load_bank_rejects_duplicate_id() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[
                r#"{"id":"e1","language":"hi","query":"q","response":"r","label":"+"}"#,
                r#"{"id":"e1","language":"hi","query":"q2","response":"r2","label":"-"}"#,
            ],
        );
        let err = load_bank(&path, "hi").unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { line: 2, ref id, .. } if id == "e1"));
    }

    #[test]
    fn load_bank_rejects_language_mismatch() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[r#"{"id":"e1","language":"bn","query":"q","response":"r","label":"+"}"#],
        );
        let err = load_bank(&path, "hi").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::LanguageMismatch { line: 1, ref found, ref expected, .. }
                if found == "bn" && expected == "hi"
        ));
    }

    #[test]
    fn load_bank_rejects_blank_text() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[r#"{"id":"e1","language":"hi","query":"  ","response":"r","label":"+"}"#],
        );
        let err = load_bank(&path, "hi").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyField { line: 1, field: "query", .. }));
    }

    #[test]
    fn load_bank_reports_parse_failures_with_line_number() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "bank.jsonl",
            &[
                r#"{"id":"e1","language":"hi","query":"q","response":"r","label":"+"}"#,
                r#"{"id":"e2",..."#,
            ],
        );
        let err = load_bank(&path, "hi").unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, .. }));
    }

    #[test]
    fn bank_round_trip_preserves_every_field() {
        let dir = tempdir().unwrap();
        let mut bank = ExampleBank::new("hi");
        bank.positives.push(triplet("p1", "hi", "what\nnow", "fine \u{1f}tricky", 1));
        bank.positives.push(triplet("p2", "hi", "unicode \u{0915}", "uttar", 1));
        bank.negatives.push(triplet("n1", "hi", "q", "\"quoted\"", -1));
        let path = dir.path().join("bank.jsonl");
        save_bank(&bank, &path).unwrap();
        let reloaded = load_bank(&path, "hi").unwrap();
        assert_eq!(bank, reloaded);
    }

    #[test]
    fn thousand_record_bank_round_trips_with_sizes() {
        let dir = tempdir().unwrap();
        let mut bank = ExampleBank::new("hi");
        for i in 0..1000 {
            let t = triplet(
                &format!("e{i:04}"),
                "hi",
                &format!("query {i}"),
                &format!("response {i}"),
                if i % 2 == 0 { 1 } else { -1 },
            );
            if t.polarity > 0 {
                bank.positives.push(t);
            } else {
                bank.negatives.push(t);
            }
        }
        let path = dir.path().join("big.jsonl");
        save_bank(&bank, &path).unwrap();
        let reloaded = load_bank(&path, "hi").unwrap();
        assert_eq!(reloaded.len(), 1000);
        assert_eq!(reloaded.positives.len(), 500);
        assert_eq!(reloaded.negatives.len(), 500);
        assert_eq!(reloaded.fingerprint(), bank.fingerprint());
    }

    #[test]
    fn load_preference_set_accepts_empty_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_preference_set(&path).unwrap().is_empty());
    }

    #[test]
    fn load_preference_set_rejects_identical_responses() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "prefs.jsonl",
            &[r#"{"id":"p1","language":"hi","query":"q","chosen":"same","rejected":"same"}"#],
        );
        let err = load_preference_set(&path).unwrap_err();
        assert!(matches!(err, CorpusError::IdenticalResponses { line: 1, .. }));
    }

    #[test]
    fn load_preference_set_reports_missing_fields() {
        let dir = tempdir().unwrap();
        let path = write_lines(
            &dir,
            "prefs.jsonl",
            &[r#"{"id":"p1","language":"hi","query":"q","chosen":"a"}"#],
        );
        let err = load_preference_set(&path).unwrap_err();
        assert!(
            matches!(err, CorpusError::Malformed { line: 1, ref reason, .. } if reason.contains("rejected"))
        );
    }

    #[test]
    fn preference_round_trip() {
        let dir = tempdir().unwrap();
        let pairs = vec![
            PreferencePair {
                id: "p1".into(),
                language: "hi".into(),
                query: "q1".into(),
                preferred: "good".into(),
                rejected: "bad".into(),
            },
            PreferencePair {
                id: "p2".into(),
                language: "hi".into(),
                query: "q2".into(),
                preferred: "better\nstill".into(),
                rejected: "worse".into(),
            },
        ];
        let path = dir.path().join("prefs.jsonl");
        save_preference_set(&pairs, &path).unwrap();
        assert_eq!(load_preference_set(&path).unwrap(), pairs);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_bank("/nonexistent/bank.jsonl", "hi").unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    prop_compose! {
        fn arb_text()(s in "[ -~]{1,24}".prop_filter("non-blank", |s| !s.trim().is_empty())) -> String {
            s
        }
    }

    proptest! {
        #[test]
        fn bank_round_trip_holds_for_arbitrary_records(
            texts in proptest::collection::vec((arb_text(), arb_text(), any::<bool>()), 1..20)
        ) {
            let dir = tempdir().unwrap();
            let mut bank = ExampleBank::new("tt");
            for (i, (query, response, positive)) in texts.into_iter().enumerate() {
                let t = triplet(
                    &format!("id{i}"),
                    "tt",
                    &query,
                    &response,
                    if positive { 1 } else { -1 },
                );
                if positive {
                    bank.positives.push(t);
                } else {
                    bank.negatives.push(t);
                }
            }
            let path = dir.path().join("bank.jsonl");
            save_bank(&bank, &path).unwrap();
            let reloaded = load_bank(&path, "tt").unwrap();
            prop_assert_eq!(bank, reloaded);
        }

        #[test]
        fn content_hash_is_deterministic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assert_eq!(ContentHash::of_bytes(&bytes), ContentHash::of_bytes(&bytes));
        }
    }
}
