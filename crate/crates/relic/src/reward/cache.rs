//! Bit-exact score memoization keyed by prompt content. Entries survive
//! process restarts through an append-only sidecar file, so repeated
//! evaluation runs hit the backend only for prompts never seen before.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{RewardError, RewardScore};

struct CacheState {
    entries: HashMap<u64, u64>,
    sink: Option<File>,
}

/// Maps prompt cache keys to score bit patterns. A hit reproduces the stored
/// score down to the last bit; interior mutability keeps lookups usable from
/// scoring worker threads.
pub struct ScoreCache {
    state: Mutex<CacheState>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    /// A cache that lives only as long as the process.
    pub fn in_memory() -> Self {
        ScoreCache {
            state: Mutex::new(CacheState {
                entries: HashMap::new(),
                sink: None,
            }),
            path: None,
        }
    }

    /// Opens a persistent cache, replaying any entries already on disk.
    /// Lines that do not parse are dropped with a warning; everything
    /// before them is kept.
    pub fn open(path: &Path) -> Result<Self, RewardError> {
        let io_err = |source: std::io::Error| RewardError::CacheIo {
            path: path.to_path_buf(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(io_err)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.is_empty() {
                    continue;
                }
                match parse_line(&line) {
                    Some((key, bits)) => {
                        entries.insert(key, bits);
                    }
                    None => log::warn!(
                        "dropping corrupt cache line {} in {}",
                        lineno + 1,
                        path.display()
                    ),
                }
            }
        }
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(ScoreCache {
            state: Mutex::new(CacheState {
                entries,
                sink: Some(sink),
            }),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, key: u64) -> Option<RewardScore> {
        let state = self.state.lock().expect("cache lock poisoned");
        state
            .entries
            .get(&key)
            .map(|bits| RewardScore(f64::from_bits(*bits)))
    }

    /// Stores a score, appending it to the sidecar file when one is open.
    /// Re-putting an existing key overwrites in memory and re-appends; on
    /// replay the last occurrence wins, so the two stay consistent.
    pub fn put(&self, key: u64, score: RewardScore) -> Result<(), RewardError> {
        let mut state = self.state.lock().expect("cache lock poisoned");
        let bits = score.0.to_bits();
        state.entries.insert(key, bits);
        if let Some(sink) = state.sink.as_mut() {
            let line = format!("{key:016x} {bits:016x}\n");
            sink.write_all(line.as_bytes()).map_err(|source| {
                RewardError::CacheIo {
                    path: self.path.clone().unwrap_or_default(),
                    source,
                }
            })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("cache lock poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_line(line: &str) -> Option<(u64, u64)> {
    let (key_hex, bits_hex) = line.split_once(' ')?;
    if key_hex.len() != 16 || bits_hex.len() != 16 {
        return None;
    }
    let key = u64::from_str_radix(key_hex, 16).ok()?;
    let bits = u64::from_str_radix(bits_hex, 16).ok()?;
    Some((key, bits))
}
