//! Prompt rendering and reward scoring against a pluggable backend.
//!
//! A [`RenderedPrompt`] is the single currency: templates produce it, the
//! synthetic oracle consumes it in process, and the HTTP client ships it to
//! a remote scorer over the `/v1/score` wire protocol. Every score funnels
//! through [`score`], which consults a [`ScoreCache`] keyed by content hash
//! so repeated prompts never hit the backend twice.

mod cache;
mod client;
mod oracle;
mod server;
mod template;

pub use cache::ScoreCache;
pub use client::RemoteModel;
pub use oracle::{synthetic_oracle_score, topic_token, OracleModel, SyntheticOracleConfig};
pub use server::{serve_oracle_blocking, spawn_oracle_server, OracleServer};
pub use template::{
    render_icl, render_icl_singles, render_zero_shot, RenderedPrompt, Speaker, Turn,
    NEGATIVE_MARKER, POSITIVE_MARKER, ZERO_SHOT_SYSTEM,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A scalar reward. Higher means the backend judged the response better.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RewardScore(pub f64);

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("response is empty")]
    EmptyResponse,
    #[error("in-context rendering needs at least one example")]
    EmptyContext,
    #[error("backend returned a non-finite score")]
    NonFiniteScore,
    #[error("backend request failed: {detail}")]
    Backend { detail: String },
    #[error("backend reply violates the wire protocol: {detail}")]
    Protocol { detail: String },
    #[error("score cache {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that can turn a rendered prompt into a score. Implementations
/// must be deterministic for identical prompts; the cache depends on it.
pub trait RewardModel: Sync {
    fn score_prompt(&self, prompt: &RenderedPrompt) -> Result<RewardScore, RewardError>;
}

/// Scores a prompt through the cache. A hit returns the stored score
/// bit-identically without touching the backend; a miss consults the model
/// and stores the result. A non-finite backend score is an error and leaves
/// the cache unmodified.
pub fn score(
    model: &dyn RewardModel,
    prompt: &RenderedPrompt,
    cache: &ScoreCache,
) -> Result<RewardScore, RewardError> {
    let key = prompt.cache_key().0;
    if let Some(hit) = cache.get(key) {
        return Ok(hit);
    }
    let fresh = model.score_prompt(prompt)?;
    if !fresh.0.is_finite() {
        return Err(RewardError::NonFiniteScore);
    }
    cache.put(key, fresh)?;
    Ok(fresh)
}

/// Scores many prompts with at most `parallelism` concurrent backend
/// requests. Results come back in input order; when several prompts fail,
/// the error of the lowest index wins.
pub fn score_batch(
    model: &dyn RewardModel,
    prompts: &[RenderedPrompt],
    cache: &ScoreCache,
    parallelism: usize,
) -> Result<Vec<RewardScore>, RewardError> {
    let workers = parallelism.max(1).min(prompts.len().max(1));
    if workers <= 1 {
        return prompts.iter().map(|p| score(model, p, cache)).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<RewardScore, RewardError>>>> =
        prompts.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= prompts.len() {
                    break;
                }
                let outcome = score(model, &prompts[i], cache);
                *results[i].lock().unwrap() = Some(outcome);
            });
        }
    });
    results
        .into_iter()
        .map(|cell| cell.into_inner().unwrap().expect("every index was scored"))
        .collect()
}

/// JSON body of `POST /v1/score`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub system: String,
    pub turns: Vec<WireTurn>,
    pub response: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireTurn {
    pub speaker: String,
    pub text: String,
}

/// JSON body of a successful `/v1/score` reply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireReply {
    pub score: f64,
}

impl WireRequest {
    pub fn from_prompt(prompt: &RenderedPrompt) -> Self {
        WireRequest {
            system: prompt.system.clone(),
            turns: prompt
                .turns
                .iter()
                .map(|t| WireTurn {
                    speaker: t.speaker.as_str().to_string(),
                    text: t.text.clone(),
                })
                .collect(),
            response: prompt.final_response.clone(),
        }
    }

    /// Rebuilds the prompt a client serialized. Unknown speaker strings are
    /// a protocol violation.
    pub fn into_prompt(self) -> Result<RenderedPrompt, RewardError> {
        let mut turns = Vec::with_capacity(self.turns.len());
        for t in self.turns {
            let speaker = match t.speaker.as_str() {
                "user" => Speaker::User,
                "assistant" => Speaker::Assistant,
                other => {
                    return Err(RewardError::Protocol {
                        detail: format!("unknown speaker {other:?}"),
                    })
                }
            };
            turns.push(Turn {
                speaker,
                text: t.text,
            });
        }
        Ok(RenderedPrompt {
            system: self.system,
            turns,
            final_response: self.response,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    struct CountingModel {
        calls: AtomicU64,
        value: f64,
    }

    impl CountingModel {
        fn new(value: f64) -> Self {
            CountingModel {
                calls: AtomicU64::new(0),
                value,
            }
        }
    }

    impl RewardModel for CountingModel {
        fn score_prompt(&self, _prompt: &RenderedPrompt) -> Result<RewardScore, RewardError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(RewardScore(self.value))
        }
    }

    fn prompt(query: &str, response: &str) -> RenderedPrompt {
        render_zero_shot(query, response).unwrap()
    }

    #[test]
    fn score_consults_backend_once_per_distinct_prompt() {
        let model = CountingModel::new(0.25);
        let cache = ScoreCache::in_memory();
        let p = prompt("what now", "this");
        let first = score(&model, &p, &cache).unwrap();
        let second = score(&model, &p, &cache).unwrap();
        assert_eq!(first.0.to_bits(), second.0.to_bits());
        assert_eq!(model.calls.load(Ordering::SeqCst), 1);

        let other = prompt("what now", "that");
        score(&model, &other, &cache).unwrap();
        assert_eq!(model.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn non_finite_scores_error_and_skip_the_cache() {
        let model = CountingModel::new(f64::NAN);
        let cache = ScoreCache::in_memory();
        let p = prompt("q", "r");
        assert!(matches!(
            score(&model, &p, &cache),
            Err(RewardError::NonFiniteScore)
        ));
        assert_eq!(cache.len(), 0);
        // A retry hits the backend again: nothing was stored.
        let _ = score(&model, &p, &cache);
        assert_eq!(model.calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn score_batch_preserves_order_at_any_parallelism() {
        let model = CountingModel::new(1.0);
        struct EchoLen;
        impl RewardModel for EchoLen {
            fn score_prompt(&self, p: &RenderedPrompt) -> Result<RewardScore, RewardError> {
                Ok(RewardScore(p.final_response.len() as f64))
            }
        }
        let prompts: Vec<RenderedPrompt> = (0..32)
            .map(|i| prompt("fixed query", &"x".repeat(i + 1)))
            .collect();
        let sequential =
            score_batch(&EchoLen, &prompts, &ScoreCache::in_memory(), 1).unwrap();
        let parallel = score_batch(&EchoLen, &prompts, &ScoreCache::in_memory(), 8).unwrap();
        assert_eq!(sequential, parallel);
        assert_eq!(sequential[4].0, 5.0);
        let _ = model;
    }

    #[test]
    fn wire_request_round_trips_the_prompt() {
        let p = prompt("a query", "a response");
        let wire = WireRequest::from_prompt(&p);
        let back = wire.into_prompt().unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn wire_request_rejects_unknown_speakers() {
        let wire = WireRequest {
            system: "s".into(),
            turns: vec![WireTurn {
                speaker: "narrator".into(),
                text: "t".into(),
            }],
            response: "r".into(),
        };
        assert!(matches!(
            wire.into_prompt(),
            Err(RewardError::Protocol { .. })
        ));
    }
}
