//! A deterministic reward model for experiments. Quality is decided by a
//! marker substring in the evaluated response; topic-matched positive
//! examples in the context amplify the score's magnitude, which is exactly
//! the signal a trained retriever should learn to supply.

use serde::{Deserialize, Serialize};

use super::template::{RenderedPrompt, Speaker, POSITIVE_MARKER};
use super::{RewardError, RewardModel, RewardScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleConfig {
    /// Weight of each topic-matched positive context example.
    pub beta: f64,
    /// Substring whose presence marks a good response.
    pub good_marker: String,
}

impl Default for SyntheticOracleConfig {
    fn default() -> Self {
        SyntheticOracleConfig {
            beta: 0.5,
            good_marker: "GOOD".to_string(),
        }
    }
}

/// The topic of a query: its first whitespace-delimited token.
pub fn topic_token(query: &str) -> Option<&str> {
    query.split_whitespace().next()
}

/// Scores a rendered prompt as `q * (1 + beta * m)` where `q` is +1 when the
/// evaluated response contains the marker and -1 otherwise, and `m` counts
/// context exchanges labeled positive whose query shares the evaluation
/// query's topic token.
pub fn synthetic_oracle_score(cfg: &SyntheticOracleConfig, prompt: &RenderedPrompt) -> RewardScore {
    let q = if prompt.final_response.contains(&cfg.good_marker) {
        1.0
    } else {
        -1.0
    };
    let target_topic = prompt
        .turns
        .iter()
        .rev()
        .find(|t| t.speaker == Speaker::User)
        .and_then(|t| topic_token(&t.text));
    let mut matched = 0usize;
    if let Some(topic) = target_topic {
        for window in prompt.turns.windows(2) {
            let (user, assistant) = (&window[0], &window[1]);
            if user.speaker == Speaker::User
                && assistant.speaker == Speaker::Assistant
                && assistant.text.ends_with(POSITIVE_MARKER)
                && topic_token(&user.text) == Some(topic)
            {
                matched += 1;
            }
        }
    }
    RewardScore(q * (1.0 + cfg.beta * matched as f64))
}

/// [`RewardModel`] wrapper around [`synthetic_oracle_score`].
#[derive(Debug, Clone, Default)]
pub struct OracleModel {
    pub cfg: SyntheticOracleConfig,
}

impl OracleModel {
    pub fn new(cfg: SyntheticOracleConfig) -> Self {
        OracleModel { cfg }
    }
}

impl RewardModel for OracleModel {
    fn score_prompt(&self, prompt: &RenderedPrompt) -> Result<RewardScore, RewardError> {
        Ok(synthetic_oracle_score(&self.cfg, prompt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ContextPair, ExampleTriplet};
    use crate::reward::template::{render_icl, render_zero_shot};

    fn triplet(id: &str, query: &str, response: &str, polarity: i8) -> ExampleTriplet {
        ExampleTriplet {
            id: id.into(),
            language: "hi".into(),
            query: query.into(),
            response: response.into(),
            polarity,
        }
    }

    fn pair(pos_query: &str, i: usize) -> ContextPair {
        ContextPair::new(
            triplet(&format!("p{i}"), pos_query, "fine answer", 1),
            triplet(&format!("n{i}"), "other thing", "poor answer", -1),
        )
    }

    #[test]
    fn marker_presence_decides_the_sign() {
        let cfg = SyntheticOracleConfig::default();
        let good = render_zero_shot("alpha question", "a GOOD answer").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &good).0, 1.0);
        let bad = render_zero_shot("alpha question", "a plain answer").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &bad).0, -1.0);
    }

    #[test]
    fn matched_positive_context_amplifies() {
        let cfg = SyntheticOracleConfig::default();
        // Three pairs share the query topic "alpha", one does not.
        let context = vec![
            pair("alpha one", 0),
            pair("alpha two", 1),
            pair("beta three", 2),
            pair("alpha four", 3),
        ];
        let p = render_icl(&context, "alpha target", "GOOD indeed", "bo").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &p).0, 1.0 + 0.5 * 3.0);
        let n = render_icl(&context, "alpha target", "meh indeed", "bo").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &n).0, -(1.0 + 0.5 * 3.0));
    }

    #[test]
    fn negative_members_never_count_toward_m() {
        let cfg = SyntheticOracleConfig::default();
        // The negative member shares the topic; the positive does not.
        let context = vec![ContextPair::new(
            triplet("p", "beta question", "fine", 1),
            triplet("n", "alpha question", "poor", -1),
        )];
        let p = render_icl(&context, "alpha target", "GOOD", "bo").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &p).0, 1.0);
    }

    #[test]
    fn separation_grows_with_matched_context() {
        let cfg = SyntheticOracleConfig::default();
        let mut previous_gap = 0.0;
        for m in 0..4usize {
            let context: Vec<ContextPair> = (0..4)
                .map(|i| {
                    if i < m {
                        pair("alpha shared", i)
                    } else {
                        pair("gamma other", i)
                    }
                })
                .collect();
            let good = render_icl(&context, "alpha q", "GOOD r", "bo").unwrap();
            let bad = render_icl(&context, "alpha q", "plain r", "bo").unwrap();
            let gap =
                synthetic_oracle_score(&cfg, &good).0 - synthetic_oracle_score(&cfg, &bad).0;
            assert_eq!(gap, 2.0 * (1.0 + 0.5 * m as f64));
            assert!(gap > previous_gap);
            previous_gap = gap;
        }
    }

    #[test]
    fn marker_is_containment_not_equality() {
        let cfg = SyntheticOracleConfig::default();
        let p = render_zero_shot("alpha q", "quite a GOOD answer overall").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &p).0, 1.0);
    }

    #[test]
    fn custom_beta_and_marker_apply() {
        let cfg = SyntheticOracleConfig {
            beta: 2.0,
            good_marker: "SHINY".into(),
        };
        let context = vec![pair("alpha x", 0)];
        let p = render_icl(&context, "alpha q", "SHINY thing", "bo").unwrap();
        assert_eq!(synthetic_oracle_score(&cfg, &p).0, 3.0);
    }
}
