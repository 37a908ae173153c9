//! HTTP client for a reward model reachable over the wire protocol. The
//! model stays a black box: one POST per prompt, one number back.

use ureq::Agent;

use super::template::RenderedPrompt;
use super::{RewardError, RewardModel, RewardScore, WireReply, WireRequest};

/// Scores prompts against a remote endpoint speaking `POST /v1/score`.
pub struct RemoteModel {
    endpoint: String,
    agent: Agent,
}

impl RemoteModel {
    /// `base_url` is the server root, e.g. `http://127.0.0.1:8080`; the
    /// scoring path is appended here.
    pub fn new(base_url: &str) -> Self {
        let endpoint = format!("{}/v1/score", base_url.trim_end_matches('/'));
        RemoteModel {
            endpoint,
            agent: Agent::new_with_defaults(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl RewardModel for RemoteModel {
    fn score_prompt(&self, prompt: &RenderedPrompt) -> Result<RewardScore, RewardError> {
        let request = WireRequest::from_prompt(prompt);
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&request)
            .map_err(|e| RewardError::Backend {
                detail: format!("POST {}: {e}", self.endpoint),
            })?;
        let reply: WireReply =
            response
                .body_mut()
                .read_json()
                .map_err(|e| RewardError::Protocol {
                    detail: format!("malformed reply from {}: {e}", self.endpoint),
                })?;
        if !reply.score.is_finite() {
            return Err(RewardError::NonFiniteScore);
        }
        Ok(RewardScore(reply.score))
    }
}
