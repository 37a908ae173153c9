//! Prompt templates. Rendering is pure string work, but its exact bytes are
//! part of the product: cached scores key off them and the golden files in
//! tests/golden pin them.

use serde::{Deserialize, Serialize};

use crate::corpus::{fnv_init, fnv_update, ContentHash, ContextPair, ExampleTriplet};

use super::RewardError;

/// System text of the zero-shot template.
pub const ZERO_SHOT_SYSTEM: &str = "You are an accurate reward model. Your goal is to evaluate a (Query, Response) pair and output a numerical reward score that reflects how well the response answers the query. A higher score means the response is of higher quality, safer, and relevant. A lower score means the response is incorrect, irrelevant, unsafe, or otherwise poor.";

/// Marker appended to a positive in-context response.
pub const POSITIVE_MARKER: &str = "[Positive response]";

/// Marker appended to a negative in-context response.
pub const NEGATIVE_MARKER: &str = "[Negative response]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

/// A fully rendered prompt: system text, alternating user/assistant turns
/// ending on the user turn that carries the evaluation query, and the
/// response under evaluation kept out of the turn list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system: String,
    pub turns: Vec<Turn>,
    pub final_response: String,
}

impl RenderedPrompt {
    /// Cache key over a length-prefixed serialization of every field, so
    /// prompts that differ anywhere key differently even when adversarial
    /// text embeds separators.
    pub fn cache_key(&self) -> ContentHash {
        let mut h = fnv_init();
        let field = |h: u64, bytes: &[u8]| -> u64 {
            let h = fnv_update(h, &(bytes.len() as u64).to_le_bytes());
            fnv_update(h, bytes)
        };
        h = field(h, self.system.as_bytes());
        h = fnv_update(h, &(self.turns.len() as u64).to_le_bytes());
        for turn in &self.turns {
            h = fnv_update(h, &[turn.speaker.as_str().as_bytes()[0]]);
            h = field(h, turn.text.as_bytes());
        }
        h = field(h, self.final_response.as_bytes());
        ContentHash(h)
    }

    /// Canonical transcript form, one labeled line block per turn with the
    /// evaluated response as the closing assistant turn. This is the layout
    /// the golden files freeze.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("System: ");
        out.push_str(&self.system);
        out.push('\n');
        for turn in &self.turns {
            out.push_str(match turn.speaker {
                Speaker::User => "User: ",
                Speaker::Assistant => "Assistant: ",
            });
            out.push_str(&turn.text);
            out.push('\n');
        }
        out.push_str("Assistant: ");
        out.push_str(&self.final_response);
        out.push('\n');
        out
    }
}

fn require_non_blank(text: &str, err: RewardError) -> Result<(), RewardError> {
    if text.trim().is_empty() {
        Err(err)
    } else {
        Ok(())
    }
}

/// Renders the zero-shot template: system text, the query as the only turn,
/// the response under evaluation.
pub fn render_zero_shot(query: &str, response: &str) -> Result<RenderedPrompt, RewardError> {
    require_non_blank(query, RewardError::EmptyQuery)?;
    require_non_blank(response, RewardError::EmptyResponse)?;
    Ok(RenderedPrompt {
        system: ZERO_SHOT_SYSTEM.to_string(),
        turns: vec![Turn {
            speaker: Speaker::User,
            text: query.to_string(),
        }],
        final_response: response.to_string(),
    })
}

fn icl_system(aux_languages: &str, target_language: &str) -> String {
    format!(
        "The following are (Query, Response) examples in {aux_languages}. Each is labeled as [positive response] or [negative response]. Positive and Negative examples appear in any order. The final example in {target_language} language is for evaluation."
    )
}

fn distinct_in_order<'a>(languages: impl Iterator<Item = &'a str>) -> String {
    let mut seen = Vec::new();
    for language in languages {
        if !seen.contains(&language) {
            seen.push(language);
        }
    }
    seen.join(", ")
}

fn push_exchange(turns: &mut Vec<Turn>, query: &str, response: &str, marker: &str) {
    turns.push(Turn {
        speaker: Speaker::User,
        text: query.to_string(),
    });
    turns.push(Turn {
        speaker: Speaker::Assistant,
        text: format!("{response} {marker}"),
    });
}

/// Renders the in-context template over example pairs. Each pair emits its
/// positive member then its negative member as labeled exchanges, in the
/// order the pairs were given; the final turn carries the evaluation query.
pub fn render_icl(
    context: &[ContextPair],
    query: &str,
    response: &str,
    target_language: &str,
) -> Result<RenderedPrompt, RewardError> {
    if context.is_empty() {
        return Err(RewardError::EmptyContext);
    }
    require_non_blank(query, RewardError::EmptyQuery)?;
    require_non_blank(response, RewardError::EmptyResponse)?;
    let aux = distinct_in_order(context.iter().map(|p| p.language.as_str()));
    let mut turns = Vec::with_capacity(4 * context.len() + 1);
    for pair in context {
        push_exchange(
            &mut turns,
            &pair.positive.query,
            &pair.positive.response,
            POSITIVE_MARKER,
        );
        push_exchange(
            &mut turns,
            &pair.negative.query,
            &pair.negative.response,
            NEGATIVE_MARKER,
        );
    }
    turns.push(Turn {
        speaker: Speaker::User,
        text: query.to_string(),
    });
    Ok(RenderedPrompt {
        system: icl_system(&aux, target_language),
        turns,
        final_response: response.to_string(),
    })
}

/// Renders the in-context template over unpaired labeled examples, each
/// marked by its own polarity.
pub fn render_icl_singles(
    context: &[&ExampleTriplet],
    query: &str,
    response: &str,
    target_language: &str,
) -> Result<RenderedPrompt, RewardError> {
    if context.is_empty() {
        return Err(RewardError::EmptyContext);
    }
    require_non_blank(query, RewardError::EmptyQuery)?;
    require_non_blank(response, RewardError::EmptyResponse)?;
    let aux = distinct_in_order(context.iter().map(|t| t.language.as_str()));
    let mut turns = Vec::with_capacity(2 * context.len() + 1);
    for item in context {
        let marker = if item.polarity > 0 {
            POSITIVE_MARKER
        } else {
            NEGATIVE_MARKER
        };
        push_exchange(&mut turns, &item.query, &item.response, marker);
    }
    turns.push(Turn {
        speaker: Speaker::User,
        text: query.to_string(),
    });
    Ok(RenderedPrompt {
        system: icl_system(&aux, target_language),
        turns,
        final_response: response.to_string(),
    })
}
