//! Prefix generators: anything that turns a prompt conversation into up to
//! `n` candidate responses.

mod heuristic;
mod llm;

pub use heuristic::{heuristic_generate, HeuristicGenerator, VALUE_FAMILIES};
pub use llm::{CannedTransport, API_KEY_VARS, HttpTransport, LlmConfig, LlmGenerator, Transport, TransportError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Step;
use crate::prompt::{parse_response, Conversation, GeneratorResponse};
use crate::scope::UndefinedRefs;

#[derive(Debug, Clone)]
pub struct GeneratorRequest {
    pub conversation: Conversation,
    pub samples: usize,
    /// Structured view of what the prompt asks for. Remote generators only
    /// read the conversation; offline generators work from these.
    pub hints: RequestHints,
}

#[derive(Debug, Clone, Default)]
pub struct RequestHints {
    pub refs: UndefinedRefs,
    pub step: Option<Step>,
    /// Index of this query within the search; offline generators derive
    /// their variants from it.
    pub query_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub raw: String,
    pub parsed: Option<GeneratorResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
}

impl Sample {
    pub fn from_raw(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        match parse_response(&raw) {
            Ok(parsed) => Sample {
                raw,
                parsed: Some(parsed),
                parse_error: None,
            },
            Err(e) => Sample {
                raw,
                parsed: None,
                parse_error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorBatch {
    pub responses: Vec<Sample>,
}

#[derive(Debug, Clone, Error)]
#[error("generator unavailable: {0}")]
pub struct GeneratorUnavailable(pub String);

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorBatch, GeneratorUnavailable>;

    fn name(&self) -> &str {
        "custom"
    }
}

impl<F> Generator for F
where
    F: Fn(&GeneratorRequest) -> Result<GeneratorBatch, GeneratorUnavailable> + Send + Sync,
{
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorBatch, GeneratorUnavailable> {
        self(request)
    }
}
