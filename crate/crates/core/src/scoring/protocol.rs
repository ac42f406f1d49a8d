//! Wire format spoken with scorer subprocesses: one JSON object per line over
//! stdin/stdout, UTF-8.
//!
//! The engine opens with `{"op":"hello","protocol":1}` and expects
//! `{"op":"hello","protocol":1,"scorer_id":"..."}` back. After that every
//! request line is answered by exactly one response line carrying the same
//! `id`, either with `token_logprobs` (and optionally `tokens`) or with
//! `error`. Responses may arrive in any order.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub op: String,
    pub protocol: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scorer_id: Option<String>,
}

impl Hello {
    pub fn request() -> Self {
        Hello {
            op: "hello".into(),
            protocol: PROTOCOL_VERSION,
            scorer_id: None,
        }
    }

    pub fn reply(scorer_id: impl Into<String>) -> Self {
        Hello {
            op: "hello".into(),
            protocol: PROTOCOL_VERSION,
            scorer_id: Some(scorer_id.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestLine {
    pub id: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLine {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Outcome carried by a well-formed response line.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseBody {
    Scores {
        token_logprobs: Vec<f64>,
        tokens: Option<Vec<String>>,
    },
    Error(String),
}

impl ResponseLine {
    pub fn scores(id: impl Into<String>, token_logprobs: Vec<f64>, tokens: Option<Vec<String>>) -> Self {
        ResponseLine {
            id: id.into(),
            token_logprobs: Some(token_logprobs),
            tokens,
            error: None,
        }
    }

    pub fn error(id: impl Into<String>, message: impl Into<String>) -> Self {
        ResponseLine {
            id: id.into(),
            token_logprobs: None,
            tokens: None,
            error: Some(message.into()),
        }
    }

    /// Checks that exactly one of `token_logprobs` and `error` is present.
    pub fn into_body(self) -> Result<(String, ResponseBody), String> {
        match (self.token_logprobs, self.error) {
            (Some(token_logprobs), None) => Ok((
                self.id,
                ResponseBody::Scores {
                    token_logprobs,
                    tokens: self.tokens,
                },
            )),
            (None, Some(message)) => Ok((self.id, ResponseBody::Error(message))),
            (Some(_), Some(_)) => Err(format!("response {} has both token_logprobs and error", self.id)),
            (None, None) => Err(format!("response {} has neither token_logprobs nor error", self.id)),
        }
    }
}

pub fn encode<T: Serialize>(msg: &T) -> String {
    let mut line = serde_json::to_string(msg).expect("protocol messages always serialize");
    line.push('\n');
    line
}

pub fn decode_response(line: &str) -> Result<(String, ResponseBody), String> {
    let parsed: ResponseLine = serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| format!("malformed response line {line:?}: {e}"))?;
    parsed.into_body()
}

pub fn decode_hello(line: &str) -> Result<Hello, String> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| format!("malformed handshake line {line:?}: {e}"))
}
