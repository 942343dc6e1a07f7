use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Training objective a record was produced by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    Denoise,
    NlGeneration,
    SqlGeneration,
    NlCompletion,
    SqlCompletion,
    /// Supervised prefinetuning record built by the mixture builder.
    Supervised,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::Denoise,
        Objective::NlGeneration,
        Objective::SqlGeneration,
        Objective::NlCompletion,
        Objective::SqlCompletion,
        Objective::Supervised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Denoise => "DENOISE",
            Objective::NlGeneration => "NL_GENERATION",
            Objective::SqlGeneration => "SQL_GENERATION",
            Objective::NlCompletion => "NL_COMPLETION",
            Objective::SqlCompletion => "SQL_COMPLETION",
            Objective::Supervised => "SUPERVISED",
        }
    }

    pub fn is_generation(self) -> bool {
        matches!(self, Objective::NlGeneration | Objective::SqlGeneration)
    }

    pub fn is_completion(self) -> bool {
        matches!(self, Objective::NlCompletion | Objective::SqlCompletion)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL.into_iter().find(|o| o.as_str() == s).ok_or_else(|| format!("unknown objective {s:?}"))
    }
}

/// One seq2seq training record, as written to shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqRecord {
    pub example_id: String,
    pub objective: Objective,
    pub encoder_input: Vec<String>,
    pub decoder_input: Vec<String>,
    pub decoder_target: Vec<String>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    /// Per-token source tag for the encoder input, filled only when the
    /// pipeline runs with provenance tracking. `None` marks padding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<Option<u32>>>,
}

impl Seq2SeqRecord {
    pub fn meta_u64(&self, key: &str) -> Option<u64> {
        self.meta.get(key).and_then(|v| v.as_u64())
    }

    pub fn meta_str(&self, key: &str) -> Option<&str> {
        self.meta.get(key).and_then(|v| v.as_str())
    }
}

/// Keys written into [`Seq2SeqRecord::meta`].
pub mod meta_keys {
    pub const SOURCE: &str = "source";
    pub const MODE: &str = "mode";
    pub const BRANCH: &str = "mix_branch";
    pub const MCP_ONLY: &str = "mcp_only";
    pub const TABLE_ONLY: &str = "table_only";
    pub const CELL_TOKENS: &str = "cell_tokens";
    pub const CELL_MASKED: &str = "cell_masked";
    pub const CONTEXT_TOKENS: &str = "context_tokens";
    pub const CONTEXT_MASKED: &str = "context_masked";
    pub const HEADERS: &str = "headers";
    pub const HEADERS_MASKED: &str = "headers_masked";
    pub const SENTINELS: &str = "sentinels";
    pub const ENCODER_LEN: &str = "encoder_len";
    pub const DECODER_LEN: &str = "decoder_len";
    pub const TRUNCATED: &str = "truncated";
    pub const ENTRY: &str = "entry";
    pub const IO_KIND: &str = "io_kind";
}
