//! Tokenizer boundary and region-labeled encoding.
//!
//! Adapters implement [`TokenizerPort`]. The only hard requirement is that
//! every special token comes out as exactly one token; [`encode_regions`]
//! checks this and fails with [`TokenizeError::ContractViolation`] otherwise.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serialize::{pieces, LinearizeOptions, PieceKind};
use crate::table::Example;

/// Adapter around a concrete tokenizer.
///
/// Implementations must be safe to share read-only between workers.
pub trait TokenizerPort: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
    fn detokenize(&self, tokens: &[String]) -> String;
}

/// Splits on whitespace; detokenizes by joining with single spaces.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl TokenizerPort for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }

    fn detokenize(&self, tokens: &[String]) -> String {
        tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenizeError {
    #[error("tokenizer split special token {token:?} into {pieces} pieces")]
    ContractViolation { token: String, pieces: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Region {
    Context,
    Header,
    Cell,
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTokenSeq {
    pub tokens: Vec<String>,
    pub labels: Vec<Region>,
    /// One token range per table column, in column order. Columns whose
    /// header is a placeholder get an empty range.
    pub header_extents: Vec<Range<usize>>,
}

impl LabeledTokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Positions carrying `region`, ascending.
    pub fn positions(&self, region: Region) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, l)| **l == region).map(|(i, _)| i).collect()
    }

    pub fn count(&self, region: Region) -> usize {
        self.labels.iter().filter(|l| **l == region).count()
    }
}

/// Tokenize an example piece by piece, labeling tokens from structure.
///
/// `tokens` equals `tokenizer.tokenize(&linearize(example, opts))` for any
/// tokenizer that does not merge across whitespace.
pub fn encode_regions(
    example: &Example,
    opts: LinearizeOptions<'_>,
    tokenizer: &dyn TokenizerPort,
) -> Result<LabeledTokenSeq, TokenizeError> {
    let pieces = pieces(example, opts);
    let mut tokens = Vec::with_capacity(pieces.len() * 2);
    let mut labels = Vec::with_capacity(pieces.len() * 2);
    let mut header_extents = vec![0..0; example.table.num_columns()];
    for piece in &pieces {
        let piece_tokens = tokenizer.tokenize(&piece.text);
        let label = match piece.kind {
            PieceKind::Structural => {
                // Row indices are structural too, and must stay atomic.
                if piece_tokens.len() != 1 {
                    return Err(TokenizeError::ContractViolation {
                        token: piece.text.to_string(),
                        pieces: piece_tokens.len(),
                    });
                }
                Region::Structural
            }
            PieceKind::Context => Region::Context,
            PieceKind::Header(col) => {
                header_extents[col] = tokens.len()..tokens.len() + piece_tokens.len();
                Region::Header
            }
            PieceKind::Cell => Region::Cell,
        };
        labels.extend(std::iter::repeat_n(label, piece_tokens.len()));
        tokens.extend(piece_tokens);
    }
    Ok(LabeledTokenSeq { tokens, labels, header_extents })
}
