//! Wire and log types.

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

/// One line of `votes.jsonl`.
///
/// `pair` is canonical (`i < j`) and `y = 1` means item `i` was preferred.
/// Field order and formatting are part of the replay contract; `vote_id`
/// is written only when the client supplied one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRecord {
    pub pair: [usize; 2],
    pub y: u8,
    pub annotator: String,
    /// UTC, RFC 3339 with microseconds and a `Z` suffix.
    pub ts: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_id: Option<String>,
}

impl VoteRecord {
    /// Winner and loser indices.
    pub fn outcome(&self) -> (usize, usize) {
        let [i, j] = self.pair;
        if self.y == 1 {
            (i, j)
        } else {
            (j, i)
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let [i, j] = self.pair;
        if i >= j || j >= n {
            return Err(ServiceError::Corrupt(format!(
                "logged pair {:?} is not canonical for {n} items",
                self.pair
            )));
        }
        if self.y > 1 {
            return Err(ServiceError::Corrupt(format!(
                "logged outcome {} is not 0 or 1",
                self.y
            )));
        }
        Ok(())
    }
}

pub fn now_timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Body of `POST /experiments/{id}/votes`. The pair may be given in either
/// order; `y = 1` always refers to the first listed item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteRequest {
    pub pair: [usize; 2],
    pub y: u8,
    pub annotator: String,
    /// Optional client key; resubmitting an already logged key is
    /// acknowledged without counting the vote again.
    #[serde(default)]
    pub vote_id: Option<String>,
}

impl VoteRequest {
    /// Validates against `n` items and returns `(canonical pair, y)`.
    pub fn canonical(&self, n: usize) -> Result<((usize, usize), u8)> {
        let [a, b] = self.pair;
        if a == b {
            return Err(ServiceError::invalid(format!(
                "pair ({a},{a}) compares an item with itself"
            )));
        }
        if a >= n || b >= n {
            return Err(ServiceError::invalid(format!(
                "pair ({a},{b}) out of range for {n} items"
            )));
        }
        if self.y > 1 {
            return Err(ServiceError::invalid(format!("outcome must be 0 or 1, got {}", self.y)));
        }
        if self.annotator.trim().is_empty() {
            return Err(ServiceError::invalid("annotator must be non-empty"));
        }
        if self.vote_id.as_deref().is_some_and(|v| v.is_empty()) {
            return Err(ServiceError::invalid("vote_id must be non-empty when given"));
        }
        Ok(if a < b { ((a, b), self.y) } else { ((b, a), 1 - self.y) })
    }
}
