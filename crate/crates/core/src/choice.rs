use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A participant's (or a metric's) answer to "which page loaded faster?".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Left,
    Equal,
    Right,
}

impl Choice {
    pub const ALL: [Choice; 3] = [Choice::Left, Choice::Equal, Choice::Right];

    /// The answer after swapping the two sides of a pair.
    pub fn mirrored(self) -> Choice {
        match self {
            Choice::Left => Choice::Right,
            Choice::Right => Choice::Left,
            Choice::Equal => Choice::Equal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Choice::Left => "left",
            Choice::Equal => "equal",
            Choice::Right => "right",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Choice::Left => 0,
            Choice::Equal => 1,
            Choice::Right => 2,
        }
    }

    pub(crate) fn from_index(i: usize) -> Choice {
        Choice::ALL[i]
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid choice token {0:?}; expected left, right or equal")]
pub struct ParseChoiceError(pub String);

impl FromStr for Choice {
    type Err = ParseChoiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Choice::Left),
            "right" => Ok(Choice::Right),
            "equal" => Ok(Choice::Equal),
            other => Err(ParseChoiceError(other.to_string())),
        }
    }
}
