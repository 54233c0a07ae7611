use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

/// The eight accents of the training corpus, serialized as two-letter codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AccentId {
    Am,
    Ar,
    Br,
    Hi,
    Ko,
    Ma,
    Sp,
    Vi,
}

impl AccentId {
    pub const ALL: [AccentId; 8] = [
        AccentId::Am,
        AccentId::Ar,
        AccentId::Br,
        AccentId::Hi,
        AccentId::Ko,
        AccentId::Ma,
        AccentId::Sp,
        AccentId::Vi,
    ];

    pub fn code(self) -> &'static str {
        match self {
            AccentId::Am => "AM",
            AccentId::Ar => "AR",
            AccentId::Br => "BR",
            AccentId::Hi => "HI",
            AccentId::Ko => "KO",
            AccentId::Ma => "MA",
            AccentId::Sp => "SP",
            AccentId::Vi => "VI",
        }
    }

    /// Row of this accent in the embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// American and British count as native; everything else as foreign.
    pub fn is_native(self) -> bool {
        matches!(self, AccentId::Am | AccentId::Br)
    }
}

impl fmt::Display for AccentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AccentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        AccentId::ALL
            .iter()
            .copied()
            .find(|a| a.code() == up)
            .ok_or_else(|| invalid(format!("unknown accent code `{s}`")))
    }
}

impl TryFrom<String> for AccentId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AccentId> for String {
    fn from(a: AccentId) -> String {
        a.code().to_string()
    }
}

/// Parse a comma-separated accent list such as `AM,HI,KO`.
pub fn parse_accent_list(s: &str) -> Result<Vec<AccentId>, Error> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect()
}
