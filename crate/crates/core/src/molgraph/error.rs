use std::fmt;

use serde::{Deserialize, Serialize};

/// The six classes of invalid SMILES, in reporting precedence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorCategory {
    Syntax,
    Parentheses,
    UnclosedRing,
    DuplicateBond,
    Valence,
    Aromaticity,
}

impl ParseErrorCategory {
    pub const ALL: [ParseErrorCategory; 6] = [
        ParseErrorCategory::Syntax,
        ParseErrorCategory::Parentheses,
        ParseErrorCategory::UnclosedRing,
        ParseErrorCategory::DuplicateBond,
        ParseErrorCategory::Valence,
        ParseErrorCategory::Aromaticity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorCategory::Syntax => "syntax",
            ParseErrorCategory::Parentheses => "parentheses",
            ParseErrorCategory::UnclosedRing => "unclosed_ring",
            ParseErrorCategory::DuplicateBond => "duplicate_bond",
            ParseErrorCategory::Valence => "valence",
            ParseErrorCategory::Aromaticity => "aromaticity",
        }
    }

    pub fn from_name(name: &str) -> Option<ParseErrorCategory> {
        Self::ALL.into_iter().find(|c| c.as_str() == name)
    }
}

impl fmt::Display for ParseErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A classified SMILES failure. `position` is a byte offset into the
/// trimmed input when the offending token is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub struct ParseError {
    pub category: ParseErrorCategory,
    pub detail: String,
    pub position: Option<usize>,
}

impl ParseError {
    pub fn new(category: ParseErrorCategory, detail: impl Into<String>, position: Option<usize>) -> Self {
        ParseError {
            category,
            detail: detail.into(),
            position,
        }
    }

    /// The stable one-line message, e.g.
    /// `unclosed_ring: ring bond 1 opened but never closed at position 1`.
    pub fn message(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category, self.detail)?;
        if let Some(p) = self.position {
            write!(f, " at position {p}")?;
        }
        Ok(())
    }
}
