//! Optimization objectives: per-property direction and threshold, the
//! success indicator and the residual gradient fed back to the proposer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descriptors::{PropertyId, PropertyVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObjectiveError {
    #[error("objective has no terms")]
    Empty,
    #[error("threshold for {0} must be a finite non-negative number")]
    InvalidMagnitude(PropertyId),
    #[error("invalid objective {text:?}: {detail}")]
    Syntax { text: String, detail: String },
    #[error("unknown objective preset {0:?}")]
    UnknownPreset(String),
    #[error("property vector lacks {0}")]
    MissingProperty(PropertyId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increase => 1.0,
            Direction::Decrease => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::Increase => '+',
            Direction::Decrease => '-',
        }
    }

    pub fn verb(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub property: PropertyId,
    pub direction: Direction,
    pub magnitude: f64,
}

impl ObjectiveTerm {
    pub fn new(property: PropertyId, direction: Direction, magnitude: f64) -> Result<Self, ObjectiveError> {
        if !magnitude.is_finite() || magnitude < 0.0 {
            return Err(ObjectiveError::InvalidMagnitude(property));
        }
        Ok(ObjectiveTerm { property, direction, magnitude })
    }

    /// The threshold with the direction's sign applied.
    pub fn signed_threshold(&self) -> f64 {
        self.direction.sign() * self.magnitude
    }
}

impl fmt::Display for ObjectiveTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}:{}", self.direction.symbol(), self.property, self.magnitude)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub terms: Vec<ObjectiveTerm>,
}

impl ObjectiveSpec {
    pub fn new(name: impl Into<String>, terms: Vec<ObjectiveTerm>) -> Result<Self, ObjectiveError> {
        if terms.is_empty() {
            return Err(ObjectiveError::Empty);
        }
        for t in &terms {
            ObjectiveTerm::new(t.property, t.direction, t.magnitude)?;
        }
        Ok(ObjectiveSpec { name: name.into(), terms })
    }

    /// Parses the compact form `+LogP:0.5,-TPSA:10.0`; a missing magnitude
    /// means 0. The objective is named by its canonical compact text.
    pub fn parse_compact(text: &str) -> Result<Self, ObjectiveError> {
        let syntax = |detail: &str| ObjectiveError::Syntax { text: text.to_string(), detail: detail.to_string() };
        let mut terms = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let direction = match part.chars().next() {
                Some('+') => Direction::Increase,
                Some('-') => Direction::Decrease,
                _ => return Err(syntax("each term must start with '+' or '-'")),
            };
            let (name, magnitude) = match part[1..].split_once(':') {
                Some((name, value)) => {
                    (name, value.trim().parse::<f64>().map_err(|_| syntax("threshold is not a number"))?)
                }
                None => (&part[1..], 0.0),
            };
            let property = name.parse::<PropertyId>().map_err(|e| syntax(&e.to_string()))?;
            if terms.iter().any(|t: &ObjectiveTerm| t.property == property) {
                return Err(syntax("property listed twice"));
            }
            terms.push(ObjectiveTerm::new(property, direction, magnitude)?);
        }
        let name = terms.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        ObjectiveSpec::new(name, terms)
    }

    /// Canonical compact text of the terms.
    pub fn to_compact(&self) -> String {
        self.terms.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }

    /// Resolves a preset name or a compact objective.
    pub fn resolve(text: &str) -> Result<Self, ObjectiveError> {
        if text.contains('/') {
            return preset(text);
        }
        Self::parse_compact(text)
    }

    pub fn properties(&self) -> Vec<PropertyId> {
        self.terms.iter().map(|t| t.property).collect()
    }

    /// "single" or "multi".
    pub fn arity_label(&self) -> &'static str {
        if self.terms.len() == 1 {
            "single"
        } else {
            "multi"
        }
    }

    /// "loose" when every threshold is zero, otherwise "strict".
    pub fn threshold_label(&self) -> &'static str {
        if self.terms.iter().all(|t| t.magnitude == 0.0) {
            "loose"
        } else {
            "strict"
        }
    }

    /// Signed property list without thresholds, e.g. `+LogP-TPSA`.
    pub fn direction_label(&self) -> String {
        self.terms.iter().map(|t| format!("{}{}", t.direction.symbol(), t.property)).collect()
    }
}

impl FromStr for ObjectiveSpec {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectiveSpec::resolve(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermOutcome {
    pub property: PropertyId,
    pub observed_delta: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub per_term: Vec<TermOutcome>,
    pub overall: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientTerm {
    pub property: PropertyId,
    pub direction: Direction,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub per_term: Vec<GradientTerm>,
}

fn delta(term: &ObjectiveTerm, m: &PropertyVector, mhat: &PropertyVector) -> Result<f64, ObjectiveError> {
    let missing = || ObjectiveError::MissingProperty(term.property);
    Ok(mhat.get(term.property).ok_or_else(missing)? - m.get(term.property).ok_or_else(missing)?)
}

/// Whether a single term holds for an observed change.
pub fn term_satisfied(term: &ObjectiveTerm, observed_delta: f64) -> bool {
    term.direction.sign() * (observed_delta - term.signed_threshold()) >= 0.0
}

/// Success indicator of `mhat` against `m`, per term and overall.
pub fn evaluate(
    spec: &ObjectiveSpec,
    m: &PropertyVector,
    mhat: &PropertyVector,
) -> Result<EvaluationResult, ObjectiveError> {
    let per_term = spec
        .terms
        .iter()
        .map(|t| {
            let d = delta(t, m, mhat)?;
            Ok(TermOutcome { property: t.property, observed_delta: d, satisfied: term_satisfied(t, d) })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let overall = per_term.iter().all(|t| t.satisfied);
    Ok(EvaluationResult { per_term, overall })
}

/// Direction and remaining distance to each threshold.
pub fn gradient(spec: &ObjectiveSpec, m: &PropertyVector, mhat: &PropertyVector) -> Result<Gradient, ObjectiveError> {
    let per_term = spec
        .terms
        .iter()
        .map(|t| {
            let d = delta(t, m, mhat)?;
            Ok(GradientTerm { property: t.property, direction: t.direction, residual: (d - t.signed_threshold()).abs() })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Gradient { per_term })
}

const STRICT: [(PropertyId, f64); 3] = [(PropertyId::LogP, 0.5), (PropertyId::Tpsa, 10.0), (PropertyId::Qed, 0.1)];

fn strict_magnitude(p: PropertyId) -> f64 {
    STRICT.iter().find(|(q, _)| *q == p).map_or(0.0, |(_, m)| *m)
}

/// The 28 shipped objectives: 12 single-property and 16 two-property, each
/// loose (threshold 0) and strict. Names look like `single/strict/+LogP` and
/// `multi/loose/+LogP-TPSA`.
pub fn load_presets() -> Vec<ObjectiveSpec> {
    use Direction::{Decrease, Increase};
    let signs = [Increase, Decrease];
    let mut combos: Vec<Vec<(PropertyId, Direction)>> = Vec::new();
    for p in PropertyId::ALL {
        for d in signs {
            combos.push(vec![(p, d)]);
        }
    }
    for second in [PropertyId::Tpsa, PropertyId::Qed] {
        for d1 in signs {
            for d2 in signs {
                combos.push(vec![(PropertyId::LogP, d1), (second, d2)]);
            }
        }
    }
    let mut presets = Vec::with_capacity(combos.len() * 2);
    for combo in combos {
        for strict in [false, true] {
            let terms: Vec<ObjectiveTerm> = combo
                .iter()
                .map(|&(p, d)| ObjectiveTerm { property: p, direction: d, magnitude: if strict { strict_magnitude(p) } else { 0.0 } })
                .collect();
            let mut spec = ObjectiveSpec { name: String::new(), terms };
            spec.name = format!("{}/{}/{}", spec.arity_label(), if strict { "strict" } else { "loose" }, spec.direction_label());
            presets.push(spec);
        }
    }
    presets
}

pub fn preset(name: &str) -> Result<ObjectiveSpec, ObjectiveError> {
    load_presets()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name.trim()))
        .ok_or_else(|| ObjectiveError::UnknownPreset(name.to_string()))
}
