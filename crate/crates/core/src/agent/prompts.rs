//! Prompt text for the initial request and both feedback branches.

use crate::descriptors::{PropertyId, PropertyVector};
use crate::molgraph::ParseError;
use crate::objective::{Direction, EvaluationResult, Gradient, ObjectiveSpec};

pub const CLOSING: &str = "Respond with only the SMILES string of the modified molecule. No explanation is needed.";
pub const GENERIC_FEEDBACK: &str = "Unfortunately, the modified molecule does not meet the objective.";
pub const REFINE: &str = "Refine the modified molecule based on the above domain feedback.";
const SIMILARITY: &str = "Importantly, the modified molecule must be similar to the given one.";

/// Decimal places used when quoting values of a property.
pub fn precision(p: PropertyId) -> usize {
    match p {
        PropertyId::LogP | PropertyId::Tpsa => 2,
        PropertyId::Qed => 3,
    }
}

/// A property value or an observed change, rounded to the property's
/// precision.
pub fn format_value(p: PropertyId, x: f64) -> String {
    let s = format!("{:.*}", precision(p), x);
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// A residual, rounded up to the property's precision so that moving by the
/// quoted amount reaches the threshold.
pub fn format_residual(p: PropertyId, residual: f64) -> String {
    let scale = 10f64.powi(precision(p) as i32);
    let up = (residual * scale - 1e-9).ceil().max(0.0) / scale;
    format!("{:.*}", precision(p), up)
}

fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Objective request for the given molecule.
pub fn initial_prompt(spec: &ObjectiveSpec, molecule: &str) -> String {
    let verbs: Vec<String> = spec.terms.iter().map(|t| t.direction.verb().to_string()).collect();
    let props: Vec<String> = spec.terms.iter().map(|t| t.property.name().to_string()).collect();
    let thresholds: Vec<String> = spec.terms.iter().map(|t| t.magnitude.to_string()).collect();
    let respectively = if spec.terms.len() > 1 { ", respectively" } else { "" };
    format!(
        "Given {molecule}, modify it to {} its {} by {}{respectively}. {SIMILARITY}\n{CLOSING}",
        join_list(&verbs),
        join_list(&props),
        join_list(&thresholds),
    )
}

/// Feedback after an unparsable proposal.
pub fn parse_error_prompt(proposal: &str, error: &ParseError) -> String {
    format!(
        "The modified molecule {proposal} is not chemically valid. Parsing it fails with the error: {}. \
         Correct the modified molecule so that it is a valid SMILES string that still meets the objective.\n{CLOSING}",
        error.message()
    )
}

/// What the outer feedback describes.
pub struct OuterFeedback<'a> {
    pub modified: &'a PropertyVector,
    pub evaluation: &'a EvaluationResult,
    pub gradient: &'a Gradient,
    pub example: Option<&'a str>,
    pub gradient_feedback: bool,
}

/// Feedback after a valid proposal that misses the objective.
pub fn outer_feedback_prompt(f: &OuterFeedback<'_>) -> String {
    let mut parts = vec![GENERIC_FEEDBACK.to_string()];
    if f.gradient_feedback {
        let mut first = true;
        for (outcome, grad) in f.evaluation.per_term.iter().zip(&f.gradient.per_term) {
            if outcome.satisfied {
                continue;
            }
            let p = outcome.property;
            let value = f.modified.get(p).unwrap_or(f64::NAN);
            let change = if outcome.observed_delta > 0.0 {
                format!("increased by {}", format_value(p, outcome.observed_delta.abs()))
            } else if outcome.observed_delta < 0.0 {
                format!("decreased by {}", format_value(p, outcome.observed_delta.abs()))
            } else {
                "unchanged".to_string()
            };
            let lead = if first { "More specifically, the" } else { "The" };
            first = false;
            let need = match grad.direction {
                Direction::Increase => "increased",
                Direction::Decrease => "decreased",
            };
            parts.push(format!(
                "{lead} modified molecule has {p} of {}, which is {change} compared to the given one. \
                 Its {p} needs to be {need} by {} more.",
                format_value(p, value),
                format_residual(p, grad.residual),
            ));
        }
    }
    if let Some(example) = f.example {
        parts.push(format!(
            "For your reference, we found a molecule {example} that is similar to the modified molecule and meets the objective."
        ));
    }
    parts.push(REFINE.to_string());
    format!("{}\n{CLOSING}", parts.join(" "))
}
