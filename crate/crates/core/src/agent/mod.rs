//! The nested refinement loop: an initial proposal, then up to `T`
//! iterations that either repair an unparsable proposal using the parse
//! error or refine a valid miss using the objective gradient and a retrieved
//! example. Both branches share the iteration budget.

pub mod extract;
pub mod prompts;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::descriptors::{compute_properties_with, ParameterTables, PropertyVector};
use crate::fingerprint::{morgan_fingerprint, tanimoto, FingerprintParams};
use crate::molgraph::{graph_signature, parse_smiles, write_smiles, MolGraph, ParseError, ParseOutcome};
use crate::objective::{evaluate, gradient, EvaluationResult, Gradient, ObjectiveSpec};
use crate::proposer::{ChatMessage, GenerationParams, Proposer, ProposerRequest};
use crate::retrieval::Database;

pub use extract::extract_smiles;
pub use prompts::{
    format_residual, format_value, initial_prompt, outer_feedback_prompt, parse_error_prompt, OuterFeedback, CLOSING,
    GENERIC_FEEDBACK, REFINE,
};

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("given molecule is invalid: {0}")]
    InvalidGiven(ParseError),
    #[error("invalid loop configuration: {0}")]
    Config(String),
    #[error("unknown mode {0:?} (expected agentdrug, no-inner, generic or no-retrieval)")]
    UnknownMode(String),
}

/// Named flag combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopMode {
    /// Parse-error repair, gradient feedback and retrieval.
    #[serde(rename = "agentdrug")]
    Full,
    /// No parse-error repair.
    #[serde(rename = "no-inner")]
    NoInner,
    /// Generic feedback without the gradient.
    #[serde(rename = "generic")]
    Generic,
    /// No retrieved example.
    #[serde(rename = "no-retrieval")]
    NoRetrieval,
}

impl LoopMode {
    pub const ALL: [LoopMode; 4] = [LoopMode::Full, LoopMode::NoInner, LoopMode::Generic, LoopMode::NoRetrieval];

    pub fn name(self) -> &'static str {
        match self {
            LoopMode::Full => "agentdrug",
            LoopMode::NoInner => "no-inner",
            LoopMode::Generic => "generic",
            LoopMode::NoRetrieval => "no-retrieval",
        }
    }
}

impl fmt::Display for LoopMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LoopMode {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LoopMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| AgentError::UnknownMode(s.to_string()))
    }
}

fn default_iterations() -> u32 {
    3
}
fn default_history() -> usize {
    8
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    #[serde(default = "default_iterations")]
    pub max_iterations: u32,
    #[serde(default = "yes")]
    pub inner_loop: bool,
    #[serde(default = "yes")]
    pub gradient_feedback: bool,
    #[serde(default = "yes")]
    pub retrieval: bool,
    /// Most messages sent per request; the opening exchange is always kept.
    #[serde(default = "default_history")]
    pub history_limit: usize,
    #[serde(default)]
    pub generation: GenerationParams,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: default_iterations(),
            inner_loop: true,
            gradient_feedback: true,
            retrieval: true,
            history_limit: default_history(),
            generation: GenerationParams::default(),
        }
    }
}

impl LoopConfig {
    pub fn with_mode(mut self, mode: LoopMode) -> Self {
        self.inner_loop = mode != LoopMode::NoInner;
        self.gradient_feedback = mode != LoopMode::Generic;
        self.retrieval = mode != LoopMode::NoRetrieval;
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_iterations == 0 {
            return Err(AgentError::Config("max_iterations must be at least 1".into()));
        }
        if self.history_limit < 3 {
            return Err(AgentError::Config("history_limit must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Init,
    InnerFix,
    OuterRefine,
}

/// Retrieved molecule quoted in a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRef {
    pub smiles: String,
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// 0 for the initial proposal.
    pub iteration: u32,
    pub kind: StepKind,
    /// Step whose molecule the prompt's feedback describes; `None` means the
    /// given molecule (or no feedback, for the initial step).
    pub feedback_from: Option<usize>,
    pub example: Option<ExampleRef>,
    pub prompt: String,
    pub response: String,
    pub extracted: String,
    pub valid: bool,
    pub error: Option<ParseError>,
    /// Normalized SMILES when valid.
    pub smiles: Option<String>,
    pub properties: Option<PropertyVector>,
    pub evaluation: Option<EvaluationResult>,
    pub gradient: Option<Gradient>,
    pub latency_ms: u64,
    pub attempts: u32,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GivenMolecule {
    pub smiles: String,
    pub signature: String,
    pub properties: PropertyVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalOutcome {
    pub smiles: Option<String>,
    pub valid: bool,
    pub hit: bool,
    /// Tanimoto to the given molecule, when valid.
    pub similarity: Option<f64>,
    /// The final molecule has the given molecule's signature.
    pub unchanged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub schema: u32,
    pub objective: ObjectiveSpec,
    pub config: LoopConfig,
    pub fingerprint: FingerprintParams,
    pub given: GivenMolecule,
    pub steps: Vec<Step>,
    #[serde(rename = "final")]
    pub outcome: FinalOutcome,
    pub aborted: Option<String>,
}

impl RefinementTrace {
    pub fn kinds(&self) -> Vec<StepKind> {
        self.steps.iter().map(|s| s.kind).collect()
    }
}

struct Assessed {
    mol: Option<MolGraph>,
    step: Step,
}

/// Shared, read-only inputs of a loop run.
pub struct LoopContext<'a> {
    pub tables: &'a ParameterTables,
    pub database: Option<&'a Database>,
    pub fingerprint: FingerprintParams,
}

impl<'a> LoopContext<'a> {
    pub fn new(tables: &'a ParameterTables, database: Option<&'a Database>) -> Self {
        let fingerprint = database.map_or_else(FingerprintParams::default, |d| d.params());
        LoopContext { tables, database, fingerprint }
    }
}

/// First exchange plus the longest suffix that starts with a user turn and
/// fits the limit.
fn windowed(history: &[ChatMessage], limit: usize) -> Vec<ChatMessage> {
    if history.len() <= limit {
        return history.to_vec();
    }
    let mut suffix = limit - 2;
    if suffix.is_multiple_of(2) {
        suffix -= 1;
    }
    let mut out = history[..2].to_vec();
    out.extend_from_slice(&history[history.len() - suffix..]);
    out
}

struct Run<'a> {
    config: &'a LoopConfig,
    spec: &'a ObjectiveSpec,
    ctx: &'a LoopContext<'a>,
    proposer: &'a dyn Proposer,
    given: GivenMolecule,
    given_fp: crate::fingerprint::Fingerprint,
    history: Vec<ChatMessage>,
    steps: Vec<Step>,
    mols: Vec<Option<MolGraph>>,
}

impl Run<'_> {
    fn ask(&mut self, iteration: u32, kind: StepKind, prompt: String, feedback_from: Option<usize>, example: Option<ExampleRef>) -> Result<(), String> {
        self.history.push(ChatMessage::user(prompt.clone()));
        let request = ProposerRequest {
            system: None,
            messages: windowed(&self.history, self.config.history_limit),
            params: self.config.generation,
        };
        let response = self.proposer.propose(&request).map_err(|e| e.to_string())?;
        self.history.push(ChatMessage::assistant(response.text.clone()));
        let extracted = extract_smiles(&response.text).map_err(|e| e.to_string())?;
        let assessed = self.assess(Step {
            iteration,
            kind,
            feedback_from,
            example,
            prompt,
            response: response.text,
            extracted,
            valid: false,
            error: None,
            smiles: None,
            properties: None,
            evaluation: None,
            gradient: None,
            latency_ms: response.latency_ms,
            attempts: response.attempts,
            cached: response.cached,
        });
        self.steps.push(assessed.step);
        self.mols.push(assessed.mol);
        Ok(())
    }

    fn assess(&self, mut step: Step) -> Assessed {
        match parse_smiles(&step.extracted) {
            ParseOutcome::Invalid(e) => {
                step.error = Some(e);
                Assessed { mol: None, step }
            }
            ParseOutcome::Valid(mol) => {
                let props = compute_properties_with(self.ctx.tables, &mol, &self.spec.properties())
                    .expect("objective has at least one property");
                step.valid = true;
                step.smiles = Some(write_smiles(&mol));
                step.evaluation = Some(evaluate(self.spec, &self.given.properties, &props).expect("complete vectors"));
                step.gradient = Some(gradient(self.spec, &self.given.properties, &props).expect("complete vectors"));
                step.properties = Some(props);
                Assessed { mol: Some(mol), step }
            }
        }
    }

    /// Outer feedback describing step `basis` (or the given molecule).
    fn outer_prompt(&self, basis: Option<usize>) -> (String, Option<ExampleRef>) {
        let (props, evaluation, grad, fp, sig) = match basis {
            Some(k) => {
                let s = &self.steps[k];
                let mol = self.mols[k].as_ref().expect("basis step is valid");
                (
                    s.properties.clone().expect("valid step"),
                    s.evaluation.clone().expect("valid step"),
                    s.gradient.clone().expect("valid step"),
                    morgan_fingerprint(mol, self.ctx.fingerprint).expect("validated parameters"),
                    graph_signature(mol),
                )
            }
            None => (
                self.given.properties.clone(),
                evaluate(self.spec, &self.given.properties, &self.given.properties).expect("complete vectors"),
                gradient(self.spec, &self.given.properties, &self.given.properties).expect("complete vectors"),
                self.given_fp.clone(),
                self.given.signature.clone(),
            ),
        };
        let example = match (self.config.retrieval, self.ctx.database) {
            (true, Some(db)) => {
                let exclude: HashSet<String> = [self.given.signature.clone(), sig].into_iter().collect();
                db.retrieve(self.spec, &self.given.properties, &fp, &exclude)
                    .ok()
                    .flatten()
                    .map(|r| ExampleRef { smiles: r.record.smiles.clone(), index: r.index, similarity: r.similarity })
            }
            _ => None,
        };
        let prompt = outer_feedback_prompt(&OuterFeedback {
            modified: &props,
            evaluation: &evaluation,
            gradient: &grad,
            example: example.as_ref().map(|e| e.smiles.as_str()),
            gradient_feedback: self.config.gradient_feedback,
        });
        (prompt, example)
    }

    fn last_valid(&self) -> Option<usize> {
        self.steps.iter().rposition(|s| s.valid)
    }

    fn iterate(&mut self) -> Result<(), String> {
        let init = initial_prompt(self.spec, &self.given.smiles);
        self.ask(0, StepKind::Init, init, None, None)?;
        for iteration in 1..=self.config.max_iterations {
            let k = self.steps.len() - 1;
            let prev = &self.steps[k];
            if !prev.valid {
                if self.config.inner_loop {
                    let prompt = parse_error_prompt(&prev.extracted, prev.error.as_ref().expect("invalid step has error"));
                    self.ask(iteration, StepKind::InnerFix, prompt, Some(k), None)?;
                } else {
                    let basis = self.last_valid();
                    let (prompt, example) = self.outer_prompt(basis);
                    self.ask(iteration, StepKind::OuterRefine, prompt, basis, example)?;
                }
            } else if prev.evaluation.as_ref().is_some_and(|e| e.overall) {
                break;
            } else {
                let (prompt, example) = self.outer_prompt(Some(k));
                self.ask(iteration, StepKind::OuterRefine, prompt, Some(k), example)?;
            }
        }
        Ok(())
    }

    fn outcome(&self) -> FinalOutcome {
        let Some((step, mol)) = self.steps.last().zip(self.mols.last()) else {
            return FinalOutcome { smiles: None, valid: false, hit: false, similarity: None, unchanged: false };
        };
        match mol {
            Some(mol) => FinalOutcome {
                smiles: step.smiles.clone(),
                valid: true,
                hit: step.evaluation.as_ref().is_some_and(|e| e.overall),
                similarity: morgan_fingerprint(mol, self.ctx.fingerprint)
                    .ok()
                    .and_then(|fp| tanimoto(&self.given_fp, &fp).ok()),
                unchanged: graph_signature(mol) == self.given.signature,
            },
            None => FinalOutcome {
                smiles: Some(step.extracted.clone()),
                valid: false,
                hit: false,
                similarity: None,
                unchanged: false,
            },
        }
    }
}

/// Runs the refinement loop for one molecule and objective. Proposer
/// failures end the loop early and are recorded in `aborted`.
pub fn run_loop(
    config: &LoopConfig,
    given: &str,
    spec: &ObjectiveSpec,
    proposer: &dyn Proposer,
    ctx: &LoopContext<'_>,
) -> Result<RefinementTrace, AgentError> {
    config.validate()?;
    ctx.fingerprint.validate().map_err(|e| AgentError::Config(e.to_string()))?;
    if let Some(db) = ctx.database {
        if db.params() != ctx.fingerprint {
            return Err(AgentError::Config("database fingerprint parameters differ from the loop's".into()));
        }
        if let Some(p) = spec.properties().into_iter().find(|p| !db.header.properties.contains(p)) {
            return Err(AgentError::Config(format!("database lacks property {p}")));
        }
    }
    let mol = MolGraph::from_smiles(given).map_err(AgentError::InvalidGiven)?;
    let properties = compute_properties_with(ctx.tables, &mol, &spec.properties())
        .map_err(|e| AgentError::Config(e.to_string()))?;
    let mut run = Run {
        config,
        spec,
        ctx,
        proposer,
        given: GivenMolecule { smiles: given.trim().to_string(), signature: graph_signature(&mol), properties },
        given_fp: morgan_fingerprint(&mol, ctx.fingerprint).map_err(|e| AgentError::Config(e.to_string()))?,
        history: Vec::new(),
        steps: Vec::new(),
        mols: Vec::new(),
    };
    let aborted = run.iterate().err();
    let outcome = run.outcome();
    Ok(RefinementTrace {
        schema: TRACE_SCHEMA,
        objective: spec.clone(),
        config: config.clone(),
        fingerprint: ctx.fingerprint,
        given: run.given,
        steps: run.steps,
        outcome,
        aborted,
    })
}

/// Checks that step kinds follow the branch rules, the budget holds and the
/// final outcome agrees with the last step.
pub fn check_trace(trace: &RefinementTrace) -> Result<(), String> {
    let steps = &trace.steps;
    let Some(first) = steps.first() else {
        return if trace.aborted.is_some() { Ok(()) } else { Err("no steps in a completed trace".into()) };
    };
    if first.kind != StepKind::Init || first.iteration != 0 {
        return Err("first step must be the initial proposal".into());
    }
    if steps.len() as u32 > trace.config.max_iterations + 1 {
        return Err(format!("{} refinement steps exceed the budget", steps.len() - 1));
    }
    for (k, pair) in steps.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.iteration != k as u32 + 1 {
            return Err(format!("step {} has iteration {}", k + 1, next.iteration));
        }
        let hit = prev.evaluation.as_ref().is_some_and(|e| e.overall);
        let expected = match (prev.valid, hit) {
            (true, true) => return Err(format!("step {} follows a hit", k + 1)),
            (true, false) => StepKind::OuterRefine,
            (false, _) if trace.config.inner_loop => StepKind::InnerFix,
            (false, _) => StepKind::OuterRefine,
        };
        if next.kind != expected {
            return Err(format!("step {} is {:?}, expected {expected:?}", k + 1, next.kind));
        }
    }
    let last = steps.last().expect("non-empty");
    let hit = last.evaluation.as_ref().is_some_and(|e| e.overall);
    if trace.aborted.is_none() {
        if !hit && last.iteration < trace.config.max_iterations {
            return Err("loop stopped before the budget without a hit".into());
        }
        if trace.outcome.valid != last.valid || trace.outcome.hit != hit {
            return Err("final outcome disagrees with the last step".into());
        }
    }
    if trace.outcome.hit && !trace.outcome.valid {
        return Err("hit without validity".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs(n: usize) -> Vec<ChatMessage> {
        (0..n)
            .map(|i| if i % 2 == 0 { ChatMessage::user(format!("u{i}")) } else { ChatMessage::assistant(format!("a{i}")) })
            .collect()
    }

    #[test]
    fn history_window_keeps_opening_exchange() {
        assert_eq!(windowed(&msgs(7), 8).len(), 7);
        let w = windowed(&msgs(11), 8);
        assert_eq!(w.len(), 7);
        assert_eq!(w[0].content, "u0");
        assert_eq!(w[1].content, "a1");
        assert_eq!(w[2].content, "u6");
        assert_eq!(w.last().unwrap().content, "u10");
        for pair in w.windows(2) {
            assert_ne!(pair[0].role, pair[1].role);
        }
    }

    #[test]
    fn modes_set_flags() {
        let c = LoopConfig::default().with_mode("no-inner".parse().unwrap());
        assert!(!c.inner_loop && c.gradient_feedback && c.retrieval);
        let c = LoopConfig::default().with_mode(LoopMode::Generic);
        assert!(c.inner_loop && !c.gradient_feedback && c.retrieval);
        assert!("full".parse::<LoopMode>().is_err());
    }
}
