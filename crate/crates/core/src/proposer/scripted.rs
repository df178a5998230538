use std::fs;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Proposer, ProposerError, ProposerRequest, ProposerResponse};

/// A rule fires when every given predicate holds for the latest prompt.
/// Responses are served in order; `$1`-style references expand capture
/// groups of `pattern`. When `repeat` is set the last response is reused,
/// otherwise running out is an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub responses: Vec<String>,
    #[serde(default)]
    pub repeat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedScenario {
    Responses(Vec<String>),
    Rules { rules: Vec<ScriptRule> },
}

impl ScriptedScenario {
    pub fn from_file(path: &Path) -> Result<Self, ProposerError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ProposerError::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ProposerError::Config(format!("invalid scenario {}: {e}", path.display())))
    }
}

struct CompiledRule {
    rule: ScriptRule,
    regex: Option<Regex>,
}

struct State {
    served: usize,
    per_rule: Vec<usize>,
}

pub struct ScriptedProposer {
    scenario: ScriptedScenario,
    rules: Vec<CompiledRule>,
    state: Mutex<State>,
}

impl ScriptedProposer {
    /// Panics on an invalid rule pattern; use [`ScriptedProposer::try_new`]
    /// for untrusted scenarios.
    pub fn new(scenario: ScriptedScenario) -> Self {
        Self::try_new(scenario).expect("valid scripted scenario")
    }

    pub fn try_new(scenario: ScriptedScenario) -> Result<Self, ProposerError> {
        let rules = match &scenario {
            ScriptedScenario::Responses(_) => Vec::new(),
            ScriptedScenario::Rules { rules } => rules
                .iter()
                .map(|r| {
                    let regex = r
                        .pattern
                        .as_deref()
                        .map(Regex::new)
                        .transpose()
                        .map_err(|e| ProposerError::Config(format!("bad rule pattern: {e}")))?;
                    Ok(CompiledRule { rule: r.clone(), regex })
                })
                .collect::<Result<_, ProposerError>>()?,
        };
        let n = rules.len();
        Ok(ScriptedProposer { scenario, rules, state: Mutex::new(State { served: 0, per_rule: vec![0; n] }) })
    }

    pub fn from_responses<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::new(ScriptedScenario::Responses(responses.into_iter().map(Into::into).collect()))
    }

    /// Responses served so far.
    pub fn served(&self) -> usize {
        self.state.lock().expect("scripted state").served
    }
}

impl Proposer for ScriptedProposer {
    fn propose(&self, request: &ProposerRequest) -> Result<ProposerResponse, ProposerError> {
        let mut state = self.state.lock().expect("scripted state");
        let text = match &self.scenario {
            ScriptedScenario::Responses(list) => list
                .get(state.served)
                .cloned()
                .ok_or(ProposerError::ScenarioUnderrun { served: state.served })?,
            ScriptedScenario::Rules { .. } => {
                let prompt = request.prompt();
                let (k, rule, caps) = self
                    .rules
                    .iter()
                    .enumerate()
                    .find_map(|(k, r)| {
                        if r.rule.contains.as_deref().is_some_and(|c| !prompt.contains(c)) {
                            return None;
                        }
                        match &r.regex {
                            Some(re) => re.captures(prompt).map(|c| (k, r, Some(c))),
                            None => Some((k, r, None)),
                        }
                    })
                    .ok_or(ProposerError::NoMatchingRule)?;
                let used = state.per_rule[k];
                let template = match rule.rule.responses.get(used) {
                    Some(t) => t,
                    None if rule.rule.repeat && !rule.rule.responses.is_empty() => {
                        rule.rule.responses.last().expect("non-empty")
                    }
                    None => return Err(ProposerError::ScenarioUnderrun { served: state.served }),
                };
                state.per_rule[k] += 1;
                match caps {
                    Some(c) => {
                        let mut out = String::new();
                        c.expand(template, &mut out);
                        out
                    }
                    None => template.clone(),
                }
            }
        };
        state.served += 1;
        if text.trim().is_empty() {
            return Err(ProposerError::Empty);
        }
        Ok(ProposerResponse::local(text))
    }

    fn model(&self) -> String {
        "scripted".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposer::{ChatMessage, GenerationParams};

    fn req(prompt: &str) -> ProposerRequest {
        ProposerRequest { system: None, messages: vec![ChatMessage::user(prompt)], params: GenerationParams::default() }
    }

    #[test]
    fn list_in_order_then_underrun() {
        let p = ScriptedProposer::from_responses(["CCO", "CCN"]);
        let r = p.propose(&req("x")).unwrap();
        assert_eq!((r.text.as_str(), r.latency_ms), ("CCO", 0));
        assert_eq!(p.propose(&req("x")).unwrap().text, "CCN");
        assert!(matches!(p.propose(&req("x")), Err(ProposerError::ScenarioUnderrun { served: 2 })));
    }

    #[test]
    fn rules_match_and_expand() {
        let scenario: ScriptedScenario = serde_json::from_str(
            r#"{"rules": [
                {"contains": "not chemically valid", "responses": ["CCO"]},
                {"pattern": "Given (\\S+), modify", "responses": ["${1}C"], "repeat": true}
            ]}"#,
        )
        .unwrap();
        let p = ScriptedProposer::new(scenario);
        assert_eq!(p.propose(&req("Given CCN, modify it")).unwrap().text, "CCNC");
        assert_eq!(p.propose(&req("Given CCN, modify it")).unwrap().text, "CCNC");
        assert_eq!(p.propose(&req("not chemically valid")).unwrap().text, "CCO");
        assert!(matches!(p.propose(&req("not chemically valid")), Err(ProposerError::ScenarioUnderrun { .. })));
        assert!(matches!(p.propose(&req("other")), Err(ProposerError::NoMatchingRule)));
    }
}
