//! Pulls a SMILES string out of a free-text model response.

use crate::molgraph::fits_token_grammar;
use crate::proposer::ProposerError;

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Contents of the first fenced block, without the language tag.
fn fenced(text: &str) -> Option<&str> {
    let start = text.find("```")? + 3;
    let rest = &text[start..];
    let body_start = rest.find('\n').map_or(0, |i| i + 1);
    let tag = rest[..body_start].trim();
    let body = if tag.is_empty() || tag.chars().all(|c| c.is_ascii_alphabetic()) { &rest[body_start..] } else { rest };
    Some(body.find("```").map_or(body, |end| &body[..end]))
}

fn clean_token(token: &str) -> &str {
    let mut t = token.trim_matches(QUOTES);
    loop {
        let stripped = t.trim_end_matches(TRAILING).trim_matches(QUOTES);
        if stripped == t {
            return t;
        }
        t = stripped;
    }
}

/// A token that lexes as SMILES and is not an ordinary word. Lowercase
/// alphabetic tokens would need ring closures to be valid, and a lone "I"
/// or "a" is far more likely prose.
fn is_candidate(token: &str) -> bool {
    if token.chars().all(|c| c.is_ascii_lowercase()) || token == "I" {
        return false;
    }
    fits_token_grammar(token)
}

/// Fences, then quotes and prose, then the first token that fits the SMILES
/// token grammar; otherwise the trimmed first line (which will then fail to
/// parse and be reported).
pub fn extract_smiles(response: &str) -> Result<String, ProposerError> {
    let text = response.trim();
    if text.is_empty() {
        return Err(ProposerError::Empty);
    }
    let scope = fenced(text).filter(|b| !b.trim().is_empty()).unwrap_or(text);
    for line in scope.lines() {
        for token in line.split_whitespace() {
            let t = clean_token(token);
            if is_candidate(t) {
                return Ok(t.to_string());
            }
        }
    }
    let first = scope.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or(text);
    Ok(first.to_string())
}
