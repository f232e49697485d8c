//! List-valued header formats: `Result-Sources`, `Merge-Algorithms`,
//! `Active-Queries` and the XDP lists of INFO-REPLY.

use thiserror::Error;

use super::types::{InvalidValue, NodeIdentifier, NodeName};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed list {input:?}: {reason}")]
pub struct ListError {
    pub input: String,
    pub reason: String,
}

impl ListError {
    fn new(input: &str, reason: impl Into<String>) -> Self {
        Self {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}

/// `{A} {B} {C}`
pub fn format_result_sources(names: &[NodeName]) -> String {
    names
        .iter()
        .map(|n| format!("{{{n}}}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_result_sources(s: &str) -> Result<Vec<NodeName>, ListError> {
    parse_xdp_spec_list(s)?
        .into_iter()
        .map(|(ident, name)| match ident {
            None => Ok(name),
            Some(_) => Err(ListError::new(s, "identifier where only a name is allowed")),
        })
        .collect()
}

/// Splits a single-space separated token list; the empty string is the
/// empty list.
pub fn parse_space_list(s: &str) -> Vec<String> {
    if s.is_empty() {
        return Vec::new();
    }
    s.split(' ').map(str::to_string).collect()
}

/// Parses `((XDP-SPEC " ")* XDP-SPEC)?` where
/// `XDP-SPEC ::= (NODE-IDENTIFIER)? "{" NODE-NAME "}"`.
pub fn parse_xdp_spec_list(s: &str) -> Result<Vec<(Option<NodeIdentifier>, NodeName)>, ListError> {
    let mut out = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        let open = rest
            .find('{')
            .ok_or_else(|| ListError::new(s, "expected '{'"))?;
        let ident = &rest[..open];
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| ListError::new(s, "unterminated '{'"))?;
        let name = NodeName::new(&after[..close]).map_err(|e| ListError::new(s, e.to_string()))?;
        let ident = match ident {
            "" => None,
            _ => Some(NodeIdentifier::new(ident).map_err(|e: InvalidValue| ListError::new(s, e.to_string()))?),
        };
        out.push((ident, name));
        rest = &after[close + 1..];
        if let Some(next) = rest.strip_prefix(' ') {
            if next.is_empty() {
                return Err(ListError::new(s, "trailing space"));
            }
            rest = next;
        } else if !rest.is_empty() {
            return Err(ListError::new(s, "entries must be separated by one space"));
        }
    }
    Ok(out)
}

pub fn format_xdp_spec_list(entries: &[(Option<NodeIdentifier>, NodeName)]) -> String {
    entries
        .iter()
        .map(|(ident, name)| match ident {
            Some(i) => format!("{i}{{{name}}}"),
            None => format!("{{{name}}}"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
