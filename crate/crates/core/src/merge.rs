//! Merge algorithms joining per-XDP results into one answer.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::protocol::{ErrorCode, MergeAlgorithmName, NodeName};
use crate::query::{
    evaluate, parse_fragment, Element, QueryError, QueryExpr, QueryProcessor, Value, XmlError,
    XmlNode,
};

/// The parsed body of one XML-QUERY-RESULT and the XDP that sent it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XdpResult {
    pub source: NodeName,
    /// Top-level nodes of the body; usually a single element.
    pub body: Vec<XmlNode>,
}

impl XdpResult {
    pub fn new(source: NodeName, body: Vec<XmlNode>) -> Self {
        Self { source, body }
    }

    pub fn parse(source: NodeName, body: &[u8]) -> Result<Self, XmlError> {
        Ok(Self::new(source, parse_fragment(body)?))
    }

    fn single_root(&self) -> Result<&Element, MergeError> {
        match self.body.as_slice() {
            [XmlNode::Element(e)] => Ok(e),
            _ => Err(MergeError::NotSingleRoot(self.source.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("no results to merge")]
    NoResults,
    #[error("result from {0} is not a single-rooted document")]
    NotSingleRoot(String),
    #[error("root element <{found}> from {source_name} does not match <{expected}>")]
    RootMismatch {
        expected: String,
        found: String,
        source_name: String,
    },
    #[error("Depth must be at least 1, got {0}")]
    DepthTooSmall(u32),
    #[error(transparent)]
    Query(#[from] QueryError),
}

impl MergeError {
    /// Code reported to the client.
    pub fn code(&self) -> ErrorCode {
        match self {
            MergeError::Query(_) => ErrorCode::QUERY_PROCESSOR,
            _ => ErrorCode::INTERNAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Concatenate,
    RemoveDuplicates,
    UserDefined,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Concatenate, Algorithm::RemoveDuplicates, Algorithm::UserDefined];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Concatenate => "concatenate",
            Algorithm::RemoveDuplicates => "remove-duplicates",
            Algorithm::UserDefined => "user-defined",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn list_algorithms() -> Vec<MergeAlgorithmName> {
    Algorithm::ALL
        .iter()
        .map(|a| MergeAlgorithmName::new(a.name()).expect("built-in names are valid"))
        .collect()
}

/// How to merge one transaction's results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeRequest {
    Concatenate,
    RemoveDuplicates { depth: u32 },
    UserDefined { query: String },
}

impl MergeRequest {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            MergeRequest::Concatenate => Algorithm::Concatenate,
            MergeRequest::RemoveDuplicates { .. } => Algorithm::RemoveDuplicates,
            MergeRequest::UserDefined { .. } => Algorithm::UserDefined,
        }
    }
}

/// Runs `request` and returns the serialized merged body.
pub fn merge(request: &MergeRequest, results: &[XdpResult], processor: &dyn QueryProcessor) -> Result<String, MergeError> {
    if results.is_empty() {
        return Err(MergeError::NoResults);
    }
    match request {
        MergeRequest::Concatenate => Ok(merge_concatenate(results).serialize()),
        MergeRequest::RemoveDuplicates { depth } => Ok(merge_remove_duplicates(results, *depth)?.serialize()),
        MergeRequest::UserDefined { query } => Ok(processor.execute(query, &build_context_item(results))?),
    }
}

/// `<result>` holding every result body in input order.
pub fn merge_concatenate(results: &[XdpResult]) -> XmlNode {
    let mut root = Element::new("result");
    for r in results {
        root.children.extend(r.body.iter().cloned());
    }
    root.normalize();
    root.into()
}

/// Unifies elements above `depth` by name and attributes and keeps one copy
/// of each distinct subtree at `depth` and below. The root is level 0.
pub fn merge_remove_duplicates(results: &[XdpResult], depth: u32) -> Result<XmlNode, MergeError> {
    if depth < 1 {
        return Err(MergeError::DepthTooSmall(depth));
    }
    let first = results.first().ok_or(MergeError::NoResults)?.single_root()?;
    let mut merged = Element::new(first.name.clone());
    merged.attributes = first.attributes.clone();
    for r in results {
        let root = r.single_root()?;
        if root.name != merged.name || root.attributes != merged.attributes {
            return Err(MergeError::RootMismatch {
                expected: merged.name.clone(),
                found: root.name.clone(),
                source_name: r.source.to_string(),
            });
        }
        merge_into(&mut merged, root, 1, depth);
    }
    Ok(merged.into())
}

fn merge_into(target: &mut Element, source: &Element, level: u32, depth: u32) {
    if level >= depth {
        let mut seen: HashSet<String> = target.children.iter().map(|c| c.serialize()).collect();
        for child in &source.children {
            if seen.insert(child.serialize()) {
                target.children.push(child.clone());
            }
        }
        target.normalize();
        return;
    }
    for child in &source.children {
        match child {
            XmlNode::Element(e) => {
                let existing = target.children.iter().position(
                    |c| matches!(c, XmlNode::Element(t) if t.name == e.name && t.attributes == e.attributes),
                );
                let idx = existing.unwrap_or_else(|| {
                    let mut shell = Element::new(e.name.clone());
                    shell.attributes = e.attributes.clone();
                    target.children.push(shell.into());
                    target.children.len() - 1
                });
                let XmlNode::Element(slot) = &mut target.children[idx] else { unreachable!() };
                merge_into(slot, e, level + 1, depth);
            }
            XmlNode::Text(_) => {
                if !target.children.contains(child) {
                    target.children.push(child.clone());
                }
            }
        }
    }
    target.normalize();
}

/// `<context-item>` listing each result under its XDP's name.
pub fn build_context_item(results: &[XdpResult]) -> XmlNode {
    let mut root = Element::new("context-item");
    for r in results {
        let mut xqres = Element::new("xqres");
        xqres.children = r.body.clone();
        xqres.normalize();
        let entry = Element::new("result")
            .with_child(Element::new("xdp").with_child(Element::new("name").with_text(r.source.as_str())))
            .with_child(xqres);
        root.children.push(entry.into());
    }
    root.into()
}

pub fn merge_user_defined(results: &[XdpResult], query: &QueryExpr) -> Result<Value, MergeError> {
    Ok(evaluate(query, &build_context_item(results))?)
}
