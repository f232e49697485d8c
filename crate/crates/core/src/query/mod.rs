//! XML tree model and a small query language evaluated over it.
//!
//! The language covers `let`/`return`, child paths, `sum()` and direct
//! element constructors. [`QueryProcessor`] abstracts the engine so a full
//! XQuery implementation can be plugged into the nodes instead.

mod decimal;
mod eval;
mod parser;
mod xml;

use thiserror::Error;

pub use decimal::{Decimal, DecimalError};
pub use eval::{evaluate, Item, Value};
pub use parser::{parse_query, Constructor, Content, Expr, PathStart, QueryExpr};
pub use xml::{is_xml_name, parse_fragment, parse_xml, serialize_nodes, serialize_xml, Element, XmlError, XmlNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unbound variable ${name}")]
    UnboundVariable { name: String, position: usize },
    #[error("{0}")]
    Type(String),
    #[error(transparent)]
    Xml(#[from] XmlError),
}

/// Runs query text against a document and returns the serialized result.
pub trait QueryProcessor: Send + Sync {
    fn execute(&self, query: &str, context: &XmlNode) -> Result<String, QueryError>;
}

/// The built-in engine for the supported subset.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubsetProcessor;

impl QueryProcessor for SubsetProcessor {
    fn execute(&self, query: &str, context: &XmlNode) -> Result<String, QueryError> {
        let q = parse_query(query)?;
        Ok(evaluate(&q, context)?.serialize())
    }
}
