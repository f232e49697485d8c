//! Value types that appear in DXQP header lines.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Rejection of a value that cannot appear in its header slot.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid {kind}: {reason}")]
pub struct InvalidValue {
    pub kind: &'static str,
    pub reason: String,
}

impl InvalidValue {
    fn new(kind: &'static str, reason: impl Into<String>) -> Self {
        Self {
            kind,
            reason: reason.into(),
        }
    }
}

/// The closed set of DXQP-1.0 message types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    Ok,
    Error,
    XmlQuery,
    MergeAlgorithm,
    XmlQueryResult,
    XmlQueryMergedResult,
    Register,
    Unregister,
    AddToDl,
    RmFromDl,
    InfoRequest,
    InfoReply,
}

impl MessageType {
    pub const ALL: [MessageType; 12] = [
        MessageType::Ok,
        MessageType::Error,
        MessageType::XmlQuery,
        MessageType::MergeAlgorithm,
        MessageType::XmlQueryResult,
        MessageType::XmlQueryMergedResult,
        MessageType::Register,
        MessageType::Unregister,
        MessageType::AddToDl,
        MessageType::RmFromDl,
        MessageType::InfoRequest,
        MessageType::InfoReply,
    ];

    /// Wire token of this type.
    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::Ok => "OK",
            MessageType::Error => "ERROR",
            MessageType::XmlQuery => "XML-QUERY",
            MessageType::MergeAlgorithm => "MERGE-ALGORITHM",
            MessageType::XmlQueryResult => "XML-QUERY-RESULT",
            MessageType::XmlQueryMergedResult => "XML-QUERY-MERGED-RESULT",
            MessageType::Register => "REGISTER",
            MessageType::Unregister => "UNREGISTER",
            MessageType::AddToDl => "ADDTODL",
            MessageType::RmFromDl => "RMFROMDL",
            MessageType::InfoRequest => "INFO-REQUEST",
            MessageType::InfoReply => "INFO-REPLY",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|t| t.as_str() == token)
    }

    /// Message-specific headers in the order their grammar production lists
    /// them. Used for canonical emission.
    pub(crate) fn header_order(self) -> &'static [&'static str] {
        match self {
            MessageType::Ok => &["Transaction-ID"],
            MessageType::Error => &["Error-Code"],
            MessageType::XmlQuery => &["Transaction-ID", "Merge-Algorithm", "Depth"],
            MessageType::MergeAlgorithm => &["Transaction-ID"],
            MessageType::XmlQueryResult => &["Transaction-ID"],
            MessageType::XmlQueryMergedResult => &["Transaction-ID", "Result-Sources"],
            MessageType::Register => &["Node-Name"],
            MessageType::InfoRequest => &["Request"],
            MessageType::Unregister
            | MessageType::AddToDl
            | MessageType::RmFromDl
            | MessageType::InfoReply => &[],
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageType {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_token(s).ok_or_else(|| InvalidValue::new("message type", s))
    }
}

/// Protocol version of the ID-LINE, one decimal digit each side of the dot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Version {
    pub major: u8,
    pub minor: u8,
}

impl Version {
    pub const V1_0: Version = Version { major: 1, minor: 0 };

    pub fn new(major: u8, minor: u8) -> Result<Self, InvalidValue> {
        if major > 9 || minor > 9 {
            return Err(InvalidValue::new("version", "components must be single digits"));
        }
        Ok(Self { major, minor })
    }
}

impl Default for Version {
    fn default() -> Self {
        Self::V1_0
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

/// Identifier of a DXQ-Node: a URL, or the empty string for a client that
/// has not been assigned one yet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeIdentifier(String);

impl NodeIdentifier {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidValue> {
        let value = value.into();
        validate_identifier(&value)?;
        Ok(Self(value))
    }

    pub fn empty() -> Self {
        Self(String::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Checks the URL shape required of identifiers: `scheme://rest` with an
/// RFC 3986 scheme, a non-empty remainder, and no whitespace or control
/// characters anywhere. The empty string is accepted.
pub fn validate_identifier(s: &str) -> Result<(), InvalidValue> {
    if s.is_empty() {
        return Ok(());
    }
    if let Some(c) = s.chars().find(|c| c.is_whitespace() || c.is_control()) {
        return Err(InvalidValue::new(
            "identifier",
            format!("{s:?} contains {c:?}"),
        ));
    }
    let Some((scheme, rest)) = s.split_once("://") else {
        return Err(InvalidValue::new(
            "identifier",
            format!("{s:?} has no scheme separator"),
        ));
    };
    let mut chars = scheme.chars();
    let scheme_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'));
    if !scheme_ok {
        return Err(InvalidValue::new(
            "identifier",
            format!("{s:?} has an invalid scheme"),
        ));
    }
    if rest.is_empty() {
        return Err(InvalidValue::new("identifier", format!("{s:?} has no authority")));
    }
    if rest.contains(['{', '}']) {
        return Err(InvalidValue::new("identifier", format!("{s:?} contains a brace")));
    }
    Ok(())
}

impl fmt::Display for NodeIdentifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NodeIdentifier {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// User-facing name of a DXQ-Node. May contain anything except CR, LF and
/// curly braces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeName(String);

impl NodeName {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidValue> {
        let value = value.into();
        if let Some(c) = value.chars().find(|c| matches!(c, '\r' | '\n' | '{' | '}')) {
            return Err(InvalidValue::new(
                "node name",
                format!("{value:?} contains {c:?}"),
            ));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for NodeName {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// One `Name: value` header line.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeaderVariable {
    name: String,
    value: String,
}

impl HeaderVariable {
    /// Values may not contain CRLF, may not end in CR (it would fuse with the
    /// line terminator) and may not start with a space (the separator
    /// swallows leading spaces on read).
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Result<Self, InvalidValue> {
        let name = name.into();
        let value = value.into();
        if !is_vname(&name) {
            return Err(InvalidValue::new("header name", format!("{name:?}")));
        }
        if value.contains("\r\n") {
            return Err(InvalidValue::new(
                "header value",
                format!("{name}: value contains a line break"),
            ));
        }
        if value.starts_with(' ') {
            return Err(InvalidValue::new(
                "header value",
                format!("{name}: value starts with a space"),
            ));
        }
        Ok(Self { name, value })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

/// `VNAME ::= [A-Za-z-]+`
pub fn is_vname(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphabetic() || b == b'-')
}

/// Sender-chosen token correlating a query with its responses.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransactionId(String);

impl TransactionId {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidValue> {
        let value = value.into();
        if value.is_empty() {
            return Err(InvalidValue::new("transaction id", "empty"));
        }
        if value.contains([' ', '\r', '\n']) {
            return Err(InvalidValue::new(
                "transaction id",
                format!("{value:?} contains white space"),
            ));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TransactionId {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// Three-digit DXQP error code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ErrorCode(u16);

impl ErrorCode {
    pub const INVALID_MESSAGE: ErrorCode = ErrorCode(100);
    pub const UNEXPECTED_MESSAGE: ErrorCode = ErrorCode(101);
    pub const MISSING_HEADER: ErrorCode = ErrorCode(102);
    pub const MISSING_CONTENT: ErrorCode = ErrorCode(103);
    pub const QUERY_PROCESSOR: ErrorCode = ErrorCode(200);
    pub const UNSUPPORTED_MERGE_ALGORITHM: ErrorCode = ErrorCode(300);
    pub const NO_PROVIDERS: ErrorCode = ErrorCode(400);
    pub const INTERNAL: ErrorCode = ErrorCode(500);

    pub fn new(code: u16) -> Result<Self, InvalidValue> {
        if code > 999 {
            return Err(InvalidValue::new("error code", code.to_string()));
        }
        Ok(Self(code))
    }

    pub fn value(self) -> u16 {
        self.0
    }

    /// True for the 9xx range left to implementations.
    pub fn is_implementation_defined(self) -> bool {
        (900..=999).contains(&self.0)
    }

    /// Short description of the codes with a fixed meaning.
    pub fn description(self) -> Option<&'static str> {
        Some(match self.0 {
            100 => "Invalid message",
            101 => "Unexpected message",
            102 => "Missing header variable",
            103 => "Missing content",
            200 => "XML-Query processor error",
            300 => "Unsupported merge algorithm",
            400 => "No XML document providers available",
            500 => "Internal error",
            900..=999 => "Implementation-defined error",
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03}", self.0)
    }
}

impl FromStr for ErrorCode {
    type Err = InvalidValue;

    /// Accepts exactly three ASCII digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 3 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(InvalidValue::new("error code", s));
        }
        Ok(Self(s.parse().expect("three digits")))
    }
}

/// Name of a merge algorithm, `[a-z0-9-]+`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MergeAlgorithmName(String);

impl MergeAlgorithmName {
    pub fn new(value: impl Into<String>) -> Result<Self, InvalidValue> {
        let value = value.into();
        let ok = !value.is_empty()
            && value
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-');
        if !ok {
            return Err(InvalidValue::new("merge algorithm", value));
        }
        Ok(Self(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MergeAlgorithmName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for MergeAlgorithmName {
    type Err = InvalidValue;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}
