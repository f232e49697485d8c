//! DXQP message model, parser and serializer.

use std::fmt;

use thiserror::Error;

use super::types::{
    is_vname, validate_identifier, ErrorCode, HeaderVariable, InvalidValue, MessageType,
    NodeIdentifier, TransactionId, Version,
};

pub const CRLF: &[u8] = b"\r\n";

pub const MSG_FROM: &str = "Msg-From";
pub const MSG_TO: &str = "Msg-To";
pub const CONTENT_LENGTH: &str = "Content-Length";
pub const TRANSACTION_ID: &str = "Transaction-ID";
pub const ERROR_CODE: &str = "Error-Code";
pub const MERGE_ALGORITHM: &str = "Merge-Algorithm";
pub const RESULT_SOURCES: &str = "Result-Sources";
pub const NODE_NAME: &str = "Node-Name";
pub const REQUEST: &str = "Request";
pub const DEPTH: &str = "Depth";

/// Why received bytes are not a valid message, and the error code the
/// receiver answers with.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {reason}")]
pub struct ParseFailure {
    pub code: ErrorCode,
    pub reason: String,
    /// Name of the absent header for code 102.
    pub missing: Option<&'static str>,
}

impl ParseFailure {
    fn invalid(reason: impl Into<String>) -> Self {
        Self {
            code: ErrorCode::INVALID_MESSAGE,
            reason: reason.into(),
            missing: None,
        }
    }

    fn missing_header(name: &'static str) -> Self {
        Self {
            code: ErrorCode::MISSING_HEADER,
            reason: format!("missing header variable {name}"),
            missing: Some(name),
        }
    }

    /// Body for the ERROR reply: the missing variable name for 102, the
    /// reason otherwise.
    pub fn detail(&self) -> String {
        match self.missing {
            Some(name) => name.to_string(),
            None => self.reason.clone(),
        }
    }
}

/// A message that breaks one of the structural invariants and cannot be
/// put on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidMessage {
    #[error("expected exactly one {0} header, found {1}")]
    HeaderCount(&'static str, usize),
    #[error(transparent)]
    Value(#[from] InvalidValue),
    #[error("Content-Length {declared:?} does not match a body of {actual} bytes")]
    ContentLength { declared: Option<String>, actual: usize },
}

/// One DXQP message: ID-LINE, ordered header variables and optional body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub version: Version,
    pub msg_type: MessageType,
    headers: Vec<HeaderVariable>,
    body: Option<Vec<u8>>,
}

impl Message {
    /// A DXQP-1.0 message carrying only `Msg-From` and `Msg-To`.
    pub fn new(msg_type: MessageType, from: &NodeIdentifier, to: &NodeIdentifier) -> Self {
        Self {
            version: Version::V1_0,
            msg_type,
            headers: vec![
                HeaderVariable::new(MSG_FROM, from.as_str()).expect("identifier is a valid value"),
                HeaderVariable::new(MSG_TO, to.as_str()).expect("identifier is a valid value"),
            ],
            body: None,
        }
    }

    /// Assembles a message from raw parts without checking invariants.
    pub fn from_parts(
        version: Version,
        msg_type: MessageType,
        headers: Vec<HeaderVariable>,
        body: Option<Vec<u8>>,
    ) -> Self {
        Self {
            version,
            msg_type,
            headers,
            body,
        }
    }

    /// Appends a header. Panics on a value that cannot go on the wire; use
    /// [`Message::try_header`] for untrusted input.
    pub fn with_header(self, name: &str, value: impl Into<String>) -> Self {
        self.try_header(name, value).expect("valid header variable")
    }

    pub fn try_header(mut self, name: &str, value: impl Into<String>) -> Result<Self, InvalidValue> {
        self.headers.push(HeaderVariable::new(name, value)?);
        Ok(self)
    }

    pub fn push_header(&mut self, header: HeaderVariable) {
        self.headers.push(header);
    }

    /// Replaces the first header called `name`, or appends one.
    pub fn set_header(&mut self, name: &str, value: impl Into<String>) -> Result<(), InvalidValue> {
        let header = HeaderVariable::new(name, value)?;
        match self.headers.iter_mut().find(|h| h.name() == name) {
            Some(slot) => *slot = header,
            None => self.headers.push(header),
        }
        Ok(())
    }

    pub fn remove_header(&mut self, name: &str) {
        self.headers.retain(|h| h.name() != name);
    }

    /// Sets the body and keeps `Content-Length` in step with it. An empty
    /// body removes both.
    pub fn with_body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.set_body(body);
        self
    }

    pub fn set_body(&mut self, body: impl Into<Vec<u8>>) {
        let body = body.into();
        if body.is_empty() {
            self.remove_header(CONTENT_LENGTH);
            self.body = None;
        } else {
            self.set_header(CONTENT_LENGTH, body.len().to_string())
                .expect("decimal length is a valid value");
            self.body = Some(body);
        }
    }

    pub fn headers(&self) -> &[HeaderVariable] {
        &self.headers
    }

    /// Value of the first header called `name`.
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|h| h.name() == name)
            .map(HeaderVariable::value)
    }

    pub fn header_count(&self, name: &str) -> usize {
        self.headers.iter().filter(|h| h.name() == name).count()
    }

    pub fn body(&self) -> Option<&[u8]> {
        self.body.as_deref()
    }

    pub fn body_str(&self) -> Option<&str> {
        self.body().and_then(|b| std::str::from_utf8(b).ok())
    }

    pub fn msg_from(&self) -> NodeIdentifier {
        self.identifier(MSG_FROM)
    }

    pub fn msg_to(&self) -> NodeIdentifier {
        self.identifier(MSG_TO)
    }

    fn identifier(&self, name: &str) -> NodeIdentifier {
        self.header(name)
            .and_then(|v| NodeIdentifier::new(v).ok())
            .unwrap_or_default()
    }

    pub fn transaction_id(&self) -> Option<&str> {
        self.header(TRANSACTION_ID)
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        self.header(ERROR_CODE).and_then(|v| v.parse().ok())
    }

    /// Checks every structural invariant required for emission.
    pub fn validate(&self) -> Result<(), InvalidMessage> {
        for name in [MSG_FROM, MSG_TO] {
            let count = self.header_count(name);
            if count != 1 {
                return Err(InvalidMessage::HeaderCount(name, count));
            }
            validate_identifier(self.header(name).unwrap_or_default())?;
        }
        let lengths = self.header_count(CONTENT_LENGTH);
        if lengths > 1 {
            return Err(InvalidMessage::HeaderCount(CONTENT_LENGTH, lengths));
        }
        let declared = self.header(CONTENT_LENGTH);
        let expected = declared.and_then(content_length_value).unwrap_or(0);
        let actual = self.body.as_ref().map_or(0, Vec::len);
        let consistent = match &self.body {
            Some(_) => expected == actual && actual > 0,
            None => expected == 0,
        };
        if !consistent {
            return Err(InvalidMessage::ContentLength {
                declared: declared.map(str::to_string),
                actual,
            });
        }
        Ok(())
    }

    /// Serializes in the current header order.
    pub fn to_bytes(&self) -> Result<Vec<u8>, InvalidMessage> {
        self.validate()?;
        let mut out = Vec::with_capacity(64 + self.body.as_ref().map_or(0, Vec::len));
        out.extend_from_slice(format!("DXQP-{} {}", self.version, self.msg_type).as_bytes());
        out.extend_from_slice(CRLF);
        for h in &self.headers {
            out.extend_from_slice(h.name().as_bytes());
            out.extend_from_slice(b": ");
            out.extend_from_slice(h.value().as_bytes());
            out.extend_from_slice(CRLF);
        }
        out.extend_from_slice(CRLF);
        if let Some(body) = &self.body {
            out.extend_from_slice(body);
        }
        Ok(out)
    }

    /// Reorders headers to: `Msg-From`, `Msg-To`, the message type's own
    /// headers in grammar order, any other headers as given, and
    /// `Content-Length` last.
    pub fn canonicalize(&mut self) {
        let order = self.msg_type.header_order();
        let rank = |name: &str| -> usize {
            match name {
                MSG_FROM => 0,
                MSG_TO => 1,
                CONTENT_LENGTH => usize::MAX,
                _ => order
                    .iter()
                    .position(|n| *n == name)
                    .map_or(usize::MAX - 1, |i| i + 2),
            }
        };
        self.headers.sort_by_key(|h| rank(h.name()));
    }

    pub fn canonical(mut self) -> Self {
        self.canonicalize();
        self
    }

    pub fn parse(input: &[u8]) -> Result<Self, ParseFailure> {
        parse_message(input)
    }
}

impl fmt::Display for Message {
    /// Human-readable rendering: CRLF shown as line breaks, body as text.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DXQP-{} {}", self.version, self.msg_type)?;
        for h in &self.headers {
            writeln!(f, "{}: {}", h.name(), h.value())?;
        }
        writeln!(f)?;
        if let Some(body) = &self.body {
            write!(f, "{}", String::from_utf8_lossy(body))?;
        }
        Ok(())
    }
}

/// Serializes a message, optionally applying the canonical header order.
pub fn serialize_message(message: &Message, canonical: bool) -> Result<Vec<u8>, InvalidMessage> {
    if canonical {
        message.clone().canonical().to_bytes()
    } else {
        message.to_bytes()
    }
}

/// Interprets a `Content-Length` value. Only a positive decimal integer
/// announces a body; anything else means the message ends after the header.
/// Values too large for `usize` saturate so size limits still reject them.
pub fn content_length_value(value: &str) -> Option<usize> {
    if value.is_empty() || !value.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = value.trim_start_matches('0');
    if digits.is_empty() {
        return None;
    }
    Some(digits.parse().unwrap_or(usize::MAX))
}

/// Position just past the blank line closing the header section.
fn header_end(input: &[u8]) -> Option<usize> {
    input.windows(4).position(|w| w == b"\r\n\r\n").map(|p| p + 4)
}

/// Declared body length from a complete header section (ID-LINE through
/// the closing blank line). The first `Content-Length` header wins.
pub(crate) fn declared_body_len(header: &[u8]) -> usize {
    split_lines(header)
        .skip(1)
        .find_map(|line| {
            let rest = line.strip_prefix(CONTENT_LENGTH.as_bytes())?.strip_prefix(b":")?;
            let value = std::str::from_utf8(rest).ok()?.trim_start_matches(' ');
            Some(content_length_value(value).unwrap_or(0))
        })
        .unwrap_or(0)
}

fn split_lines(header: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut rest = header;
    std::iter::from_fn(move || {
        let pos = rest.windows(2).position(|w| w == CRLF)?;
        let line = &rest[..pos];
        rest = &rest[pos + 2..];
        Some(line)
    })
    .take_while(|line| !line.is_empty())
}

fn parse_id_line(line: &str) -> Result<(Version, MessageType), ParseFailure> {
    let rest = line
        .strip_prefix("DXQP-")
        .ok_or_else(|| ParseFailure::invalid(format!("bad ID-LINE {line:?}")))?;
    let bytes = rest.as_bytes();
    if bytes.len() < 5 || !bytes[0].is_ascii_digit() || bytes[1] != b'.' || !bytes[2].is_ascii_digit() || bytes[3] != b' ' {
        return Err(ParseFailure::invalid(format!("bad ID-LINE {line:?}")));
    }
    let version = Version::new(bytes[0] - b'0', bytes[2] - b'0').expect("single digits");
    let token = &rest[4..];
    let msg_type = MessageType::from_token(token)
        .ok_or_else(|| ParseFailure::invalid(format!("unknown message type {token:?}")))?;
    Ok((version, msg_type))
}

fn parse_variable(line: &str) -> Result<HeaderVariable, ParseFailure> {
    let (name, rest) = line
        .split_once(':')
        .ok_or_else(|| ParseFailure::invalid(format!("header line without colon {line:?}")))?;
    if !is_vname(name) {
        return Err(ParseFailure::invalid(format!("invalid header name {name:?}")));
    }
    if !rest.starts_with(' ') {
        return Err(ParseFailure::invalid(format!("no space after {name}:")));
    }
    HeaderVariable::new(name, rest.trim_start_matches(' '))
        .map_err(|e| ParseFailure::invalid(e.to_string()))
}

/// Parses one complete framed message.
pub fn parse_message(input: &[u8]) -> Result<Message, ParseFailure> {
    let end = header_end(input)
        .ok_or_else(|| ParseFailure::invalid("header section is not terminated by an empty line"))?;
    let header = std::str::from_utf8(&input[..end])
        .map_err(|_| ParseFailure::invalid("header is not valid UTF-8"))?;

    let mut lines = split_lines(header.as_bytes())
        .map(|l| std::str::from_utf8(l).expect("split of valid UTF-8 on ASCII boundaries"));
    let (version, msg_type) = parse_id_line(lines.next().unwrap_or_default())?;
    let headers = lines.map(parse_variable).collect::<Result<Vec<_>, _>>()?;

    let mut message = Message {
        version,
        msg_type,
        headers,
        body: None,
    };
    for name in [MSG_FROM, MSG_TO] {
        match message.header_count(name) {
            0 => return Err(ParseFailure::missing_header(name)),
            1 => {}
            n => return Err(ParseFailure::invalid(format!("{n} {name} headers"))),
        }
        let value = message.header(name).unwrap_or_default();
        validate_identifier(value).map_err(|e| ParseFailure::invalid(e.to_string()))?;
    }
    if message.header_count(CONTENT_LENGTH) > 1 {
        return Err(ParseFailure::invalid("more than one Content-Length header"));
    }

    let rest = &input[end..];
    let declared = message
        .header(CONTENT_LENGTH)
        .and_then(content_length_value)
        .unwrap_or(0);
    if rest.len() < declared {
        return Err(ParseFailure {
            code: ErrorCode::MISSING_CONTENT,
            reason: format!("body has {} of {declared} declared bytes", rest.len()),
            missing: None,
        });
    }
    if rest.len() > declared {
        return Err(ParseFailure::invalid(format!(
            "{} bytes after the declared end of message",
            rest.len() - declared
        )));
    }
    if declared > 0 {
        message.body = Some(rest.to_vec());
    }
    Ok(message)
}

/// Builds an ERROR message; `detail` becomes the body.
pub fn make_error(
    from: &NodeIdentifier,
    to: &NodeIdentifier,
    code: ErrorCode,
    detail: Option<&[u8]>,
) -> Message {
    let message = Message::new(MessageType::Error, from, to).with_header(ERROR_CODE, code.to_string());
    match detail {
        Some(d) => message.with_body(d),
        None => message,
    }
}

/// Reply to `request` addressed back to its sender.
pub fn reply_to(request: &Message, own: &NodeIdentifier, msg_type: MessageType) -> Message {
    Message::new(msg_type, own, &request.msg_from())
}

/// ERROR reply to `request` addressed back to its sender.
pub fn error_reply(request: &Message, own: &NodeIdentifier, code: ErrorCode, detail: impl AsRef<str>) -> Message {
    let detail = detail.as_ref();
    make_error(
        own,
        &request.msg_from(),
        code,
        (!detail.is_empty()).then_some(detail.as_bytes()),
    )
}

/// Parses a `Transaction-ID` value, distinguishing absent from malformed.
pub fn required_transaction_id(message: &Message) -> Result<TransactionId, (ErrorCode, String)> {
    let raw = message
        .transaction_id()
        .ok_or((ErrorCode::MISSING_HEADER, TRANSACTION_ID.to_string()))?;
    TransactionId::new(raw).map_err(|e| (ErrorCode::INVALID_MESSAGE, e.to_string()))
}
