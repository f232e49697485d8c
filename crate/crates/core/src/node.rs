//! Pieces shared by the XDP and XQD message handlers.

use crate::protocol::{
    error_reply, is_vname, parse_space_list, reply_to, ErrorCode, HeaderVariable, Message, MessageType,
    NodeIdentifier, Version, CONTENT_LENGTH, MSG_FROM, MSG_TO, REQUEST,
};

pub const YES: &str = "yes";
pub const NO: &str = "no";

pub(crate) fn yes_no(flag: bool) -> &'static str {
    if flag {
        YES
    } else {
        NO
    }
}

/// ERROR 101 for any version other than 1.0.
pub(crate) fn check_version(request: &Message, own: &NodeIdentifier) -> Result<(), Message> {
    if request.version == Version::V1_0 {
        return Ok(());
    }
    Err(error_reply(
        request,
        own,
        ErrorCode::UNEXPECTED_MESSAGE,
        format!("DXQP-{} is not supported", request.version),
    ))
}

/// The query carried in a body: 103 when absent, 200 when it is not text.
pub(crate) fn query_body<'m>(request: &'m Message, what: &str) -> Result<&'m str, (ErrorCode, String)> {
    let body = request
        .body()
        .ok_or_else(|| (ErrorCode::MISSING_CONTENT, format!("the {what} body is missing")))?;
    std::str::from_utf8(body).map_err(|_| (ErrorCode::QUERY_PROCESSOR, format!("the {what} is not UTF-8 text")))
}

/// Names asked for in an INFO-REQUEST; `*` expands to `supported`.
pub(crate) fn requested_names(request: &Message, supported: &[&str]) -> Result<Vec<String>, (ErrorCode, String)> {
    let raw = request
        .header(REQUEST)
        .ok_or((ErrorCode::MISSING_HEADER, REQUEST.to_string()))?;
    let names = parse_space_list(raw.trim_end());
    if names.iter().any(|n| n == "*") {
        return Ok(supported.iter().map(|s| s.to_string()).collect());
    }
    Ok(names
        .into_iter()
        .filter(|n| is_vname(n) && ![MSG_FROM, MSG_TO, CONTENT_LENGTH].contains(&n.as_str()))
        .collect())
}

/// INFO-REPLY answering `names` in request order. Unknown names get an
/// empty value.
pub(crate) fn info_reply(
    request: &Message,
    own: &NodeIdentifier,
    names: &[String],
    value_of: impl Fn(&str) -> Option<String>,
) -> Message {
    let mut reply = reply_to(request, own, MessageType::InfoReply);
    for name in names {
        if reply.header(name).is_some() {
            continue;
        }
        let value = value_of(name).unwrap_or_default();
        let header = HeaderVariable::new(name.as_str(), value)
            .or_else(|_| HeaderVariable::new(name.as_str(), ""))
            .expect("names were filtered to VNAMEs");
        reply.push_header(header);
    }
    reply
}

/// Reads a `yes`/`no` INFO value.
pub(crate) fn parse_yes_no(reply: &Message, name: &str) -> Option<bool> {
    match reply.header(name)? {
        YES => Some(true),
        NO => Some(false),
        _ => None,
    }
}
