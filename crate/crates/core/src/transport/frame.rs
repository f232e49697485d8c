//! Splitting a byte stream into DXQP message frames.

use std::io::{self, BufRead, Read, Write};

use log::{debug, warn};
use thiserror::Error;

use crate::protocol::{
    declared_body_len, make_error, parse_message, validate_identifier, ErrorCode, Message,
    NodeIdentifier, MSG_FROM,
};

use super::Handler;

/// Largest accepted header section.
pub const MAX_HEADER_BYTES: usize = 64 * 1024;
/// Largest accepted body.
pub const MAX_BODY_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("stream ended inside a message after {0} bytes")]
    Truncated(usize),
    #[error("header section exceeds {MAX_HEADER_BYTES} bytes")]
    HeaderTooLarge,
    #[error("declared body of {0} bytes exceeds {MAX_BODY_BYTES} bytes")]
    BodyTooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FrameError {
    /// Code sent back before closing the channel, if any reply is possible.
    pub fn reply_code(&self) -> Option<ErrorCode> {
        match self {
            FrameError::HeaderTooLarge | FrameError::BodyTooLarge(_) => Some(ErrorCode::INTERNAL),
            FrameError::Truncated(_) | FrameError::Io(_) => None,
        }
    }
}

/// Reads exactly one message from `stream`: header lines up to the empty
/// line, then `Content-Length` body bytes when that header is a positive
/// integer. Never consumes bytes of the following message.
///
/// Returns `Ok(None)` on a clean end of stream before the first byte.
pub fn read_frame<R: BufRead>(stream: &mut R) -> Result<Option<Vec<u8>>, FrameError> {
    let mut frame = Vec::with_capacity(256);
    loop {
        let budget = (MAX_HEADER_BYTES - frame.len()) as u64;
        let n = stream.by_ref().take(budget).read_until(b'\n', &mut frame)?;
        if n == 0 {
            if frame.is_empty() {
                return Ok(None);
            }
            if frame.len() >= MAX_HEADER_BYTES {
                return Err(FrameError::HeaderTooLarge);
            }
            return Err(FrameError::Truncated(frame.len()));
        }
        if frame.ends_with(b"\r\n\r\n") || frame == b"\r\n" {
            break;
        }
        if frame.len() >= MAX_HEADER_BYTES {
            return Err(FrameError::HeaderTooLarge);
        }
    }
    let body_len = declared_body_len(&frame);
    if body_len > MAX_BODY_BYTES {
        return Err(FrameError::BodyTooLarge(body_len));
    }
    let start = frame.len();
    frame.resize(start + body_len, 0);
    if let Err(e) = stream.read_exact(&mut frame[start..]) {
        return Err(match e.kind() {
            io::ErrorKind::UnexpectedEof => FrameError::Truncated(start),
            _ => FrameError::Io(e),
        });
    }
    Ok(Some(frame))
}

/// Best-effort sender identity of bytes that failed to parse.
fn sender_of(raw: &[u8]) -> NodeIdentifier {
    let prefix = format!("{MSG_FROM}: ");
    let mut found = raw
        .split(|&b| b == b'\n')
        .map(|l| l.strip_suffix(b"\r").unwrap_or(l))
        .filter_map(|l| l.strip_prefix(prefix.as_bytes()))
        .filter_map(|v| std::str::from_utf8(v).ok());
    match (found.next(), found.next()) {
        (Some(v), None) if validate_identifier(v.trim_start_matches(' ')).is_ok() => {
            NodeIdentifier::new(v.trim_start_matches(' ')).unwrap_or_default()
        }
        _ => NodeIdentifier::empty(),
    }
}

/// Turns raw request bytes into the raw reply bytes, plus whether the
/// channel must be closed afterwards.
pub(crate) fn answer(raw: &[u8], own: &NodeIdentifier, handler: &dyn Handler) -> (Vec<u8>, bool) {
    match parse_message(raw) {
        Ok(request) => {
            let response = handler.handle(request);
            match response.to_bytes() {
                Ok(bytes) => (bytes, false),
                Err(e) => {
                    warn!("handler produced an invalid message: {e}");
                    let reply = make_error(own, &response.msg_to(), ErrorCode::INTERNAL, Some(e.to_string().as_bytes()));
                    (reply.to_bytes().expect("error reply is valid"), false)
                }
            }
        }
        Err(failure) => {
            debug!("rejecting unparseable message: {failure}");
            let reply = make_error(own, &sender_of(raw), failure.code, Some(failure.detail().as_bytes()));
            (reply.to_bytes().expect("error reply is valid"), true)
        }
    }
}

/// Serves one channel: reads requests, writes one response per request in
/// order, and returns when the peer closes or sends bytes that cannot be
/// framed or parsed (after replying with an ERROR).
pub fn serve_stream<R: BufRead, W: Write>(
    mut reader: R,
    mut writer: W,
    own: &NodeIdentifier,
    handler: &dyn Handler,
) -> io::Result<()> {
    loop {
        let raw = match read_frame(&mut reader) {
            Ok(Some(raw)) => raw,
            Ok(None) => return Ok(()),
            Err(e) => {
                if let Some(code) = e.reply_code() {
                    let reply = make_error(own, &NodeIdentifier::empty(), code, Some(e.to_string().as_bytes()));
                    writer.write_all(&reply.to_bytes().expect("error reply is valid"))?;
                    writer.flush()?;
                }
                return match e {
                    FrameError::Io(e) => Err(e),
                    _ => Ok(()),
                };
            }
        };
        let (reply, close) = answer(&raw, own, handler);
        writer.write_all(&reply)?;
        writer.flush()?;
        if close {
            return Ok(());
        }
    }
}

/// Parses all frames of a complete byte stream.
pub fn split_frames(bytes: &[u8]) -> Result<Vec<Vec<u8>>, FrameError> {
    let mut cursor = io::Cursor::new(bytes);
    let mut out = Vec::new();
    while let Some(frame) = read_frame(&mut cursor)? {
        out.push(frame);
    }
    Ok(out)
}

/// Convenience for tests and tools: frame then parse.
pub fn read_message<R: BufRead>(stream: &mut R) -> Result<Option<Message>, FrameError> {
    Ok(read_frame(stream)?.and_then(|raw| parse_message(&raw).ok()))
}
