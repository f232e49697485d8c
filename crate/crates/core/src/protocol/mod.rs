//! DXQP-1.0 wire format: message grammar, header value types and the
//! error-code table.
//!
//! Every message is an ID-LINE (`DXQP-1.0 <TYPE>`), a run of
//! `Name: value` header lines, an empty line, and a body of exactly
//! `Content-Length` bytes when that header holds a positive integer. All
//! line terminators are CRLF.

mod lists;
mod message;
mod types;

pub use lists::{
    format_result_sources, format_xdp_spec_list, parse_result_sources, parse_space_list,
    parse_xdp_spec_list, ListError,
};
pub use message::{
    content_length_value, error_reply, make_error, parse_message, reply_to,
    required_transaction_id, serialize_message, InvalidMessage, Message, ParseFailure,
    CONTENT_LENGTH, CRLF, DEPTH, ERROR_CODE, MERGE_ALGORITHM, MSG_FROM, MSG_TO, NODE_NAME,
    REQUEST, RESULT_SOURCES, TRANSACTION_ID,
};
pub(crate) use message::declared_body_len;
pub use types::{
    is_vname, validate_identifier, ErrorCode, HeaderVariable, InvalidValue, MergeAlgorithmName,
    MessageType, NodeIdentifier, NodeName, TransactionId, Version,
};
