//! DXQ-Client: sends queries to an XQD and runs the merge choreography.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::merge::MergeRequest;
use crate::protocol::{
    parse_result_sources, ErrorCode, Message, MessageType, NodeIdentifier, NodeName, TransactionId, DEPTH,
    MERGE_ALGORITHM, REQUEST, RESULT_SOURCES, TRANSACTION_ID,
};
use crate::transport::{Transport, TransportError, DEFAULT_REQUEST_TIMEOUT};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("error {code}{}", if .detail.is_empty() { String::new() } else { format!(": {}", .detail) })]
    Protocol {
        code: ErrorCode,
        detail: String,
        exchanged: Vec<Message>,
    },
    #[error("unexpected {got} in reply to {step}")]
    Unexpected { step: MessageType, got: MessageType },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Merged result of one client transaction.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub body: Vec<u8>,
    pub sources: Vec<NodeName>,
    /// Every message sent and received, in order.
    pub exchanged: Vec<Message>,
}

impl QueryOutcome {
    pub fn body_str(&self) -> &str {
        std::str::from_utf8(&self.body).unwrap_or_default()
    }
}

pub struct DxqClient {
    transport: Arc<dyn Transport>,
    xqd: NodeIdentifier,
    identifier: Mutex<NodeIdentifier>,
    timeout: Duration,
}

impl DxqClient {
    /// A client that starts without an identifier and adopts the one the
    /// XQD assigns.
    pub fn new(transport: Arc<dyn Transport>, xqd: NodeIdentifier) -> Self {
        Self {
            transport,
            xqd,
            identifier: Mutex::new(NodeIdentifier::empty()),
            timeout: DEFAULT_REQUEST_TIMEOUT,
        }
    }

    pub fn with_identifier(self, identifier: NodeIdentifier) -> Self {
        *self.identifier.lock().expect("identifier lock") = identifier;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn identifier(&self) -> NodeIdentifier {
        self.identifier.lock().expect("identifier lock").clone()
    }

    fn exchange(&self, m: Message, log: &mut Vec<Message>) -> Result<Message, ClientError> {
        let reply = self.transport.request(&self.xqd, &m, self.timeout)?;
        log.push(m);
        log.push(reply.clone());
        if reply.msg_type == MessageType::Error {
            return Err(ClientError::Protocol {
                code: reply.error_code().unwrap_or(ErrorCode::INTERNAL),
                detail: reply.body_str().unwrap_or_default().to_string(),
                exchanged: std::mem::take(log),
            });
        }
        Ok(reply)
    }

    fn adopt(&self, reply: &Message) {
        let mut id = self.identifier.lock().expect("identifier lock");
        if id.is_empty() {
            *id = reply.msg_to();
        }
    }

    /// Runs one transaction. `user-defined` takes two round trips: the
    /// query, then the merge query.
    pub fn query(&self, query: &str, merge: &MergeRequest, txn: &TransactionId) -> Result<QueryOutcome, ClientError> {
        let mut log = Vec::new();
        let mut m = Message::new(MessageType::XmlQuery, &self.identifier(), &self.xqd)
            .with_header(TRANSACTION_ID, txn.as_str())
            .with_header(MERGE_ALGORITHM, merge.algorithm().name());
        if let MergeRequest::RemoveDuplicates { depth } = merge {
            m = m.with_header(DEPTH, depth.to_string());
        }
        let reply = self.exchange(m.with_body(query), &mut log)?;

        let merged = match merge {
            MergeRequest::UserDefined { query: merge_query } => {
                if reply.msg_type != MessageType::Ok {
                    return Err(ClientError::Unexpected {
                        step: MessageType::XmlQuery,
                        got: reply.msg_type,
                    });
                }
                self.adopt(&reply);
                let m = Message::new(MessageType::MergeAlgorithm, &self.identifier(), &self.xqd)
                    .with_header(TRANSACTION_ID, txn.as_str())
                    .with_body(merge_query.as_str());
                self.exchange(m, &mut log)?
            }
            _ => reply,
        };
        if merged.msg_type != MessageType::XmlQueryMergedResult {
            return Err(ClientError::Unexpected {
                step: log[log.len() - 2].msg_type,
                got: merged.msg_type,
            });
        }
        self.adopt(&merged);
        let sources = merged
            .header(RESULT_SOURCES)
            .and_then(|s| parse_result_sources(s).ok())
            .unwrap_or_default();
        Ok(QueryOutcome {
            body: merged.body().unwrap_or_default().to_vec(),
            sources,
            exchanged: log,
        })
    }

    /// Sends INFO-REQUEST with the given `Request` value to any node.
    pub fn info(&self, target: &NodeIdentifier, request: &str) -> Result<Message, ClientError> {
        let m = Message::new(MessageType::InfoRequest, &self.identifier(), target).with_header(REQUEST, request);
        let reply = self.transport.request(target, &m, self.timeout)?;
        match reply.msg_type {
            MessageType::InfoReply => Ok(reply),
            MessageType::Error => Err(ClientError::Protocol {
                code: reply.error_code().unwrap_or(ErrorCode::INTERNAL),
                detail: reply.body_str().unwrap_or_default().to_string(),
                exchanged: vec![m, reply],
            }),
            got => Err(ClientError::Unexpected {
                step: MessageType::InfoRequest,
                got,
            }),
        }
    }
}
