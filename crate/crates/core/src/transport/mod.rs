//! Moving request/response pairs between DXQ-Nodes.
//!
//! The initiator of a communication sends one framed request and reads one
//! framed response; channels carry strictly sequential exchanges and may be
//! reused. Two bindings are provided: raw frames over TCP ([`TcpTransport`])
//! and a process-local network for deterministic tests ([`MemNetwork`]).

mod frame;
mod mem;
mod record;
mod tcp;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::protocol::{InvalidMessage, Message, NodeIdentifier};

pub use frame::{read_frame, read_message, serve_stream, split_frames, FrameError, MAX_BODY_BYTES, MAX_HEADER_BYTES};
pub use mem::{Fault, FaultRule, MemNetwork};
pub use record::{Direction, RecordingTransport, WireFrame, WireRecorder};
pub use tcp::TcpTransport;

/// Timeout used when the caller has no better figure.
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(10);

/// Answers requests arriving at a listening node. Must be safe to call from
/// many channels at once.
pub trait Handler: Send + Sync + 'static {
    fn handle(&self, request: Message) -> Message;
}

impl<F> Handler for F
where
    F: Fn(Message) -> Message + Send + Sync + 'static,
{
    fn handle(&self, request: Message) -> Message {
        self(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Connect,
    Timeout,
    Closed,
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("cannot connect to {target}: {reason}")]
    Connect { target: String, reason: String },
    #[error("no response from {target} within {timeout:?}")]
    Timeout { target: String, timeout: Duration },
    #[error("channel to {target} closed: {reason}")]
    Closed { target: String, reason: String },
    #[error("cannot listen on {endpoint}: {reason}")]
    Bind { endpoint: String, reason: String },
    #[error("refusing to send invalid message: {0}")]
    Invalid(#[from] InvalidMessage),
}

impl TransportError {
    /// Failure class as seen by a requester.
    pub fn kind(&self) -> FailureKind {
        match self {
            TransportError::Timeout { .. } => FailureKind::Timeout,
            TransportError::Closed { .. } => FailureKind::Closed,
            TransportError::Connect { .. } | TransportError::Bind { .. } | TransportError::Invalid(_) => {
                FailureKind::Connect
            }
        }
    }
}

/// A binding capable of sending requests and hosting listeners.
pub trait Transport: Send + Sync {
    /// Sends `message` to `target` and waits for its single response.
    fn request(&self, target: &NodeIdentifier, message: &Message, timeout: Duration) -> Result<Message, TransportError>;

    /// Serves `handler` on `endpoint`. `own` is used as `Msg-From` when the
    /// listener itself has to reject unparseable input.
    fn listen(&self, endpoint: &NodeIdentifier, own: &NodeIdentifier, handler: Arc<dyn Handler>) -> Result<ListenerHandle, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn request(&self, target: &NodeIdentifier, message: &Message, timeout: Duration) -> Result<Message, TransportError> {
        (**self).request(target, message, timeout)
    }

    fn listen(&self, endpoint: &NodeIdentifier, own: &NodeIdentifier, handler: Arc<dyn Handler>) -> Result<ListenerHandle, TransportError> {
        (**self).listen(endpoint, own, handler)
    }
}

/// Keeps a listener alive; dropping it stops accepting new channels.
pub struct ListenerHandle {
    endpoint: NodeIdentifier,
    local_addr: Option<std::net::SocketAddr>,
    stop: Option<Box<dyn FnOnce() + Send>>,
}

impl ListenerHandle {
    pub(crate) fn new(endpoint: NodeIdentifier, local_addr: Option<std::net::SocketAddr>, stop: Box<dyn FnOnce() + Send>) -> Self {
        Self {
            endpoint,
            local_addr,
            stop: Some(stop),
        }
    }

    pub fn endpoint(&self) -> &NodeIdentifier {
        &self.endpoint
    }

    /// Bound socket address for TCP listeners.
    pub fn local_addr(&self) -> Option<std::net::SocketAddr> {
        self.local_addr
    }

    pub fn close(mut self) {
        if let Some(stop) = self.stop.take() {
            stop();
        }
    }
}

impl Drop for ListenerHandle {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            stop();
        }
    }
}

impl fmt::Debug for ListenerHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ListenerHandle")
            .field("endpoint", &self.endpoint)
            .field("local_addr", &self.local_addr)
            .finish()
    }
}

/// Address parts of an identifier: `scheme://host[:port][/path]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub scheme: String,
    pub host: String,
    pub port: Option<u16>,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{identifier:?} is not a usable endpoint: {reason}")]
pub struct EndpointError {
    pub identifier: String,
    pub reason: &'static str,
}

impl Endpoint {
    pub const TCP_SCHEME: &'static str = "dxqp";

    pub fn parse(identifier: &NodeIdentifier) -> Result<Self, EndpointError> {
        let err = |reason| EndpointError {
            identifier: identifier.to_string(),
            reason,
        };
        let (scheme, rest) = identifier.as_str().split_once("://").ok_or_else(|| err("missing scheme"))?;
        let (authority, path) = match rest.find(['/', '?']) {
            Some(i) => (&rest[..i], &rest[i..]),
            None => (rest, ""),
        };
        let (host, port) = match authority.strip_prefix('[') {
            Some(bracketed) => {
                let (h, after) = bracketed.split_once(']').ok_or_else(|| err("unterminated '['"))?;
                (h, after.strip_prefix(':'))
            }
            None => match authority.rsplit_once(':') {
                Some((h, p)) => (h, Some(p)),
                None => (authority, None),
            },
        };
        let port = port
            .map(|p| p.parse::<u16>().map_err(|_| err("port is not a number in 0..=65535")))
            .transpose()?;
        if host.is_empty() {
            return Err(err("empty host"));
        }
        Ok(Self {
            scheme: scheme.to_string(),
            host: host.to_string(),
            port,
            path: path.to_string(),
        })
    }

    /// `host:port` for the TCP binding; the port must be given.
    pub fn socket_address(&self) -> Result<String, EndpointError> {
        let port = self.port.ok_or(EndpointError {
            identifier: self.to_string(),
            reason: "the TCP binding needs an explicit port",
        })?;
        if self.host.contains(':') {
            Ok(format!("[{}]:{port}", self.host))
        } else {
            Ok(format!("{}:{port}", self.host))
        }
    }

    pub fn to_identifier(&self) -> NodeIdentifier {
        NodeIdentifier::new(self.to_string()).expect("endpoint parts form a URL")
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}://", self.scheme)?;
        if self.host.contains(':') {
            write!(f, "[{}]", self.host)?;
        } else {
            f.write_str(&self.host)?;
        }
        if let Some(port) = self.port {
            write!(f, ":{port}")?;
        }
        f.write_str(&self.path)
    }
}
