//! Process-local network. Every exchange still goes through the wire codec
//! in both directions, so nodes behave as they would over TCP.

use std::collections::HashMap;
use std::sync::mpsc;
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::Duration;

use crate::protocol::{make_error, parse_message, ErrorCode, Message, MessageType, NodeIdentifier};

use super::frame::answer;
use super::{Handler, ListenerHandle, Transport, TransportError};

/// Misbehaviour injected in front of a listener.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Connection refused.
    Unreachable,
    /// The request is swallowed; the requester times out at once, as if its
    /// full timeout had elapsed.
    Silent,
    /// The listener answers ERROR with this code without consulting the node.
    ErrorReply(ErrorCode),
    /// The node handles the request but the response is lost.
    DropResponse,
    /// Handling starts after this delay; a delay at or beyond the request
    /// timeout produces a real timeout.
    Delay(Duration),
}

/// A fault applied to requests for one target, optionally only for one
/// message type and only a limited number of times.
#[derive(Debug, Clone)]
pub struct FaultRule {
    pub fault: Fault,
    pub only: Option<MessageType>,
    pub remaining: Option<u32>,
}

impl FaultRule {
    pub fn always(fault: Fault) -> Self {
        Self {
            fault,
            only: None,
            remaining: None,
        }
    }

    pub fn on(mut self, msg_type: MessageType) -> Self {
        self.only = Some(msg_type);
        self
    }

    pub fn times(mut self, n: u32) -> Self {
        self.remaining = Some(n);
        self
    }
}

struct Node {
    own: NodeIdentifier,
    handler: Arc<dyn Handler>,
}

#[derive(Default)]
struct Inner {
    nodes: RwLock<HashMap<String, Node>>,
    faults: Mutex<HashMap<String, Vec<FaultRule>>>,
}

/// In-memory binding keyed by identifier. Cloning shares the network.
#[derive(Clone, Default)]
pub struct MemNetwork {
    inner: Arc<Inner>,
}

impl MemNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inject(&self, target: &NodeIdentifier, rule: FaultRule) {
        self.inner
            .faults
            .lock()
            .expect("fault lock")
            .entry(target.to_string())
            .or_default()
            .push(rule);
    }

    pub fn clear_faults(&self, target: &NodeIdentifier) {
        self.inner.faults.lock().expect("fault lock").remove(target.as_str());
    }

    pub fn is_listening(&self, target: &NodeIdentifier) -> bool {
        self.inner.nodes.read().expect("node lock").contains_key(target.as_str())
    }

    fn take_fault(&self, target: &NodeIdentifier, msg_type: MessageType) -> Option<Fault> {
        let mut faults = self.inner.faults.lock().expect("fault lock");
        let rules = faults.get_mut(target.as_str())?;
        let idx = rules.iter().position(|r| r.only.is_none_or(|t| t == msg_type))?;
        let fault = rules[idx].fault.clone();
        if let Some(n) = rules[idx].remaining.as_mut() {
            *n -= 1;
            if *n == 0 {
                rules.remove(idx);
            }
        }
        Some(fault)
    }

    /// Delivers raw bytes to a listener as one frame and returns the raw
    /// reply, exactly as a TCP peer would see it.
    pub fn deliver_raw(&self, target: &NodeIdentifier, raw: &[u8]) -> Result<Vec<u8>, TransportError> {
        let (own, handler) = self.lookup(target)?;
        Ok(answer(raw, &own, handler.as_ref()).0)
    }

    fn lookup(&self, target: &NodeIdentifier) -> Result<(NodeIdentifier, Arc<dyn Handler>), TransportError> {
        let nodes = self.inner.nodes.read().expect("node lock");
        let node = nodes.get(target.as_str()).ok_or_else(|| TransportError::Connect {
            target: target.to_string(),
            reason: "no listener".into(),
        })?;
        Ok((node.own.clone(), Arc::clone(&node.handler)))
    }
}

impl Transport for MemNetwork {
    fn request(&self, target: &NodeIdentifier, message: &Message, timeout: Duration) -> Result<Message, TransportError> {
        let bytes = message.to_bytes()?;
        let (own, handler) = self.lookup(target)?;
        let timed_out = || TransportError::Timeout {
            target: target.to_string(),
            timeout,
        };

        let mut delay = Duration::ZERO;
        let mut drop_response = false;
        match self.take_fault(target, message.msg_type) {
            None => {}
            Some(Fault::Unreachable) => {
                return Err(TransportError::Connect {
                    target: target.to_string(),
                    reason: "connection refused (injected)".into(),
                })
            }
            Some(Fault::Silent) => return Err(timed_out()),
            Some(Fault::ErrorReply(code)) => {
                let reply = make_error(&own, &message.msg_from(), code, None);
                return Ok(parse_message(&reply.to_bytes()?).expect("error reply parses"));
            }
            Some(Fault::DropResponse) => drop_response = true,
            Some(Fault::Delay(d)) => delay = d,
        }
        if delay >= timeout {
            thread::sleep(timeout);
            return Err(timed_out());
        }

        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            let (reply, _close) = answer(&bytes, &own, handler.as_ref());
            let _ = tx.send(reply);
        });
        let reply = rx.recv_timeout(timeout.saturating_sub(delay)).map_err(|_| timed_out())?;
        if drop_response {
            return Err(timed_out());
        }
        parse_message(&reply).map_err(|e| TransportError::Closed {
            target: target.to_string(),
            reason: format!("unparseable response: {e}"),
        })
    }

    fn listen(&self, endpoint: &NodeIdentifier, own: &NodeIdentifier, handler: Arc<dyn Handler>) -> Result<ListenerHandle, TransportError> {
        let mut nodes = self.inner.nodes.write().expect("node lock");
        if nodes.contains_key(endpoint.as_str()) {
            return Err(TransportError::Bind {
                endpoint: endpoint.to_string(),
                reason: "endpoint in use".into(),
            });
        }
        nodes.insert(
            endpoint.to_string(),
            Node {
                own: own.clone(),
                handler,
            },
        );
        let network = self.clone();
        let key = endpoint.to_string();
        let stop = Box::new(move || {
            network.inner.nodes.write().expect("node lock").remove(&key);
        });
        Ok(ListenerHandle::new(endpoint.clone(), None, stop))
    }
}
