//! Capturing the frames a transport sends and receives.

use std::io::{self, Write};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::protocol::{Message, NodeIdentifier};

use super::{Handler, ListenerHandle, Transport, TransportError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Request,
    Response,
}

/// One frame as it crossed the wire, in the order it was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireFrame {
    /// Index of the exchange this frame belongs to.
    pub exchange: usize,
    pub direction: Direction,
    pub target: NodeIdentifier,
    pub bytes: Vec<u8>,
}

impl WireFrame {
    pub fn message(&self) -> Message {
        Message::parse(&self.bytes).expect("recorded frames were valid when sent")
    }
}

/// Shared log of frames.
#[derive(Debug, Default)]
pub struct WireRecorder {
    frames: Mutex<Vec<WireFrame>>,
    exchanges: Mutex<usize>,
}

impl WireRecorder {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    fn begin(&self, target: &NodeIdentifier, bytes: Vec<u8>) -> usize {
        let exchange = {
            let mut n = self.exchanges.lock().expect("recorder lock");
            *n += 1;
            *n - 1
        };
        self.push(exchange, Direction::Request, target, bytes);
        exchange
    }

    fn push(&self, exchange: usize, direction: Direction, target: &NodeIdentifier, bytes: Vec<u8>) {
        self.frames.lock().expect("recorder lock").push(WireFrame {
            exchange,
            direction,
            target: target.clone(),
            bytes,
        });
    }

    /// Records one complete exchange seen from the serving side.
    pub fn record_exchange(&self, peer: &NodeIdentifier, request: Vec<u8>, response: Vec<u8>) {
        let exchange = self.begin(peer, request);
        self.push(exchange, Direction::Response, peer, response);
    }

    pub fn frames(&self) -> Vec<WireFrame> {
        self.frames.lock().expect("recorder lock").clone()
    }

    pub fn clear(&self) {
        self.frames.lock().expect("recorder lock").clear();
    }

    /// Writes every recorded frame back to back, as raw wire bytes.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for frame in self.frames.lock().expect("recorder lock").iter() {
            out.write_all(&frame.bytes)?;
        }
        out.flush()
    }
}

/// Wraps a transport and records each outgoing request and the response
/// that came back.
pub struct RecordingTransport<T> {
    inner: T,
    recorder: Arc<WireRecorder>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, recorder: Arc<WireRecorder>) -> Self {
        Self { inner, recorder }
    }

    pub fn recorder(&self) -> &Arc<WireRecorder> {
        &self.recorder
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn request(&self, target: &NodeIdentifier, message: &Message, timeout: Duration) -> Result<Message, TransportError> {
        let exchange = self.recorder.begin(target, message.to_bytes()?);
        let response = self.inner.request(target, message, timeout)?;
        self.recorder.push(
            exchange,
            Direction::Response,
            target,
            response.to_bytes().expect("parsed responses re-serialize"),
        );
        Ok(response)
    }

    fn listen(&self, endpoint: &NodeIdentifier, own: &NodeIdentifier, handler: Arc<dyn Handler>) -> Result<ListenerHandle, TransportError> {
        self.inner.listen(endpoint, own, handler)
    }
}
