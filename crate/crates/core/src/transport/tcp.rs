//! Raw DXQP frames over TCP. Identifiers name the port:
//! `dxqp://host:port/`.

use std::collections::HashMap;
use std::io::{self, BufReader, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};

use crate::protocol::{parse_message, Message, NodeIdentifier};

use super::frame::{read_frame, serve_stream, FrameError};
use super::{Endpoint, Handler, ListenerHandle, Transport, TransportError};

struct Channel {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// TCP binding. Open channels are cached per target and reused for later
/// requests; a channel carries one exchange at a time.
#[derive(Default)]
pub struct TcpTransport {
    idle: Mutex<HashMap<String, Vec<Channel>>>,
}

impl TcpTransport {
    pub fn new() -> Self {
        Self::default()
    }

    fn address(target: &NodeIdentifier) -> Result<String, TransportError> {
        let endpoint = Endpoint::parse(target).map_err(|e| TransportError::Connect {
            target: target.to_string(),
            reason: e.to_string(),
        })?;
        if endpoint.scheme != Endpoint::TCP_SCHEME {
            return Err(TransportError::Connect {
                target: target.to_string(),
                reason: format!("scheme {:?} is not served by the TCP binding", endpoint.scheme),
            });
        }
        endpoint.socket_address().map_err(|e| TransportError::Connect {
            target: target.to_string(),
            reason: e.to_string(),
        })
    }

    fn connect(address: &str, target: &NodeIdentifier, timeout: Duration) -> Result<Channel, TransportError> {
        let connect_err = |reason: String| TransportError::Connect {
            target: target.to_string(),
            reason,
        };
        let addrs = address.to_socket_addrs().map_err(|e| connect_err(e.to_string()))?;
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true).ok();
                    let writer = stream.try_clone().map_err(|e| connect_err(e.to_string()))?;
                    return Ok(Channel {
                        reader: BufReader::new(stream),
                        writer,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(connect_err(last.map_or_else(|| "no address".to_string(), |e| e.to_string())))
    }

    fn exchange(channel: &mut Channel, bytes: &[u8], target: &NodeIdentifier, timeout: Duration) -> Result<Message, TransportError> {
        let closed = |reason: String| TransportError::Closed {
            target: target.to_string(),
            reason,
        };
        let timed_out = || TransportError::Timeout {
            target: target.to_string(),
            timeout,
        };
        let io_err = |e: io::Error| match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => timed_out(),
            _ => closed(e.to_string()),
        };
        channel.writer.set_write_timeout(Some(timeout)).map_err(io_err)?;
        channel.reader.get_ref().set_read_timeout(Some(timeout)).map_err(io_err)?;
        channel.writer.write_all(bytes).map_err(io_err)?;
        channel.writer.flush().map_err(io_err)?;
        match read_frame(&mut channel.reader) {
            Ok(Some(raw)) => parse_message(&raw).map_err(|e| closed(format!("unparseable response: {e}"))),
            Ok(None) => Err(closed("peer closed the channel".into())),
            Err(FrameError::Io(e)) => Err(io_err(e)),
            Err(e) => Err(closed(e.to_string())),
        }
    }
}

impl Transport for TcpTransport {
    fn request(&self, target: &NodeIdentifier, message: &Message, timeout: Duration) -> Result<Message, TransportError> {
        let bytes = message.to_bytes()?;
        let address = Self::address(target)?;
        let cached = self.idle.lock().expect("pool lock").get_mut(&address).and_then(Vec::pop);
        let (mut channel, reused) = match cached {
            Some(channel) => (channel, true),
            None => (Self::connect(&address, target, timeout)?, false),
        };
        let result = match Self::exchange(&mut channel, &bytes, target, timeout) {
            // the peer may have dropped an idle cached channel; retry once fresh
            Err(TransportError::Closed { .. }) if reused => {
                channel = Self::connect(&address, target, timeout)?;
                Self::exchange(&mut channel, &bytes, target, timeout)
            }
            other => other,
        };
        if result.is_ok() {
            self.idle.lock().expect("pool lock").entry(address).or_default().push(channel);
        }
        result
    }

    fn listen(&self, endpoint: &NodeIdentifier, own: &NodeIdentifier, handler: Arc<dyn Handler>) -> Result<ListenerHandle, TransportError> {
        let bind_err = |reason: String| TransportError::Bind {
            endpoint: endpoint.to_string(),
            reason,
        };
        let parsed = Endpoint::parse(endpoint).map_err(|e| bind_err(e.to_string()))?;
        if parsed.scheme != Endpoint::TCP_SCHEME {
            return Err(bind_err(format!("scheme {:?} is not served by the TCP binding", parsed.scheme)));
        }
        let address = parsed.socket_address().map_err(|e| bind_err(e.to_string()))?;
        let listener = TcpListener::bind(&address).map_err(|e| bind_err(e.to_string()))?;
        let local = listener.local_addr().map_err(|e| bind_err(e.to_string()))?;
        let stopped = Arc::new(AtomicBool::new(false));
        let own = own.clone();

        let accept_stopped = Arc::clone(&stopped);
        thread::Builder::new()
            .name(format!("dxqp-accept-{local}"))
            .spawn(move || {
                for stream in listener.incoming() {
                    if accept_stopped.load(Ordering::SeqCst) {
                        break;
                    }
                    let stream = match stream {
                        Ok(s) => s,
                        Err(e) => {
                            warn!("accept on {local} failed: {e}");
                            continue;
                        }
                    };
                    let handler = Arc::clone(&handler);
                    let own = own.clone();
                    thread::spawn(move || {
                        let peer = stream.peer_addr().ok();
                        stream.set_nodelay(true).ok();
                        let Ok(writer) = stream.try_clone() else { return };
                        if let Err(e) = serve_stream(BufReader::new(stream), &writer, &own, handler.as_ref()) {
                            debug!("channel from {peer:?} ended: {e}");
                        }
                        writer.shutdown(Shutdown::Both).ok();
                    });
                }
            })
            .map_err(|e| bind_err(e.to_string()))?;

        let stop = Box::new(move || {
            stopped.store(true, Ordering::SeqCst);
            // wake the blocking accept
            let _ = TcpStream::connect_timeout(&local, Duration::from_millis(200));
        });
        Ok(ListenerHandle::new(endpoint.clone(), Some(local), stop))
    }
}
