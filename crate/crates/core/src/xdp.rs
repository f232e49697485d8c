//! XML-Document Provider: exports one document, answers queries and keeps
//! its session with an XQD.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, info, warn};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::node::{check_version, info_reply, parse_yes_no, query_body, requested_names};
use crate::protocol::{
    error_reply, reply_to, required_transaction_id, ErrorCode, Message, MessageType, NodeIdentifier, NodeName,
    CONTENT_LENGTH, NODE_NAME, REQUEST, TRANSACTION_ID,
};
use crate::query::{QueryProcessor, SubsetProcessor, XmlNode};
use crate::transport::{Handler, ListenerHandle, Transport, TransportError, DEFAULT_REQUEST_TIMEOUT};

pub const INFO_NAMES: [&str; 3] = ["Node-Name", "Admin", "Active-Queries"];

#[derive(Debug, Clone)]
pub struct XdpConfig {
    pub identifier: NodeIdentifier,
    pub name: NodeName,
    pub xqd: NodeIdentifier,
    pub document: XmlNode,
    pub admin: String,
    pub self_check_interval: Duration,
    pub request_timeout: Duration,
    pub backoff_initial: Duration,
    pub backoff_max: Duration,
    /// Send RMFROMDL before UNREGISTER when leaving.
    pub sign_off_before_unregister: bool,
}

impl XdpConfig {
    pub fn new(identifier: NodeIdentifier, name: NodeName, xqd: NodeIdentifier, document: XmlNode) -> Self {
        Self {
            identifier,
            name,
            xqd,
            document,
            admin: String::new(),
            self_check_interval: Duration::from_secs(30),
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            backoff_initial: Duration::from_secs(1),
            backoff_max: Duration::from_secs(60),
            sign_off_before_unregister: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SessionPhase {
    Unregistered,
    Registered,
    InDistributionList,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{step} refused with error {code}{}", detail_suffix(.detail))]
    Refused {
        step: MessageType,
        code: ErrorCode,
        detail: String,
    },
    #[error("unexpected {got} in reply to {step}")]
    UnexpectedReply { step: MessageType, got: MessageType },
    #[error("not registered")]
    NotRegistered,
    #[error(transparent)]
    Transport(#[from] TransportError),
}

fn detail_suffix(detail: &str) -> String {
    if detail.is_empty() {
        String::new()
    } else {
        format!(": {detail}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaveOutcome {
    Left,
    /// The XQD had already dropped the registration.
    AlreadyUnregistered,
}

#[derive(Debug)]
struct Schedule {
    /// The operator wants the node in the distribution list.
    wanted: bool,
    next_check: Duration,
    retry_at: Option<Duration>,
    backoff: Duration,
}

struct Inner {
    config: XdpConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    processor: Arc<dyn QueryProcessor>,
    phase: Mutex<SessionPhase>,
    session: Mutex<()>,
    schedule: Mutex<Schedule>,
    active: Mutex<Vec<(NodeIdentifier, String)>>,
}

/// Shared handle to one XDP. Clones refer to the same node.
#[derive(Clone)]
pub struct Xdp {
    inner: Arc<Inner>,
}

impl Xdp {
    pub fn new(config: XdpConfig, transport: Arc<dyn Transport>) -> Self {
        Self::with_parts(config, transport, Arc::new(SystemClock::new()), Arc::new(SubsetProcessor))
    }

    pub fn with_parts(
        config: XdpConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        processor: Arc<dyn QueryProcessor>,
    ) -> Self {
        let schedule = Schedule {
            wanted: false,
            next_check: clock.now() + config.self_check_interval,
            retry_at: None,
            backoff: config.backoff_initial,
        };
        Self {
            inner: Arc::new(Inner {
                config,
                transport,
                clock,
                processor,
                phase: Mutex::new(SessionPhase::Unregistered),
                session: Mutex::new(()),
                schedule: Mutex::new(schedule),
                active: Mutex::new(Vec::new()),
            }),
        }
    }

    pub fn config(&self) -> &XdpConfig {
        &self.inner.config
    }

    pub fn identifier(&self) -> &NodeIdentifier {
        &self.inner.config.identifier
    }

    pub fn phase(&self) -> SessionPhase {
        *self.inner.phase.lock().expect("phase lock")
    }

    fn set_phase(&self, phase: SessionPhase) {
        let mut current = self.inner.phase.lock().expect("phase lock");
        if *current != phase {
            info!("xdp {} session {:?} -> {:?}", self.identifier(), *current, phase);
        }
        *current = phase;
    }

    /// Starts serving on the node's own identifier.
    pub fn listen(&self) -> Result<ListenerHandle, TransportError> {
        let id = self.identifier().clone();
        self.inner.transport.listen(&id, &id, Arc::new(self.clone()))
    }

    // Message handling.

    pub fn handle_message(&self, request: Message) -> Message {
        let own = self.identifier();
        if let Err(reply) = check_version(&request, own) {
            return reply;
        }
        match request.msg_type {
            MessageType::XmlQuery => self.handle_query(&request),
            MessageType::InfoRequest => match requested_names(&request, &INFO_NAMES) {
                Ok(names) => info_reply(&request, own, &names, |name| self.info_value(&request, name)),
                Err((code, detail)) => error_reply(&request, own, code, detail),
            },
            other => error_reply(
                &request,
                own,
                ErrorCode::UNEXPECTED_MESSAGE,
                format!("{other} is not accepted by an XDP"),
            ),
        }
    }

    fn info_value(&self, request: &Message, name: &str) -> Option<String> {
        let config = &self.inner.config;
        match name {
            "Node-Name" => Some(config.name.to_string()),
            "Admin" => Some(config.admin.clone()),
            "Active-Queries" => {
                let asker = request.msg_from();
                let active = self.inner.active.lock().expect("active lock");
                let ids: Vec<&str> = active.iter().filter(|(who, _)| *who == asker).map(|(_, t)| t.as_str()).collect();
                Some(ids.join(" "))
            }
            _ => None,
        }
    }

    fn handle_query(&self, request: &Message) -> Message {
        let own = self.identifier();
        let txn = match required_transaction_id(request) {
            Ok(t) => t,
            Err((code, detail)) => return error_reply(request, own, code, detail),
        };
        let query = match query_body(request, "query") {
            Ok(q) => q,
            Err((code, detail)) => return error_reply(request, own, code, detail),
        };
        let entry = (request.msg_from(), txn.to_string());
        self.inner.active.lock().expect("active lock").push(entry.clone());
        let outcome = self.inner.processor.execute(query, &self.inner.config.document);
        {
            let mut active = self.inner.active.lock().expect("active lock");
            if let Some(i) = active.iter().position(|e| *e == entry) {
                active.remove(i);
            }
        }
        match outcome {
            Ok(result) => {
                debug!("xdp {own} answered transaction {txn} with {} bytes", result.len());
                let reply = reply_to(request, own, MessageType::XmlQueryResult)
                    .with_header(TRANSACTION_ID, txn.as_str())
                    .with_body(result);
                if reply.body().is_none() {
                    reply.with_header(CONTENT_LENGTH, "0")
                } else {
                    reply
                }
            }
            Err(e) => error_reply(request, own, ErrorCode::QUERY_PROCESSOR, e.to_string()),
        }
    }

    // Session management.

    fn send(&self, msg_type: MessageType) -> Result<Message, TransportError> {
        let config = &self.inner.config;
        let mut m = Message::new(msg_type, &config.identifier, &config.xqd);
        match msg_type {
            MessageType::Register => m = m.with_header(NODE_NAME, config.name.as_str()),
            MessageType::InfoRequest => m = m.with_header(REQUEST, "Registered Is-in-DL"),
            _ => {}
        }
        self.inner.transport.request(&config.xqd, &m, config.request_timeout)
    }

    /// Sends `msg_type` and expects OK.
    fn exchange(&self, msg_type: MessageType) -> Result<(), SessionError> {
        let reply = self.send(msg_type)?;
        match reply.msg_type {
            MessageType::Ok => Ok(()),
            MessageType::Error => Err(SessionError::Refused {
                step: msg_type,
                code: reply.error_code().unwrap_or(ErrorCode::INTERNAL),
                detail: reply.body_str().unwrap_or_default().to_string(),
            }),
            got => Err(SessionError::UnexpectedReply { step: msg_type, got }),
        }
    }

    /// Asks the XQD for `Registered` and `Is-in-DL` and adopts the answer.
    pub fn reconcile(&self) -> Result<SessionPhase, SessionError> {
        let reply = self.send(MessageType::InfoRequest)?;
        if reply.msg_type != MessageType::InfoReply {
            return Err(SessionError::UnexpectedReply {
                step: MessageType::InfoRequest,
                got: reply.msg_type,
            });
        }
        let registered = parse_yes_no(&reply, "Registered").unwrap_or(false);
        let in_dl = parse_yes_no(&reply, "Is-in-DL").unwrap_or(false);
        let phase = match (registered, in_dl) {
            (true, true) => SessionPhase::InDistributionList,
            (true, false) => SessionPhase::Registered,
            (false, _) => SessionPhase::Unregistered,
        };
        self.set_phase(phase);
        Ok(phase)
    }

    /// REGISTER then ADDTODL, starting from the current phase. A lost reply
    /// is resolved by asking the XQD; persistent transport failures schedule
    /// a retry with exponential backoff.
    pub fn join(&self) -> Result<SessionPhase, SessionError> {
        let _session = self.inner.session.lock().expect("session lock");
        self.inner.schedule.lock().expect("schedule lock").wanted = true;
        let outcome = self.join_locked();
        let now = self.inner.clock.now();
        let mut schedule = self.inner.schedule.lock().expect("schedule lock");
        match &outcome {
            Err(SessionError::Transport(e)) => {
                schedule.retry_at = Some(now + schedule.backoff);
                warn!("xdp {} join failed ({e}); retry in {:?}", self.identifier(), schedule.backoff);
                schedule.backoff = (schedule.backoff * 2).min(self.inner.config.backoff_max);
            }
            _ => {
                schedule.retry_at = None;
                schedule.backoff = self.inner.config.backoff_initial;
            }
        }
        outcome
    }

    fn join_locked(&self) -> Result<SessionPhase, SessionError> {
        let mut recoveries = 0;
        loop {
            let step = match self.phase() {
                SessionPhase::InDistributionList => return Ok(SessionPhase::InDistributionList),
                SessionPhase::Unregistered => MessageType::Register,
                SessionPhase::Registered => MessageType::AddToDl,
            };
            match self.exchange(step) {
                Ok(()) => self.set_phase(if step == MessageType::Register {
                    SessionPhase::Registered
                } else {
                    SessionPhase::InDistributionList
                }),
                Err(SessionError::Transport(e)) if recoveries < 2 => {
                    recoveries += 1;
                    debug!("xdp {} lost the {step} exchange ({e}); asking the XQD", self.identifier());
                    self.reconcile()?;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// RMFROMDL (when configured and listed) then UNREGISTER.
    pub fn leave(&self) -> Result<LeaveOutcome, SessionError> {
        let _session = self.inner.session.lock().expect("session lock");
        {
            let mut schedule = self.inner.schedule.lock().expect("schedule lock");
            schedule.wanted = false;
            schedule.retry_at = None;
        }
        if self.phase() == SessionPhase::Unregistered {
            return Err(SessionError::NotRegistered);
        }
        if self.phase() == SessionPhase::InDistributionList && self.inner.config.sign_off_before_unregister {
            match self.exchange(MessageType::RmFromDl) {
                Ok(()) => self.set_phase(SessionPhase::Registered),
                Err(SessionError::Refused { code, .. }) => {
                    warn!("xdp {} RMFROMDL refused with {code}", self.identifier());
                    if self.reconcile()? == SessionPhase::Unregistered {
                        return Ok(LeaveOutcome::AlreadyUnregistered);
                    }
                }
                Err(e) => return Err(e),
            }
        }
        match self.exchange(MessageType::Unregister) {
            Ok(()) => {
                self.set_phase(SessionPhase::Unregistered);
                Ok(LeaveOutcome::Left)
            }
            Err(SessionError::Refused { code, detail, .. }) => {
                warn!("xdp {} UNREGISTER refused with {code}", self.identifier());
                match self.reconcile()? {
                    SessionPhase::Unregistered => Ok(LeaveOutcome::AlreadyUnregistered),
                    _ => Err(SessionError::Refused {
                        step: MessageType::Unregister,
                        code,
                        detail,
                    }),
                }
            }
            Err(e) => Err(e),
        }
    }

    /// Verifies the session with the XQD and re-joins if the node was
    /// dropped while it still wants to serve.
    pub fn self_check(&self) -> Result<SessionPhase, SessionError> {
        let phase = {
            let _session = self.inner.session.lock().expect("session lock");
            self.reconcile()?
        };
        let wanted = self.inner.schedule.lock().expect("schedule lock").wanted;
        if wanted && phase != SessionPhase::InDistributionList {
            info!("xdp {} was dropped ({phase:?}); re-joining", self.identifier());
            return self.join();
        }
        Ok(phase)
    }

    /// Runs whatever periodic work is due: join retries and self-checks.
    pub fn tick(&self) {
        let now = self.inner.clock.now();
        let (retry, check) = {
            let mut s = self.inner.schedule.lock().expect("schedule lock");
            let retry = s.wanted && s.retry_at.is_some_and(|t| now >= t);
            let check = s.wanted && now >= s.next_check;
            if check {
                s.next_check = now + self.inner.config.self_check_interval;
            }
            (retry, check)
        };
        if retry {
            let _ = self.join();
        } else if check {
            if let Err(e) = self.self_check() {
                warn!("xdp {} self-check failed: {e}", self.identifier());
            }
        }
    }
}

impl Handler for Xdp {
    fn handle(&self, request: Message) -> Message {
        self.handle_message(request)
    }
}
