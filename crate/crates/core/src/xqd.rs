//! XML-Query Distributor: keeps the XDP registry and distribution list,
//! fans client queries out and merges what comes back.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use indexmap::IndexMap;
use log::{debug, info, warn};

use crate::clock::{Clock, SystemClock};
use crate::merge::{list_algorithms, merge, Algorithm, MergeRequest, XdpResult};
use crate::node::{check_version, info_reply, query_body, requested_names, yes_no};
use crate::protocol::{
    error_reply, format_result_sources, format_xdp_spec_list, make_error, reply_to, required_transaction_id,
    ErrorCode, Message, MessageType, NodeIdentifier, NodeName, TransactionId, CONTENT_LENGTH, DEPTH,
    MERGE_ALGORITHM, NODE_NAME, REQUEST, RESULT_SOURCES, TRANSACTION_ID,
};
use crate::query::{QueryProcessor, SubsetProcessor};
use crate::transport::{Handler, ListenerHandle, Transport, TransportError, DEFAULT_REQUEST_TIMEOUT};

pub const INFO_NAMES: [&str; 8] = [
    "Node-Name",
    "Admin",
    "Registered",
    "Is-in-DL",
    "Merge-Algorithms",
    "Registered-XDPs",
    "Active-XDPs",
    "Active-Queries",
];

#[derive(Debug, Clone)]
pub struct XqdConfig {
    pub identifier: NodeIdentifier,
    pub name: NodeName,
    pub admin: String,
    pub ping_interval: Duration,
    pub ping_timeout: Duration,
    /// Per-XDP timeout for fanned-out queries.
    pub query_timeout: Duration,
    /// Misses after DL removal before the XDP is unregistered.
    pub max_missed: u32,
    /// How long a user-defined transaction waits for its MERGE-ALGORITHM.
    pub merge_wait: Duration,
    /// Fixed start for client identifier generation; random when absent.
    pub identifier_seed: Option<u32>,
}

impl XqdConfig {
    pub fn new(identifier: NodeIdentifier, name: NodeName) -> Self {
        Self {
            identifier,
            name,
            admin: String::new(),
            ping_interval: Duration::from_secs(15),
            ping_timeout: Duration::from_secs(5),
            query_timeout: DEFAULT_REQUEST_TIMEOUT,
            max_missed: 3,
            merge_wait: Duration::from_secs(120),
            identifier_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XdpRecord {
    pub identifier: NodeIdentifier,
    pub name: NodeName,
    pub registered_at: Duration,
    pub in_distribution_list: bool,
    pub missed_pings: u32,
}

#[derive(Debug, Default)]
struct Registry {
    records: IndexMap<NodeIdentifier, XdpRecord>,
    /// Distribution list in ADDTODL order.
    dl: Vec<NodeIdentifier>,
}

impl Registry {
    fn remove_from_dl(&mut self, id: &NodeIdentifier) -> bool {
        let before = self.dl.len();
        self.dl.retain(|d| d != id);
        if let Some(r) = self.records.get_mut(id) {
            r.in_distribution_list = false;
        }
        before != self.dl.len()
    }

    fn spec_list<'a>(&'a self, ids: impl Iterator<Item = &'a NodeIdentifier>) -> String {
        let entries: Vec<(Option<NodeIdentifier>, NodeName)> = ids
            .filter_map(|id| self.records.get(id))
            .map(|r| (Some(r.identifier.clone()), r.name.clone()))
            .collect();
        format_xdp_spec_list(&entries)
    }
}

/// Why one XDP contributed nothing to a transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FanoutFailure {
    pub xdp: NodeName,
    /// The XDP's error code, or `None` for a transport failure.
    pub code: Option<ErrorCode>,
    pub reason: String,
}

impl fmt::Display for FanoutFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.code {
            Some(code) => write!(f, "{}: error {code}", self.xdp)?,
            None => write!(f, "{}: no reply", self.xdp)?,
        }
        if !self.reason.is_empty() {
            write!(f, " ({})", self.reason)?;
        }
        Ok(())
    }
}

/// Everything one fan-out produced, in distribution-list order.
#[derive(Debug, Clone, Default)]
pub struct FanoutOutcome {
    pub sub_txns: Vec<(TransactionId, NodeIdentifier, NodeName)>,
    pub collected: Vec<XdpResult>,
    pub failures: Vec<FanoutFailure>,
}

impl FanoutOutcome {
    fn failure_summary(&self) -> String {
        let lines: Vec<String> = self.failures.iter().map(|f| f.to_string()).collect();
        format!("all XDPs failed: {}", lines.join("; "))
    }
}

/// A user-defined transaction waiting for its merge query.
struct Pending {
    created: Duration,
    outcome: Mutex<Option<FanoutOutcome>>,
    ready: Condvar,
}

/// Outcome of one connectivity sweep.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub pinged: usize,
    pub removed_from_dl: Vec<XdpRecord>,
    pub unregistered: Vec<XdpRecord>,
}

struct IdGenerator {
    state: u32,
    issued: HashSet<NodeIdentifier>,
}

impl IdGenerator {
    /// Full-period LCG, so values repeat only after 2^32 draws.
    fn step(x: u32) -> u32 {
        x.wrapping_mul(1_664_525).wrapping_add(1_013_904_223)
    }

    fn next(&mut self) -> NodeIdentifier {
        loop {
            let value = self.state;
            self.state = Self::step(value);
            let id = NodeIdentifier::new(format!("http://{value:08x}")).expect("generated identifiers are URLs");
            if self.issued.insert(id.clone()) {
                return id;
            }
        }
    }
}

type TxnKey = (NodeIdentifier, String);

struct Inner {
    config: XqdConfig,
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    processor: Arc<dyn QueryProcessor>,
    registry: Mutex<Registry>,
    pending: Mutex<HashMap<TxnKey, Arc<Pending>>>,
    in_flight: Mutex<Vec<TxnKey>>,
    next_sub_txn: AtomicU64,
    ids: Mutex<IdGenerator>,
    next_sweep: Mutex<Duration>,
}

/// Shared handle to one XQD. Clones refer to the same node.
#[derive(Clone)]
pub struct Xqd {
    inner: Arc<Inner>,
}

impl Xqd {
    pub fn new(config: XqdConfig, transport: Arc<dyn Transport>) -> Self {
        Self::with_parts(config, transport, Arc::new(SystemClock::new()), Arc::new(SubsetProcessor))
    }

    pub fn with_parts(
        config: XqdConfig,
        transport: Arc<dyn Transport>,
        clock: Arc<dyn Clock>,
        processor: Arc<dyn QueryProcessor>,
    ) -> Self {
        let seed = config.identifier_seed.unwrap_or_else(rand::random);
        let next_sweep = clock.now() + config.ping_interval;
        Self {
            inner: Arc::new(Inner {
                config,
                transport,
                clock,
                processor,
                registry: Mutex::new(Registry::default()),
                pending: Mutex::new(HashMap::new()),
                in_flight: Mutex::new(Vec::new()),
                next_sub_txn: AtomicU64::new(0),
                ids: Mutex::new(IdGenerator {
                    state: seed,
                    issued: HashSet::new(),
                }),
                next_sweep: Mutex::new(next_sweep),
            }),
        }
    }

    pub fn config(&self) -> &XqdConfig {
        &self.inner.config
    }

    pub fn identifier(&self) -> &NodeIdentifier {
        &self.inner.config.identifier
    }

    pub fn listen(&self) -> Result<ListenerHandle, TransportError> {
        let id = self.identifier().clone();
        self.inner.transport.listen(&id, &id, Arc::new(self.clone()))
    }

    /// Registered XDPs in registration order.
    pub fn records(&self) -> Vec<XdpRecord> {
        self.inner.registry.lock().expect("registry lock").records.values().cloned().collect()
    }

    pub fn record(&self, id: &NodeIdentifier) -> Option<XdpRecord> {
        self.inner.registry.lock().expect("registry lock").records.get(id).cloned()
    }

    /// Distribution list in ADDTODL order.
    pub fn distribution_list(&self) -> Vec<NodeIdentifier> {
        self.inner.registry.lock().expect("registry lock").dl.clone()
    }

    /// Next identifier for a client that has none.
    pub fn assign_client_identifier(&self) -> NodeIdentifier {
        self.inner.ids.lock().expect("id lock").next()
    }

    /// Number of user-defined transactions waiting for a merge query.
    pub fn pending_transactions(&self) -> usize {
        self.inner.pending.lock().expect("pending lock").len()
    }

    /// Sends INFO-REQUEST for `names` to another node.
    pub fn inquire(&self, target: &NodeIdentifier, names: &[&str]) -> Result<Message, TransportError> {
        let request =
            Message::new(MessageType::InfoRequest, self.identifier(), target).with_header(REQUEST, names.join(" "));
        self.inner.transport.request(target, &request, self.inner.config.ping_timeout)
    }

    pub fn handle_message(&self, request: Message) -> Message {
        let own = self.identifier();
        if let Err(reply) = check_version(&request, own) {
            return reply;
        }
        match request.msg_type {
            MessageType::Register
            | MessageType::Unregister
            | MessageType::AddToDl
            | MessageType::RmFromDl
            | MessageType::InfoRequest => self.handle_control(&request),
            MessageType::XmlQuery => self.handle_query(&request),
            MessageType::MergeAlgorithm => self.handle_merge_algorithm(&request),
            other => error_reply(
                &request,
                own,
                ErrorCode::UNEXPECTED_MESSAGE,
                format!("{other} is not accepted by an XQD"),
            ),
        }
    }

    // Registry and distribution list.

    pub fn handle_control(&self, request: &Message) -> Message {
        let own = self.identifier();
        let sender = request.msg_from();
        let ok = || reply_to(request, own, MessageType::Ok);
        let fail = |code, detail: &str| error_reply(request, own, code, detail);
        if request.msg_type == MessageType::InfoRequest {
            return match requested_names(request, &INFO_NAMES) {
                Ok(names) => info_reply(request, own, &names, |n| self.info_value(&sender, n)),
                Err((code, detail)) => fail(code, &detail),
            };
        }
        if sender.is_empty() {
            return fail(ErrorCode::INVALID_MESSAGE, "an XDP must send its own Identifier");
        }
        let mut registry = self.inner.registry.lock().expect("registry lock");
        match request.msg_type {
            MessageType::Register => {
                let Some(raw) = request.header(NODE_NAME) else {
                    return fail(ErrorCode::MISSING_HEADER, NODE_NAME);
                };
                let name = match NodeName::new(raw) {
                    Ok(n) => n,
                    Err(e) => return fail(ErrorCode::INVALID_MESSAGE, &e.to_string()),
                };
                let now = self.inner.clock.now();
                let entry = registry.records.entry(sender.clone()).or_insert_with(|| XdpRecord {
                    identifier: sender.clone(),
                    name: name.clone(),
                    registered_at: now,
                    in_distribution_list: false,
                    missed_pings: 0,
                });
                entry.name = name;
                entry.missed_pings = 0;
                info!("xqd registered {} {{{}}}", sender, entry.name);
                ok()
            }
            MessageType::Unregister => {
                if registry.records.shift_remove(&sender).is_none() {
                    return fail(ErrorCode::UNEXPECTED_MESSAGE, "not registered");
                }
                registry.dl.retain(|d| *d != sender);
                info!("xqd unregistered {sender}");
                ok()
            }
            MessageType::AddToDl => {
                let Some(record) = registry.records.get_mut(&sender) else {
                    return fail(ErrorCode::UNEXPECTED_MESSAGE, "ADDTODL requires a registration");
                };
                record.in_distribution_list = true;
                record.missed_pings = 0;
                if !registry.dl.contains(&sender) {
                    registry.dl.push(sender.clone());
                }
                info!("xqd added {sender} to the distribution list");
                ok()
            }
            MessageType::RmFromDl => {
                if !registry.records.contains_key(&sender) {
                    return fail(ErrorCode::UNEXPECTED_MESSAGE, "RMFROMDL requires a registration");
                }
                registry.remove_from_dl(&sender);
                info!("xqd removed {sender} from the distribution list");
                ok()
            }
            _ => unreachable!("control dispatch covers only control messages"),
        }
    }

    fn info_value(&self, asker: &NodeIdentifier, name: &str) -> Option<String> {
        let config = &self.inner.config;
        let registry = || self.inner.registry.lock().expect("registry lock");
        Some(match name {
            "Node-Name" => config.name.to_string(),
            "Admin" => config.admin.clone(),
            "Registered" => yes_no(registry().records.contains_key(asker)).into(),
            "Is-in-DL" => yes_no(registry().dl.contains(asker)).into(),
            "Merge-Algorithms" => list_algorithms().iter().map(|a| a.as_str()).collect::<Vec<_>>().join(" "),
            "Registered-XDPs" => {
                let r = registry();
                r.spec_list(r.records.keys())
            }
            "Active-XDPs" => {
                let r = registry();
                r.spec_list(r.dl.iter())
            }
            "Active-Queries" => {
                let mut ids: Vec<String> = self
                    .inner
                    .pending
                    .lock()
                    .expect("pending lock")
                    .keys()
                    .filter(|(who, _)| who == asker)
                    .map(|(_, t)| t.clone())
                    .collect();
                ids.extend(
                    self.inner
                        .in_flight
                        .lock()
                        .expect("in-flight lock")
                        .iter()
                        .filter(|(who, _)| who == asker)
                        .map(|(_, t)| t.clone()),
                );
                ids.sort();
                ids.dedup();
                ids.join(" ")
            }
            _ => return None,
        })
    }

    // Queries.

    /// Client identity for a reply: the sender's, or a fresh one when the
    /// sender has none yet.
    fn client_identity(&self, request: &Message) -> NodeIdentifier {
        let from = request.msg_from();
        if from.is_empty() {
            let id = self.assign_client_identifier();
            info!("xqd assigned {id} to a new client");
            id
        } else {
            from
        }
    }

    pub fn handle_query(&self, request: &Message) -> Message {
        let own = self.identifier();
        let fail = |code, detail: &str| error_reply(request, own, code, detail);
        let txn = match required_transaction_id(request) {
            Ok(t) => t,
            Err((code, detail)) => return fail(code, &detail),
        };
        let Some(raw_algorithm) = request.header(MERGE_ALGORITHM) else {
            return fail(ErrorCode::MISSING_HEADER, MERGE_ALGORITHM);
        };
        let Some(algorithm) = Algorithm::from_name(raw_algorithm) else {
            return fail(
                ErrorCode::UNSUPPORTED_MERGE_ALGORITHM,
                &format!("unsupported merge algorithm {raw_algorithm:?}"),
            );
        };
        let depth = if algorithm == Algorithm::RemoveDuplicates {
            match request.header(DEPTH).map(|d| d.parse::<u32>()) {
                None => return fail(ErrorCode::MISSING_HEADER, DEPTH),
                Some(Err(_)) => return fail(ErrorCode::INVALID_MESSAGE, "Depth must be a non-negative integer"),
                Some(Ok(d)) => Some(d),
            }
        } else {
            None
        };
        let query = match query_body(request, "query") {
            Ok(q) => q.to_owned(),
            Err((code, detail)) => return fail(code, &detail),
        };
        let dl = self.distribution_list();
        if dl.is_empty() {
            return fail(ErrorCode::NO_PROVIDERS, "");
        }

        let client = self.client_identity(request);
        let key = (client.clone(), txn.to_string());
        if algorithm == Algorithm::UserDefined {
            let pending = Arc::new(Pending {
                created: self.inner.clock.now(),
                outcome: Mutex::new(None),
                ready: Condvar::new(),
            });
            {
                let mut table = self.inner.pending.lock().expect("pending lock");
                if table.contains_key(&key) {
                    return fail(ErrorCode::UNEXPECTED_MESSAGE, "transaction already in progress");
                }
                table.insert(key, Arc::clone(&pending));
            }
            let subs = self.allocate(&dl);
            let this = self.clone();
            thread::spawn(move || {
                let outcome = this.fanout(subs, &query);
                *pending.outcome.lock().expect("pending lock") = Some(outcome);
                pending.ready.notify_all();
            });
            return Message::new(MessageType::Ok, own, &client).with_header(TRANSACTION_ID, txn.as_str());
        }

        {
            let mut in_flight = self.inner.in_flight.lock().expect("in-flight lock");
            if in_flight.contains(&key) {
                return fail(ErrorCode::UNEXPECTED_MESSAGE, "transaction already in progress");
            }
            in_flight.push(key.clone());
        }
        let outcome = self.fanout(self.allocate(&dl), &query);
        let request_kind = match depth {
            Some(depth) => MergeRequest::RemoveDuplicates { depth },
            None => MergeRequest::Concatenate,
        };
        let reply = self.merged_reply(&client, &txn, &request_kind, &outcome);
        self.inner.in_flight.lock().expect("in-flight lock").retain(|k| *k != key);
        reply
    }

    pub fn handle_merge_algorithm(&self, request: &Message) -> Message {
        let own = self.identifier();
        let fail = |code, detail: &str| error_reply(request, own, code, detail);
        let txn = match required_transaction_id(request) {
            Ok(t) => t,
            Err((code, detail)) => return fail(code, &detail),
        };
        let client = request.msg_from();
        let key = (client.clone(), txn.to_string());
        self.expire_pending();
        let Some(pending) = self.inner.pending.lock().expect("pending lock").get(&key).cloned() else {
            return fail(ErrorCode::UNEXPECTED_MESSAGE, "no transaction awaits a merge query");
        };
        let query = match query_body(request, "merge query") {
            Ok(q) => q.to_owned(),
            Err((code, detail)) => return fail(code, &detail),
        };
        self.inner.pending.lock().expect("pending lock").remove(&key);

        let outcome = {
            let mut slot = pending.outcome.lock().expect("pending lock");
            while slot.is_none() {
                slot = pending.ready.wait(slot).expect("pending lock");
            }
            slot.take().expect("checked above")
        };
        self.merged_reply(&client, &txn, &MergeRequest::UserDefined { query }, &outcome)
    }

    fn merged_reply(
        &self,
        client: &NodeIdentifier,
        txn: &TransactionId,
        request: &MergeRequest,
        outcome: &FanoutOutcome,
    ) -> Message {
        let own = self.identifier();
        for failure in &outcome.failures {
            warn!("xqd transaction {txn}: {failure}");
        }
        if outcome.collected.is_empty() {
            return make_error(own, client, ErrorCode::INTERNAL, Some(outcome.failure_summary().as_bytes()));
        }
        match merge(request, &outcome.collected, self.inner.processor.as_ref()) {
            Ok(body) => {
                let sources: Vec<NodeName> = outcome.collected.iter().map(|r| r.source.clone()).collect();
                let reply = Message::new(MessageType::XmlQueryMergedResult, own, client)
                    .with_header(TRANSACTION_ID, txn.as_str())
                    .with_header(RESULT_SOURCES, format_result_sources(&sources))
                    .with_body(body);
                if reply.body().is_none() {
                    reply.with_header(CONTENT_LENGTH, "0")
                } else {
                    reply
                }
            }
            Err(e) => make_error(own, client, e.code(), Some(e.to_string().as_bytes())),
        }
    }

    /// Allocates one sub-transaction id per DL member, in DL order.
    fn allocate(&self, dl: &[NodeIdentifier]) -> Vec<(TransactionId, NodeIdentifier, NodeName)> {
        let registry = self.inner.registry.lock().expect("registry lock");
        dl.iter()
            .filter_map(|id| registry.records.get(id))
            .map(|r| {
                let n = self.inner.next_sub_txn.fetch_add(1, Ordering::SeqCst);
                let txn = TransactionId::new(n.to_string()).expect("decimal ids are valid");
                (txn, r.identifier.clone(), r.name.clone())
            })
            .collect()
    }

    /// Sends the query to every allocated XDP in parallel.
    fn fanout(&self, subs: Vec<(TransactionId, NodeIdentifier, NodeName)>, query: &str) -> FanoutOutcome {
        let own = self.identifier();
        let timeout = self.inner.config.query_timeout;
        let replies: Vec<Result<XdpResult, FanoutFailure>> = thread::scope(|scope| {
            let handles: Vec<_> = subs
                .iter()
                .map(|(txn, target, name)| {
                    scope.spawn(move || {
                        let m = Message::new(MessageType::XmlQuery, own, target)
                            .with_header(TRANSACTION_ID, txn.as_str())
                            .with_body(query);
                        debug!("xqd sub-transaction {txn} -> {target}");
                        let reply = self.inner.transport.request(target, &m, timeout);
                        interpret_result(name, txn, reply)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("fan-out thread")).collect()
        });
        let mut outcome = FanoutOutcome {
            sub_txns: subs,
            ..Default::default()
        };
        for r in replies {
            match r {
                Ok(result) => outcome.collected.push(result),
                Err(failure) => outcome.failures.push(failure),
            }
        }
        outcome
    }

    /// Runs the distributed query on the current distribution list without
    /// merging.
    pub fn distribute(&self, query: &str) -> FanoutOutcome {
        let dl = self.distribution_list();
        self.fanout(self.allocate(&dl), query)
    }

    // Connectivity care.

    fn expire_pending(&self) {
        let now = self.inner.clock.now();
        let wait = self.inner.config.merge_wait;
        self.inner.pending.lock().expect("pending lock").retain(|(client, txn), p| {
            let keep = now < p.created + wait;
            if !keep {
                info!("xqd transaction {txn} of {client} expired without a merge query");
            }
            keep
        });
    }

    /// Pings every registered XDP once and applies the miss policy.
    pub fn sweep(&self) -> SweepReport {
        let own = self.identifier();
        let targets: Vec<NodeIdentifier> = self.inner.registry.lock().expect("registry lock").records.keys().cloned().collect();
        let timeout = self.inner.config.ping_timeout;
        let answered: Vec<bool> = thread::scope(|scope| {
            let handles: Vec<_> = targets
                .iter()
                .map(|target| {
                    scope.spawn(move || {
                        let ping = Message::new(MessageType::InfoRequest, own, target).with_header(REQUEST, "");
                        match self.inner.transport.request(target, &ping, timeout) {
                            Ok(reply) => reply.msg_type == MessageType::InfoReply,
                            Err(e) => {
                                debug!("xqd ping to {target} failed: {e}");
                                false
                            }
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("ping thread")).collect()
        });

        let mut report = SweepReport {
            pinged: targets.len(),
            ..Default::default()
        };
        let mut registry = self.inner.registry.lock().expect("registry lock");
        for (target, ok) in targets.iter().zip(answered) {
            let Some(record) = registry.records.get_mut(target) else { continue };
            if ok {
                record.missed_pings = 0;
                continue;
            }
            record.missed_pings += 1;
            let missed = record.missed_pings;
            if registry.remove_from_dl(target) {
                warn!("xqd removed silent {target} from the distribution list");
                report.removed_from_dl.push(registry.records[target].clone());
            }
            if missed > self.inner.config.max_missed {
                warn!("xqd unregistered {target} after {missed} missed pings");
                let gone = registry.records.shift_remove(target).expect("present");
                report.unregistered.push(gone);
            }
        }
        report
    }

    /// Runs whatever periodic work is due: pings and transaction expiry.
    pub fn tick(&self) -> Option<SweepReport> {
        self.expire_pending();
        let now = self.inner.clock.now();
        {
            let mut next = self.inner.next_sweep.lock().expect("sweep lock");
            if now < *next {
                return None;
            }
            *next = now + self.inner.config.ping_interval;
        }
        Some(self.sweep())
    }
}

fn interpret_result(
    name: &NodeName,
    txn: &TransactionId,
    reply: Result<Message, TransportError>,
) -> Result<XdpResult, FanoutFailure> {
    let failure = |code, reason: String| FanoutFailure {
        xdp: name.clone(),
        code,
        reason,
    };
    let reply = reply.map_err(|e| failure(None, e.to_string()))?;
    match reply.msg_type {
        MessageType::XmlQueryResult if reply.transaction_id() == Some(txn.as_str()) => {
            XdpResult::parse(name.clone(), reply.body().unwrap_or_default())
                .map_err(|e| failure(Some(ErrorCode::QUERY_PROCESSOR), format!("unparseable result: {e}")))
        }
        MessageType::XmlQueryResult => Err(failure(
            Some(ErrorCode::INTERNAL),
            format!("result for transaction {:?}", reply.transaction_id().unwrap_or_default()),
        )),
        MessageType::Error => Err(failure(
            Some(reply.error_code().unwrap_or(ErrorCode::INTERNAL)),
            reply.body_str().unwrap_or_default().to_string(),
        )),
        other => Err(failure(Some(ErrorCode::INTERNAL), format!("unexpected {other}"))),
    }
}

impl Handler for Xqd {
    fn handle(&self, request: Message) -> Message {
        self.handle_message(request)
    }
}
