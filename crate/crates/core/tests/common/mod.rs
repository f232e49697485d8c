//! Generators, reference oracles and network fixtures shared by the
//! integration tests.
#![allow(dead_code)]

use std::io::{self, Read};
use std::sync::Arc;
use std::time::Duration;

use proptest::prelude::*;

use dxq::clock::{Clock, ManualClock};
use dxq::protocol::{HeaderVariable, Message, MessageType, NodeIdentifier, NodeName, Version};
use dxq::query::{parse_fragment, parse_xml, Element, SubsetProcessor, XmlNode};
use dxq::transport::{ListenerHandle, MemNetwork, RecordingTransport, Transport, WireRecorder};
use dxq::xdp::{Xdp, XdpConfig};
use dxq::xqd::{Xqd, XqdConfig};

// ---------------------------------------------------------------------------
// Message generators

pub const TYPES: [&str; 12] = [
    "OK",
    "ERROR",
    "XML-QUERY",
    "MERGE-ALGORITHM",
    "XML-QUERY-RESULT",
    "XML-QUERY-MERGED-RESULT",
    "REGISTER",
    "UNREGISTER",
    "ADDTODL",
    "RMFROMDL",
    "INFO-REQUEST",
    "INFO-REPLY",
];

pub fn identifier() -> impl Strategy<Value = NodeIdentifier> {
    prop_oneof![
        Just(String::new()),
        "[a-z][a-z0-9+.-]{0,5}://[a-zA-Z0-9./:?=&%_~-]{1,30}",
        Just("http://metasearch.isn-oldenburg.de/dxq-xqd/".to_string()),
        Just("http://a6bf278d".to_string()),
    ]
    .prop_map(|s| NodeIdentifier::new(s).expect("generated identifiers are valid"))
}

pub fn vname() -> impl Strategy<Value = String> {
    "[A-Za-z-]{1,16}".prop_filter("reserved names are generated separately", |n| {
        !matches!(n.as_str(), "Msg-From" | "Msg-To" | "Content-Length")
    })
}

/// Any text without CRLF and without a leading space.
pub fn vvalue() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ -~]{0,40}",
        "\\PC{0,20}",
        "[a-z\r\n ]{0,12}",
    ]
    .prop_map(|v| v.replace("\r\n", "").trim_start_matches(' ').to_string())
    .prop_filter("no CRLF after trimming", |v| !v.contains("\r\n"))
}

pub fn body() -> impl Strategy<Value = Option<Vec<u8>>> {
    prop_oneof![
        2 => Just(None),
        2 => "\\PC{1,60}".prop_map(|s| Some(s.into_bytes())),
        1 => prop::collection::vec(any::<u8>(), 1..80).prop_map(Some),
        1 => Just(Some(b"DXQP-1.0 OK\r\nMsg-From: \r\nMsg-To: \r\n\r\n".to_vec())),
    ]
}

/// A structurally valid message, headers in arbitrary order.
pub fn message() -> impl Strategy<Value = Message> {
    (
        0usize..12,
        (0u8..10, 0u8..10),
        identifier(),
        identifier(),
        prop::collection::vec((vname(), vvalue()), 0..6),
        body(),
        any::<prop::sample::Index>(),
    )
        .prop_map(|(t, (major, minor), from, to, extra, body, pos)| {
            let msg_type = MessageType::from_token(TYPES[t]).expect("known token");
            let mut m = Message::new(msg_type, &from, &to);
            m.version = Version::new(major, minor).expect("digits");
            for (n, v) in extra {
                m.push_header(HeaderVariable::new(n, v).expect("generated header is valid"));
            }
            if let Some(b) = body {
                m.set_body(b);
            }
            // move Msg-From somewhere else so header order is not always canonical
            let mut headers = m.headers().to_vec();
            let first = headers.remove(0);
            headers.insert(pos.index(headers.len() + 1), first);
            Message::from_parts(m.version, m.msg_type, headers, m.body().map(<[u8]>::to_vec))
        })
}

// ---------------------------------------------------------------------------
// Reference parse oracle, written from the grammar. Returns the error code a
// conforming parser must report, or Ok for valid input.

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub fn oracle_identifier_ok(v: &str) -> bool {
    if v.is_empty() {
        return true;
    }
    if v.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return false;
    }
    let Some(i) = v.find("://") else { return false };
    let (scheme, rest) = (&v[..i], &v[i + 3..]);
    let mut sc = scheme.chars();
    let first_ok = matches!(sc.next(), Some(c) if c.is_ascii_alphabetic());
    first_ok
        && sc.all(|c| c.is_ascii_alphanumeric() || "+-.".contains(c))
        && !rest.is_empty()
        && !rest.contains('{')
        && !rest.contains('}')
}

pub fn oracle_parse(input: &[u8]) -> Result<(), u16> {
    let head_len = find(input, b"\r\n\r\n").ok_or(100u16)?;
    let head = std::str::from_utf8(&input[..head_len]).map_err(|_| 100u16)?;
    let body = &input[head_len + 4..];

    let mut lines = head.split("\r\n");
    let id = lines.next().unwrap_or("");
    let id = id.strip_prefix("DXQP-").ok_or(100u16)?;
    let b = id.as_bytes();
    if b.len() < 5 || !b[0].is_ascii_digit() || b[1] != b'.' || !b[2].is_ascii_digit() || b[3] != b' ' {
        return Err(100);
    }
    if !TYPES.contains(&&id[4..]) {
        return Err(100);
    }

    let mut vars: Vec<(&str, &str)> = Vec::new();
    for line in lines {
        let colon = line.find(':').ok_or(100u16)?;
        let name = &line[..colon];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphabetic() || c == '-') {
            return Err(100);
        }
        let after = &line[colon + 1..];
        if !after.starts_with(' ') {
            return Err(100);
        }
        vars.push((name, after.trim_start_matches(' ')));
    }

    for wanted in ["Msg-From", "Msg-To"] {
        let found: Vec<&str> = vars.iter().filter(|(n, _)| *n == wanted).map(|(_, v)| *v).collect();
        match found.as_slice() {
            [] => return Err(102),
            [v] if oracle_identifier_ok(v) => {}
            _ => return Err(100),
        }
    }
    let lengths: Vec<&str> = vars.iter().filter(|(n, _)| *n == "Content-Length").map(|(_, v)| *v).collect();
    if lengths.len() > 1 {
        return Err(100);
    }
    let declared = lengths
        .first()
        .filter(|v| !v.is_empty() && v.bytes().all(|c| c.is_ascii_digit()))
        .map(|v| v.parse::<u128>().unwrap_or(u128::MAX))
        .unwrap_or(0);
    match (body.len() as u128).cmp(&declared) {
        std::cmp::Ordering::Less => Err(103),
        std::cmp::Ordering::Greater => Err(100),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Mutations

#[derive(Debug, Clone)]
pub enum Mutation {
    FlipByte(prop::sample::Index, u8),
    DeleteByte(prop::sample::Index),
    InsertByte(prop::sample::Index, u8),
    Truncate(prop::sample::Index),
    Append(Vec<u8>),
    DropLine(prop::sample::Index),
    DuplicateLine(prop::sample::Index),
    SetContentLength(String),
}

pub fn mutation() -> impl Strategy<Value = Mutation> {
    let interesting = prop_oneof![Just(b'\r'), Just(b'\n'), Just(b':'), Just(b' '), Just(0xffu8), any::<u8>()];
    prop_oneof![
        (any::<prop::sample::Index>(), interesting.clone()).prop_map(|(i, b)| Mutation::FlipByte(i, b)),
        any::<prop::sample::Index>().prop_map(Mutation::DeleteByte),
        (any::<prop::sample::Index>(), interesting).prop_map(|(i, b)| Mutation::InsertByte(i, b)),
        any::<prop::sample::Index>().prop_map(Mutation::Truncate),
        prop::collection::vec(any::<u8>(), 1..8).prop_map(Mutation::Append),
        any::<prop::sample::Index>().prop_map(Mutation::DropLine),
        any::<prop::sample::Index>().prop_map(Mutation::DuplicateLine),
        prop_oneof![Just("0".to_string()), Just(String::new()), Just("x".to_string()), "[0-9]{1,3}"]
            .prop_map(Mutation::SetContentLength),
    ]
}

/// Header lines as byte ranges, ID-LINE excluded.
fn header_lines(raw: &[u8]) -> Vec<(usize, usize)> {
    let end = find(raw, b"\r\n\r\n").map_or(raw.len(), |p| p + 2);
    let mut out = Vec::new();
    let mut start = match find(raw, b"\r\n") {
        Some(p) => p + 2,
        None => return out,
    };
    while start < end {
        let Some(len) = find(&raw[start..end], b"\r\n") else { break };
        out.push((start, start + len + 2));
        start += len + 2;
    }
    out
}

pub fn apply(mutation: &Mutation, raw: &[u8]) -> Vec<u8> {
    let mut v = raw.to_vec();
    match mutation {
        Mutation::FlipByte(i, b) if !v.is_empty() => {
            let i = i.index(v.len());
            v[i] = *b;
        }
        Mutation::DeleteByte(i) if !v.is_empty() => {
            v.remove(i.index(v.len()));
        }
        Mutation::InsertByte(i, b) => v.insert(i.index(v.len() + 1), *b),
        Mutation::Truncate(i) => v.truncate(i.index(v.len().max(1))),
        Mutation::Append(extra) => v.extend_from_slice(extra),
        Mutation::DropLine(i) => {
            let lines = header_lines(raw);
            if !lines.is_empty() {
                let (s, e) = lines[i.index(lines.len())];
                v.drain(s..e);
            }
        }
        Mutation::DuplicateLine(i) => {
            let lines = header_lines(raw);
            if !lines.is_empty() {
                let (s, e) = lines[i.index(lines.len())];
                let line = raw[s..e].to_vec();
                v.splice(s..s, line);
            }
        }
        Mutation::SetContentLength(value) => {
            let lines = header_lines(raw);
            let line = format!("Content-Length: {value}\r\n").into_bytes();
            match lines.iter().find(|(s, _)| raw[*s..].starts_with(b"Content-Length:")) {
                Some(&(s, e)) => {
                    v.splice(s..e, line);
                }
                None => {
                    let at = lines.last().map_or_else(|| find(raw, b"\r\n").map_or(0, |p| p + 2), |l| l.1);
                    v.splice(at..at, line);
                }
            }
        }
        _ => {}
    }
    v
}

// ---------------------------------------------------------------------------
// A reader that hands out a byte stream in pieces of chosen sizes.

pub struct Chunked {
    data: Vec<u8>,
    pos: usize,
    sizes: Vec<usize>,
    next: usize,
}

impl Chunked {
    pub fn new(data: Vec<u8>, sizes: Vec<usize>) -> Self {
        Self {
            data,
            pos: 0,
            sizes,
            next: 0,
        }
    }
}

impl Read for Chunked {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if self.pos >= self.data.len() {
            return Ok(0);
        }
        let want = if self.sizes.is_empty() {
            1
        } else {
            self.sizes[self.next % self.sizes.len()].max(1)
        };
        self.next += 1;
        let n = want.min(buf.len()).min(self.data.len() - self.pos);
        buf[..n].copy_from_slice(&self.data[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

// ---------------------------------------------------------------------------
// Network fixture: one XQD plus XDPs on a recorded in-memory network, all
// driven by a manual clock.

pub const XQD_ID: &str = "http://xqd.test/";

pub fn id(s: &str) -> NodeIdentifier {
    NodeIdentifier::new(s).unwrap()
}

pub fn name(s: &str) -> NodeName {
    NodeName::new(s).unwrap()
}

pub fn xdp_id(i: usize) -> NodeIdentifier {
    id(&format!("http://xdp{i}.test/"))
}

pub struct Net {
    pub network: MemNetwork,
    pub recorder: Arc<WireRecorder>,
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<ManualClock>,
    pub xqd: Xqd,
    pub xdps: Vec<Xdp>,
    listeners: Vec<ListenerHandle>,
}

impl Net {
    /// XDP `i` is named `names[i]` and exports `docs[i]`.
    pub fn new(docs: &[(&str, &str)]) -> Self {
        Self::with_config(docs, |_| {}, |_| {})
    }

    pub fn with_config(
        docs: &[(&str, &str)],
        tune_xqd: impl FnOnce(&mut XqdConfig),
        tune_xdp: impl Fn(&mut XdpConfig),
    ) -> Self {
        let network = MemNetwork::new();
        let recorder = WireRecorder::new();
        let transport: Arc<dyn Transport> = Arc::new(RecordingTransport::new(network.clone(), Arc::clone(&recorder)));
        let clock = Arc::new(ManualClock::new());
        let dyn_clock: Arc<dyn Clock> = clock.clone();

        let mut xc = XqdConfig::new(id(XQD_ID), name("Test XQD"));
        xc.identifier_seed = Some(1);
        tune_xqd(&mut xc);
        let xqd = Xqd::with_parts(xc, Arc::clone(&transport), Arc::clone(&dyn_clock), Arc::new(SubsetProcessor));
        let mut listeners = vec![xqd.listen().unwrap()];

        let xdps: Vec<Xdp> = docs
            .iter()
            .enumerate()
            .map(|(i, (n, doc))| {
                let mut c = XdpConfig::new(xdp_id(i), name(n), id(XQD_ID), parse_xml(*doc).unwrap());
                c.admin = format!("admin{i}@test");
                tune_xdp(&mut c);
                Xdp::with_parts(c, Arc::clone(&transport), Arc::clone(&dyn_clock), Arc::new(SubsetProcessor))
            })
            .collect();
        for x in &xdps {
            listeners.push(x.listen().unwrap());
        }
        Self {
            network,
            recorder,
            transport,
            clock,
            xqd,
            xdps,
            listeners,
        }
    }

    pub fn join_all(&self) {
        for x in &self.xdps {
            x.join().unwrap();
        }
    }

    pub fn advance(&self, by: Duration) {
        self.clock.advance(by);
    }

    /// Sends raw bytes to a node and parses its raw answer.
    pub fn raw(&self, target: &NodeIdentifier, bytes: &[u8]) -> Message {
        let reply = self.network.deliver_raw(target, bytes).unwrap();
        Message::parse(&reply).unwrap()
    }

    /// Sends a message to a node through the network's transport.
    pub fn send(&self, target: &NodeIdentifier, m: &Message) -> Message {
        self.transport.request(target, m, Duration::from_secs(10)).unwrap()
    }
}

// ---------------------------------------------------------------------------
// Independent merge oracles

/// remove-duplicates at depth 2 by brute force, for element-only documents
/// sharing one root: level-1 elements are grouped by name and attributes in
/// first-seen order, and each group keeps the first occurrence of every
/// canonical level-2 serialization.
pub fn remove_duplicates_depth2_oracle(docs: &[&str]) -> String {
    let roots: Vec<Element> = docs
        .iter()
        .map(|d| match parse_xml(*d).unwrap() {
            XmlNode::Element(e) => e,
            XmlNode::Text(_) => unreachable!(),
        })
        .collect();
    let mut groups: Vec<(Element, Vec<String>)> = Vec::new();
    for root in &roots {
        for level1 in root.child_elements() {
            let idx = match groups
                .iter()
                .position(|(g, _)| g.name == level1.name && g.attributes == level1.attributes)
            {
                Some(i) => i,
                None => {
                    let mut shell = Element::new(&level1.name);
                    shell.attributes = level1.attributes.clone();
                    groups.push((shell, Vec::new()));
                    groups.len() - 1
                }
            };
            for level2 in &level1.children {
                let text = level2.serialize();
                if !groups[idx].1.contains(&text) {
                    groups[idx].1.push(text);
                }
            }
        }
    }
    let mut root = Element::new(&roots[0].name);
    root.attributes = roots[0].attributes.clone();
    for (mut shell, members) in groups {
        shell.children = parse_fragment(members.concat()).unwrap();
        root.children.push(XmlNode::Element(shell));
    }
    XmlNode::Element(root).serialize()
}

/// The concatenate result, built by string assembly.
pub fn concatenate_oracle(bodies: &[&str]) -> String {
    format!("<result>{}</result>", bodies.concat())
}
