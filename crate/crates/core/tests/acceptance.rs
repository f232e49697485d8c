//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the output.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, TestRunner};

use common::*;
use dxq::client::{ClientError, DxqClient};
use dxq::demo;
use dxq::merge::{merge, MergeRequest, XdpResult};
use dxq::protocol::{parse_message, ErrorCode, Message, MessageType, NodeIdentifier, NodeName, TransactionId};
use dxq::query::SubsetProcessor;
use dxq::transport::{read_frame, split_frames, Direction, Fault, FaultRule, WireFrame};

const GOLDEN_LIMIT: Duration = Duration::from_secs(5);
const GRAMMAR_LIMIT: Duration = Duration::from_secs(60);
const GRAMMAR_CASES: u32 = 10_000;
const CONCURRENT_TRANSACTIONS: usize = 32;

type Outcome = Result<String, String>;
type Exchange = (Vec<u8>, Vec<u8>);
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

// 1. Golden transcript

const XQD: &str = "http://metasearch.isn-oldenburg.de/dxq-xqd/";
const P: &str = "http://physnet.isn-oldenburg.de/dxq-xdp/";
const M: &str = "http://physnet-mirror.isn-oldenburg.de:8080/dxq-xdp/";

fn wire(lines: &[&str], body: &str) -> Vec<u8> {
    let mut s = String::new();
    for l in lines {
        s.push_str(l);
        s.push_str("\r\n");
    }
    s.push_str("\r\n");
    s.push_str(body);
    s.into_bytes()
}

/// The expected exchanges, written out by hand. `client` is the identifier
/// the XQD assigned.
fn golden_exchanges(client: &str) -> Vec<Exchange> {
    let from = |id: &str| format!("Msg-From: {id}");
    let to = |id: &str| format!("Msg-To: {id}");
    let ok = |id: &str| wire(&["DXQP-1.0 OK", &from(XQD), &to(id)], "");
    let query = "let $a := ./a return $a";
    // the recorded merge query ends in a newline; Content-Length 51 counts it
    let merge_query = "let $r := <a>{sum(./result/xqres/a)}</a> return $r\n";
    let mut out = Vec::new();
    for (id, name) in [(P, "PhysNet"), (M, "PhysNet (Mirror)")] {
        out.push((
            wire(&["DXQP-1.0 REGISTER", &from(id), &to(XQD), &format!("Node-Name: {name}")], ""),
            ok(id),
        ));
        out.push((wire(&["DXQP-1.0 ADDTODL", &from(id), &to(XQD)], ""), ok(id)));
    }
    for (id, name, admin) in [
        (P, "PhysNet", "Max Mustermann <admin@physnet.isn-oldenburg.de>"),
        (M, "PhysNet (Mirror)", "Bert Beispiel <admin@physnet-mirror.isn-oldenburg.de>"),
    ] {
        out.push((
            wire(&["DXQP-1.0 INFO-REQUEST", &from(XQD), &to(id), "Request: Node-Name Admin"], ""),
            wire(
                &["DXQP-1.0 INFO-REPLY", &from(id), &to(XQD), &format!("Node-Name: {name}"), &format!("Admin: {admin}")],
                "",
            ),
        ));
    }
    out.push((
        wire(
            &["DXQP-1.0 XML-QUERY", "Msg-From: ", &to(XQD), "Transaction-ID: 0", "Merge-Algorithm: user-defined", "Content-Length: 23"],
            query,
        ),
        wire(&["DXQP-1.0 OK", &from(XQD), &to(client), "Transaction-ID: 0"], ""),
    ));
    for (id, txn) in [(P, "0"), (M, "1")] {
        let t = format!("Transaction-ID: {txn}");
        out.push((
            wire(&["DXQP-1.0 XML-QUERY", &from(XQD), &to(id), &t, "Content-Length: 23"], query),
            wire(&["DXQP-1.0 XML-QUERY-RESULT", &from(id), &to(XQD), &t, "Content-Length: 8"], "<a>5</a>"),
        ));
    }
    out.push((
        wire(&["DXQP-1.0 MERGE-ALGORITHM", &from(client), &to(XQD), "Transaction-ID: 0", "Content-Length: 51"], merge_query),
        wire(
            &[
                "DXQP-1.0 XML-QUERY-MERGED-RESULT",
                &from(XQD),
                &to(client),
                "Transaction-ID: 0",
                "Result-Sources: {PhysNet} {PhysNet (Mirror)}",
                "Content-Length: 9",
            ],
            "<a>10</a>",
        ),
    ));
    for id in [P, M] {
        out.push((wire(&["DXQP-1.0 UNREGISTER", &from(id), &to(XQD)], ""), ok(id)));
    }
    out
}

fn recorded_exchanges(frames: &[WireFrame]) -> Result<Vec<Exchange>, String> {
    let mut by_index: BTreeMap<usize, [Option<Vec<u8>>; 2]> = BTreeMap::new();
    for f in frames {
        let slot = by_index.entry(f.exchange).or_default();
        match f.direction {
            Direction::Request => slot[0] = Some(f.bytes.clone()),
            Direction::Response => slot[1] = Some(f.bytes.clone()),
        }
    }
    by_index
        .into_iter()
        .map(|(i, [req, resp])| match (req, resp) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(format!("exchange {i} is incomplete")),
        })
        .collect()
}

fn show(pair: &Exchange) -> String {
    format!("{:?} / {:?}", String::from_utf8_lossy(&pair.0), String::from_utf8_lossy(&pair.1))
}

fn golden_transcript() -> Outcome {
    let start = Instant::now();
    let (net, _) = demo::run_example().map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let frames = net.recorder.frames();
    let got = recorded_exchanges(&frames)?;

    let client = frames
        .iter()
        .map(WireFrame::message)
        .find(|m| m.msg_type == MessageType::Ok && m.transaction_id().is_some())
        .map(|m| m.msg_to().as_str().to_string())
        .ok_or("no OK carried a client identifier")?;
    let hex = client.strip_prefix("http://a6bf").ok_or_else(|| format!("client identifier {client}"))?;
    ensure(hex.chars().all(|c| c.is_ascii_hexdigit()), || format!("client identifier {client}"))?;

    let expected = golden_exchanges(&client);
    ensure(got.len() == expected.len(), || format!("{} exchanges, expected {}", got.len(), expected.len()))?;
    // Join, inquiry and leave run strictly in order. The client transaction
    // and its fan-out overlap, so exchanges 6..10 are compared as a set with
    // the client's own two exchanges kept in order.
    for i in (0..6).chain(10..12) {
        ensure(got[i] == expected[i], || format!("exchange {i}: got {} expected {}", show(&got[i]), show(&expected[i])))?;
    }
    let mut middle_got: Vec<_> = got[6..10].to_vec();
    let mut middle_expected: Vec<_> = expected[6..10].to_vec();
    let client_order: Vec<usize> = [&expected[6], &expected[9]]
        .iter()
        .map(|e| got.iter().position(|g| g == *e).unwrap_or(usize::MAX))
        .collect();
    middle_got.sort();
    middle_expected.sort();
    ensure(middle_got == middle_expected, || {
        let missing: Vec<String> = middle_expected.iter().filter(|e| !middle_got.contains(e)).map(show).collect();
        format!("query exchanges differ; missing {missing:?}")
    })?;
    ensure(client_order[0] < client_order[1], || "MERGE-ALGORITHM preceded XML-QUERY".into())?;

    let lengths: Vec<String> = frames
        .iter()
        .filter_map(|f| f.message().header("Content-Length").map(str::to_string))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    ensure(lengths == ["23", "51", "8", "9"], || format!("Content-Length values {lengths:?}"))?;
    ensure(elapsed < GOLDEN_LIMIT, || format!("took {elapsed:?}"))?;
    Ok(format!("{} messages byte-exact, client {client}, {elapsed:.2?}", frames.len()))
}

// 2. Merged sum

fn merged_sum() -> Outcome {
    let net = demo::ExampleNetwork::start(true).map_err(|e| e.to_string())?;
    net.join_all().map_err(|e| e.to_string())?;
    let client = net.client();
    let outcome = client
        .query(
            "let $a := ./a return $a",
            &MergeRequest::UserDefined {
                query: "let $r := <a>{sum(./result/xqres/a)}</a> return $r".into(),
            },
            &TransactionId::new("0").unwrap(),
        )
        .map_err(|e| e.to_string())?;
    ensure(outcome.body == b"<a>10</a>", || format!("got {:?}", outcome.body_str()))?;
    Ok("<a>10</a>".into())
}

// 3. remove-duplicates planets

fn planets() -> Outcome {
    let a = "<solarsystem><planets><planet>Mercury</planet><planet>Venus</planet><planet>Earth</planet></planets></solarsystem>";
    let b = "<solarsystem><planets><planet>Venus</planet><planet>Earth</planet><planet>Mars</planet></planets></solarsystem>";
    let net = Net::new(&[("A", a), ("B", b)]);
    net.join_all();
    let client = DxqClient::new(Arc::clone(&net.transport), id(XQD_ID));
    let out = client
        .query(".", &MergeRequest::RemoveDuplicates { depth: 2 }, &TransactionId::new("1").unwrap())
        .map_err(|e| e.to_string())?;
    let oracle = remove_duplicates_depth2_oracle(&[a, b]);
    ensure(out.body_str() == oracle, || format!("got {} oracle {oracle}", out.body_str()))?;
    let expected = "<solarsystem><planets><planet>Mercury</planet><planet>Venus</planet><planet>Earth</planet><planet>Mars</planet></planets></solarsystem>";
    ensure(out.body_str() == expected, || format!("got {}", out.body_str()))?;
    Ok("Mercury Venus Earth Mars, equal to the brute-force oracle".into())
}

// 4. Grammar properties

fn run_cases<S: Strategy>(strategy: S, mut check: impl FnMut(S::Value) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: GRAMMAR_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    for _ in 0..GRAMMAR_CASES {
        let value = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        check(value)?;
    }
    Ok(())
}

fn grammar() -> Outcome {
    let start = Instant::now();
    run_cases(message(), |m| {
        let bytes = m.to_bytes().map_err(|e| e.to_string())?;
        let parsed = parse_message(&bytes).map_err(|e| format!("{e}: {:?}", String::from_utf8_lossy(&bytes)))?;
        ensure(parsed == m, || "parse changed the message".into())?;
        ensure(parsed.to_bytes().map_err(|e| e.to_string())? == bytes, || "serialization changed".into())
    })?;

    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    run_cases((message(), mutation()), |(m, mutation)| {
        let raw = apply(&mutation, &m.to_bytes().map_err(|e| e.to_string())?);
        let got = parse_message(&raw).map(|_| ()).map_err(|f| f.code.value());
        let expected = oracle_parse(&raw);
        *classes.entry(match got {
            Ok(()) => "ok".into(),
            Err(c) => c.to_string(),
        })
        .or_default() += 1;
        ensure(got == expected, || format!("{:?}: got {got:?}, oracle {expected:?}", String::from_utf8_lossy(&raw)))
    })?;

    let split = (
        proptest::collection::vec(message(), 1..6),
        proptest::collection::vec(1usize..40, 1..8),
        1usize..64,
    );
    run_cases(split, |(msgs, sizes, capacity)| {
        let frames: Vec<Vec<u8>> = msgs.iter().map(|m| m.to_bytes().unwrap()).collect();
        let stream = frames.concat();
        let mut reader = BufReader::with_capacity(capacity, Chunked::new(stream.clone(), sizes));
        let mut got = Vec::new();
        while let Some(f) = read_frame(&mut reader).map_err(|e| e.to_string())? {
            got.push(f);
        }
        ensure(got == frames, || "a split stream lost or duplicated a frame".into())?;
        ensure(split_frames(&stream).map_err(|e| e.to_string())? == frames, || "split_frames disagrees".into())
    })?;

    let elapsed = start.elapsed();
    ensure(elapsed < GRAMMAR_LIMIT, || format!("took {elapsed:?}"))?;
    let dist: Vec<String> = classes.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!(
        "{GRAMMAR_CASES} round trips, {GRAMMAR_CASES} mutations [{}], {GRAMMAR_CASES} split streams, {elapsed:.2?}",
        dist.join(" ")
    ))
}

// 5. Error codes on the wire

fn error_codes() -> Outcome {
    let net = Net::new(&[("A", "<d><a>1</a></d>"), ("B", "<d><a>2</a></d>")]);
    let client = id("http://client.test/");
    let xqd = id(XQD_ID);
    let mut raw_replies: Vec<Vec<u8>> = Vec::new();
    let expect = |code: u16, reply: &[u8]| -> Result<(), String> {
        let m = Message::parse(reply).map_err(|e| e.to_string())?;
        ensure(m.msg_type == MessageType::Error && m.error_code().map(|c| c.value()) == Some(code), || {
            format!("expected {code}, got {:?}", String::from_utf8_lossy(reply))
        })
    };
    let deliver = |target: &NodeIdentifier, bytes: &[u8]| net.network.deliver_raw(target, bytes).map_err(|e| e.to_string());
    let send = |target: &NodeIdentifier, m: Message| net.send(target, &m).to_bytes().unwrap();
    let q = |algo: Option<&str>| {
        let m = Message::new(MessageType::XmlQuery, &client, &xqd).with_header("Transaction-ID", "1");
        match algo {
            Some(a) => m.with_header("Merge-Algorithm", a),
            None => m,
        }
        .with_body("./a")
    };

    let r = deliver(&xqd, b"DXQP-1.0 NONSENSE\r\nMsg-From: \r\nMsg-To: \r\n\r\n")?;
    expect(100, &r)?;
    raw_replies.push(r);
    let r = send(&xdp_id(0), Message::new(MessageType::Register, &client, &xdp_id(0)).with_header("Node-Name", "x"));
    expect(101, &r)?;
    raw_replies.push(r);
    let r = send(&xqd, q(None));
    expect(102, &r)?;
    raw_replies.push(r);
    let r = deliver(&xdp_id(0), b"DXQP-1.0 XML-QUERY\r\nMsg-From: \r\nMsg-To: \r\nTransaction-ID: 1\r\nContent-Length: 40\r\n\r\n./a")?;
    expect(103, &r)?;
    raw_replies.push(r);
    let r = send(&xqd, q(Some("concatenate")));
    expect(400, &r)?;
    raw_replies.push(r);
    net.join_all();
    let r = send(
        &xdp_id(0),
        Message::new(MessageType::XmlQuery, &client, &xdp_id(0))
            .with_header("Transaction-ID", "1")
            .with_body("let $x := $missing return $x"),
    );
    expect(200, &r)?;
    raw_replies.push(r);
    let r = send(&xqd, q(Some("majority")));
    expect(300, &r)?;
    raw_replies.push(r);
    for i in 0..2 {
        net.network.inject(&xdp_id(i), FaultRule::always(Fault::Unreachable));
    }
    let r = send(&xqd, q(Some("concatenate")));
    expect(500, &r)?;
    raw_replies.push(r);

    let mut seen = BTreeSet::new();
    let recorded = net.recorder.frames().into_iter().map(|f| f.bytes);
    for bytes in recorded.chain(raw_replies) {
        let m = Message::parse(&bytes).map_err(|e| e.to_string())?;
        if m.msg_type == MessageType::Error {
            seen.insert(m.error_code().unwrap().value());
        }
    }
    let wanted: BTreeSet<u16> = [100, 101, 102, 103, 200, 300, 400, 500].into();
    ensure(wanted.is_subset(&seen), || format!("observed {seen:?}"))?;
    Ok(format!("observed {:?}", seen))
}

// 6. Connectivity care

fn lifecycle() -> Outcome {
    let net = Net::new(&[("A", "<d/>"), ("B", "<d/>")]);
    net.join_all();
    let interval = net.xqd.config().ping_interval;
    let silent = xdp_id(0);
    net.network.inject(&silent, FaultRule::always(Fault::Silent));
    let sweep = || {
        net.advance(interval);
        net.xqd.tick().ok_or_else(|| "no sweep was due".to_string())
    };

    let first = sweep()?;
    ensure(first.removed_from_dl.iter().any(|r| r.identifier == silent), || "not removed after one miss".into())?;
    ensure(!net.xqd.distribution_list().contains(&silent), || "still in the DL".into())?;
    ensure(net.xqd.record(&silent).is_some(), || "unregistered too early".into())?;
    for n in 1..=3 {
        let report = sweep()?;
        let gone = report.unregistered.iter().any(|r| r.identifier == silent);
        ensure(gone == (n == 3), || format!("after {n} further misses unregistered={gone}"))?;
    }
    ensure(net.xqd.record(&silent).is_none(), || "still registered".into())?;

    net.network.clear_faults(&silent);
    net.advance(net.xdps[0].config().self_check_interval);
    net.xdps[0].tick();
    let info = DxqClient::new(Arc::clone(&net.transport), id(XQD_ID))
        .info(&id(XQD_ID), "Active-XDPs")
        .map_err(|e| e.to_string())?;
    let active = info.header("Active-XDPs").unwrap_or_default().to_string();
    ensure(active.contains(&format!("{silent}{{A}}")), || format!("Active-XDPs {active:?}"))?;
    Ok(format!("out of DL after 1 miss, unregistered after 3 more, re-joined: {active}"))
}

// 7. Partial failure

fn partial_failure() -> Outcome {
    let net = Net::new(&[("A", "<d><a>1</a></d>"), ("B", "<d><a>2</a></d>")]);
    net.join_all();
    let client = DxqClient::new(Arc::clone(&net.transport), id(XQD_ID));
    let sum = MergeRequest::UserDefined {
        query: "let $r := <a>{sum(./result/xqres/a)}</a> return $r".into(),
    };
    let fail = || FaultRule::always(Fault::ErrorReply(ErrorCode::QUERY_PROCESSOR)).on(MessageType::XmlQuery);
    net.network.inject(&xdp_id(0), fail());
    let out = client.query("./a", &sum, &TransactionId::new("1").unwrap()).map_err(|e| e.to_string())?;
    let sources: Vec<&str> = out.sources.iter().map(NodeName::as_str).collect();
    ensure(out.body_str() == "<a>2</a>", || format!("survivor-only body {:?}", out.body_str()))?;
    ensure(sources == ["B"], || format!("Result-Sources {sources:?}"))?;

    net.network.inject(&xdp_id(1), fail());
    match client.query("./a", &sum, &TransactionId::new("2").unwrap()) {
        Err(ClientError::Protocol { code, .. }) => Ok(format!("survivor-only <a>2</a> from {{B}}; both failing gives ERROR {code}")),
        other => Err(format!("both failing gave {other:?}")),
    }
}

// 8. Concurrency

fn shelf_doc(i: usize) -> String {
    format!("<lib><shelf><book>b{i}</book><book>common</book></shelf><n>{}</n></lib>", i + 1)
}

fn job(k: usize) -> (String, MergeRequest) {
    match k % 3 {
        0 => ("./shelf/book".into(), MergeRequest::Concatenate),
        1 => (".".into(), MergeRequest::RemoveDuplicates { depth: 2 }),
        _ => (
            "./n".into(),
            MergeRequest::UserDefined {
                query: format!("let $r := <t k=\"{k}\">{{sum(./result/xqres/n)}}</t> return $r"),
            },
        ),
    }
}

fn concurrency() -> Outcome {
    let docs: Vec<String> = (0..4).map(shelf_doc).collect();
    let named: Vec<(String, &str)> = docs.iter().enumerate().map(|(i, d)| (format!("X{i}"), d.as_str())).collect();
    let specs: Vec<(&str, &str)> = named.iter().map(|(n, d)| (n.as_str(), *d)).collect();

    // serial reference: the merge of the four per-document results
    let serial: Vec<(String, Vec<String>)> = (0..CONCURRENT_TRANSACTIONS)
        .map(|k| {
            let (query, request) = job(k);
            let results: Vec<XdpResult> = docs
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let body = dxq::query::QueryProcessor::execute(&SubsetProcessor, &query, &dxq::query::parse_xml(d).unwrap()).unwrap();
                    XdpResult::parse(NodeName::new(format!("X{i}")).unwrap(), body.as_bytes()).unwrap()
                })
                .collect();
            let body = merge(&request, &results, &SubsetProcessor).unwrap();
            (body, (0..4).map(|i| format!("X{i}")).collect())
        })
        .collect();

    let net = Net::new(&specs);
    net.join_all();
    let parallel: Vec<Result<(String, Vec<String>), String>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..CONCURRENT_TRANSACTIONS)
            .map(|k| {
                let transport = Arc::clone(&net.transport);
                scope.spawn(move || {
                    let mut client = DxqClient::new(transport, id(XQD_ID));
                    if k % 2 == 0 {
                        client = client.with_identifier(id(&format!("http://client{k}.test/")));
                    }
                    let (query, request) = job(k);
                    // every client reuses transaction id 7
                    client
                        .query(&query, &request, &TransactionId::new("7").unwrap())
                        .map(|o| (o.body_str().to_string(), o.sources.iter().map(|s| s.as_str().to_string()).collect()))
                        .map_err(|e| e.to_string())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for (k, (got, want)) in parallel.iter().zip(&serial).enumerate() {
        let got = got.as_ref().map_err(|e| format!("transaction {k}: {e}"))?;
        ensure(got == want, || format!("transaction {k}: got {got:?}, serial {want:?}"))?;
    }

    let mut sub_ids = BTreeSet::new();
    let mut fanned = 0;
    for f in net.recorder.frames() {
        let m = f.message();
        if f.direction == Direction::Request && m.msg_type == MessageType::XmlQuery && m.msg_from() == id(XQD_ID) {
            fanned += 1;
            sub_ids.insert(m.transaction_id().unwrap_or_default().to_string());
        }
    }
    ensure(fanned == CONCURRENT_TRANSACTIONS * 4, || format!("{fanned} sub-queries"))?;
    ensure(sub_ids.len() == fanned, || format!("{} distinct ids for {fanned} sub-queries", sub_ids.len()))?;
    Ok(format!("{CONCURRENT_TRANSACTIONS} transactions equal serial results, {fanned} distinct sub-transaction ids"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("golden transcript", golden_transcript),
        ("merged sum", merged_sum),
        ("remove-duplicates", planets),
        ("grammar properties", grammar),
        ("error codes", error_codes),
        ("connectivity care", lifecycle),
        ("partial failure", partial_failure),
        ("concurrency", concurrency),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", n + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
