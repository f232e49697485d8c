use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use dxq::protocol::{Message, MessageType, NodeIdentifier, NodeName};
use dxq::query::parse_xml;
use dxq::transport::{ListenerHandle, MemNetwork, TcpTransport, Transport};
use dxq::xdp::{Xdp, XdpConfig};
use dxq::xqd::{Xqd, XqdConfig};

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn id(s: &str) -> NodeIdentifier {
    NodeIdentifier::new(s).unwrap()
}

struct Setup {
    transport: Arc<dyn Transport>,
    xqd: NodeIdentifier,
    xdps: Vec<Xdp>,
    _listeners: Vec<ListenerHandle>,
}

fn start(transport: Arc<dyn Transport>, ids: &[NodeIdentifier]) -> Setup {
    let mut xc = XqdConfig::new(ids[0].clone(), NodeName::new("Q").unwrap());
    xc.identifier_seed = Some(7);
    let xqd = Xqd::new(xc, Arc::clone(&transport));
    let mut listeners = vec![xqd.listen().unwrap()];
    let docs = ["<d><a>1</a></d>", "<d><a>2</a></d>"];
    let xdps: Vec<Xdp> = ids[1..]
        .iter()
        .zip(docs)
        .enumerate()
        .map(|(i, (ident, doc))| {
            let c = XdpConfig::new(ident.clone(), NodeName::new(format!("P{i}")).unwrap(), ids[0].clone(), parse_xml(doc).unwrap());
            Xdp::new(c, Arc::clone(&transport))
        })
        .collect();
    for x in &xdps {
        listeners.push(x.listen().unwrap());
    }
    Setup {
        transport,
        xqd: ids[0].clone(),
        xdps,
        _listeners: listeners,
    }
}

/// Requests exercising every XQD and XDP path, in order.
fn script(s: &Setup) -> Vec<(NodeIdentifier, Message)> {
    let c = id("http://client.test/");
    let q = |algo: &str, txn: &str| {
        Message::new(MessageType::XmlQuery, &c, &s.xqd)
            .with_header("Transaction-ID", txn)
            .with_header("Merge-Algorithm", algo)
            .with_body("./a")
    };
    let x0 = s.xdps[0].identifier().clone();
    vec![
        (s.xqd.clone(), q("concatenate", "1")),
        (s.xqd.clone(), q("remove-duplicates", "2").with_header("Depth", "0")),
        (s.xqd.clone(), q("remove-duplicates", "3")),
        (s.xqd.clone(), q("bogus", "4")),
        (s.xqd.clone(), q("user-defined", "5")),
        (
            s.xqd.clone(),
            Message::new(MessageType::MergeAlgorithm, &c, &s.xqd)
                .with_header("Transaction-ID", "5")
                .with_body("let $r := <s>{sum(./result/xqres/a)}</s> return $r"),
        ),
        (
            s.xqd.clone(),
            Message::new(MessageType::XmlQuery, &NodeIdentifier::empty(), &s.xqd)
                .with_header("Transaction-ID", "6")
                .with_header("Merge-Algorithm", "user-defined")
                .with_body("./a"),
        ),
        (s.xqd.clone(), Message::new(MessageType::InfoRequest, &c, &s.xqd).with_header("Request", "*")),
        (x0.clone(), Message::new(MessageType::InfoRequest, &c, &x0).with_header("Request", "Node-Name Admin")),
        (x0.clone(), Message::new(MessageType::Register, &c, &x0)),
        (x0.clone(), Message::new(MessageType::XmlQuery, &c, &x0).with_header("Transaction-ID", "1").with_body(vec![0xff])),
        (x0.clone(), Message::new(MessageType::XmlQuery, &c, &x0).with_header("Transaction-ID", "1").with_body("./a")),
    ]
}

fn run(s: &Setup) -> Vec<Vec<u8>> {
    for x in &s.xdps {
        x.join().unwrap();
    }
    script(s)
        .into_iter()
        .map(|(target, m)| s.transport.request(&target, &m, Duration::from_secs(10)).unwrap().to_bytes().unwrap())
        .collect()
}

#[test]
fn tcp_and_memory_networks_answer_identically() {
    let ids: Vec<NodeIdentifier> = (0..3).map(|_| id(&format!("dxqp://127.0.0.1:{}/", free_port()))).collect();
    let over_tcp = run(&start(Arc::new(TcpTransport::new()), &ids));
    let in_memory = run(&start(Arc::new(MemNetwork::new()), &ids));
    assert_eq!(over_tcp.len(), in_memory.len());
    for (i, (t, m)) in over_tcp.iter().zip(&in_memory).enumerate() {
        assert_eq!(String::from_utf8_lossy(t), String::from_utf8_lossy(m), "exchange {i}");
    }
    let first = Message::parse(&over_tcp[0]).unwrap();
    assert_eq!(first.body_str(), Some("<result><a>1</a><a>2</a></result>"));
}

#[test]
fn tcp_channels_carry_many_sequential_exchanges() {
    let xqd = id(&format!("dxqp://127.0.0.1:{}/", free_port()));
    let transport: Arc<dyn Transport> = Arc::new(TcpTransport::new());
    let handle = transport
        .listen(&xqd, &xqd, Arc::new(|m: Message| Message::new(MessageType::Ok, &m.msg_to(), &m.msg_from())))
        .unwrap();
    for _ in 0..200 {
        let reply = transport
            .request(&xqd, &Message::new(MessageType::InfoRequest, &NodeIdentifier::empty(), &xqd), Duration::from_secs(5))
            .unwrap();
        assert_eq!(reply.msg_type, MessageType::Ok);
    }
    handle.close();
}

#[test]
fn tcp_reports_refused_connections() {
    let target = id(&format!("dxqp://127.0.0.1:{}/", free_port()));
    let err = TcpTransport::new()
        .request(&target, &Message::new(MessageType::Ok, &NodeIdentifier::empty(), &target), Duration::from_secs(1))
        .unwrap_err();
    assert_eq!(err.kind(), dxq::transport::FailureKind::Connect);
}
