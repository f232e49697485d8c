//! The two-provider example network, wired up in one process.

use std::sync::Arc;

use crate::client::{ClientError, DxqClient, QueryOutcome};
use crate::merge::MergeRequest;
use crate::protocol::{NodeIdentifier, NodeName, TransactionId};
use crate::query::parse_xml;
use crate::transport::{ListenerHandle, MemNetwork, RecordingTransport, Transport, TransportError, WireRecorder};
use crate::xdp::{SessionError, Xdp, XdpConfig};
use crate::xqd::{Xqd, XqdConfig};

pub const XQD: &str = "http://metasearch.isn-oldenburg.de/dxq-xqd/";
pub const PHYSNET: &str = "http://physnet.isn-oldenburg.de/dxq-xdp/";
pub const MIRROR: &str = "http://physnet-mirror.isn-oldenburg.de:8080/dxq-xdp/";
pub const PHYSNET_ADMIN: &str = "Max Mustermann <admin@physnet.isn-oldenburg.de>";
pub const MIRROR_ADMIN: &str = "Bert Beispiel <admin@physnet-mirror.isn-oldenburg.de>";
pub const DOCUMENT: &str = "<document><a>5</a></document>";
pub const QUERY: &str = "let $a := ./a return $a";
/// As read from a query file, trailing newline included.
pub const MERGE_QUERY: &str = "let $r := <a>{sum(./result/xqres/a)}</a> return $r\n";
/// Seed whose first client identifier is `http://a6bf278d`.
pub const SEED: u32 = 0xa6bf_278d;

fn id(s: &str) -> NodeIdentifier {
    NodeIdentifier::new(s).expect("example identifiers are valid")
}

/// XQD plus the PhysNet and mirror XDPs on a shared in-memory network, all
/// traffic recorded.
pub struct ExampleNetwork {
    pub network: MemNetwork,
    pub recorder: Arc<WireRecorder>,
    pub transport: Arc<dyn Transport>,
    pub xqd: Xqd,
    pub xdps: Vec<Xdp>,
    _listeners: Vec<ListenerHandle>,
}

impl ExampleNetwork {
    /// Starts the nodes. `sign_off` makes leaving XDPs send RMFROMDL before
    /// UNREGISTER; the recorded example transcript has no RMFROMDL.
    pub fn start(sign_off: bool) -> Result<Self, TransportError> {
        let network = MemNetwork::new();
        let recorder = WireRecorder::new();
        let transport: Arc<dyn Transport> = Arc::new(RecordingTransport::new(network.clone(), Arc::clone(&recorder)));

        let mut xqd_config = XqdConfig::new(id(XQD), NodeName::new("MetaSearch").expect("valid name"));
        xqd_config.identifier_seed = Some(SEED);
        let xqd = Xqd::new(xqd_config, Arc::clone(&transport));

        let document = parse_xml(DOCUMENT).expect("example document parses");
        let xdps: Vec<Xdp> = [(PHYSNET, "PhysNet", PHYSNET_ADMIN), (MIRROR, "PhysNet (Mirror)", MIRROR_ADMIN)]
            .into_iter()
            .map(|(ident, name, admin)| {
                let mut config =
                    XdpConfig::new(id(ident), NodeName::new(name).expect("valid name"), id(XQD), document.clone());
                config.admin = admin.to_string();
                config.sign_off_before_unregister = sign_off;
                Xdp::new(config, Arc::clone(&transport))
            })
            .collect();

        let mut listeners = vec![xqd.listen()?];
        for x in &xdps {
            listeners.push(x.listen()?);
        }
        Ok(Self {
            network,
            recorder,
            transport,
            xqd,
            xdps,
            _listeners: listeners,
        })
    }

    pub fn join_all(&self) -> Result<(), SessionError> {
        for x in &self.xdps {
            x.join()?;
        }
        Ok(())
    }

    /// The XQD asks each XDP for its name and administrator.
    pub fn inquire_all(&self) -> Result<(), TransportError> {
        for x in &self.xdps {
            self.xqd.inquire(x.identifier(), &["Node-Name", "Admin"])?;
        }
        Ok(())
    }

    pub fn leave_all(&self) -> Result<(), SessionError> {
        for x in &self.xdps {
            x.leave()?;
        }
        Ok(())
    }

    pub fn client(&self) -> DxqClient {
        DxqClient::new(Arc::clone(&self.transport), id(XQD))
    }

    /// The user-defined sum query, as a client with no identifier yet.
    pub fn run_example_query(&self) -> Result<QueryOutcome, ClientError> {
        self.client().query(
            QUERY,
            &MergeRequest::UserDefined {
                query: MERGE_QUERY.to_string(),
            },
            &TransactionId::new("0").expect("valid id"),
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Runs the whole example: join, inquire, query, leave. Returns the
/// network so its recording can be inspected.
pub fn run_example() -> Result<(ExampleNetwork, QueryOutcome), DemoError> {
    let net = ExampleNetwork::start(false)?;
    net.join_all()?;
    net.inquire_all()?;
    let outcome = net.run_example_query()?;
    net.leave_all()?;
    Ok((net, outcome))
}
