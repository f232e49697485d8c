//! Python bindings for the dxq crate.

use std::sync::Mutex;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use dxq::client::ClientError;
use dxq::demo;
use dxq::merge::{self, MergeRequest, XdpResult};
use dxq::protocol::{self as proto, MessageType, NodeIdentifier, NodeName, TransactionId};
use dxq::query::{parse_fragment, parse_xml, serialize_nodes, QueryProcessor, SubsetProcessor};
use dxq::transport::{Fault, FaultRule};

create_exception!(pydxq, ProtocolError, PyException, "The peer answered with a DXQP ERROR message.");
create_exception!(pydxq, TransportError, PyException, "No usable response reached the requester.");

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn client_err(e: ClientError) -> PyErr {
    match e {
        ClientError::Protocol { code, detail, .. } => ProtocolError::new_err((code.value(), detail)),
        ClientError::Transport(t) => TransportError::new_err(t.to_string()),
        other => ProtocolError::new_err((0u16, other.to_string())),
    }
}

fn identifier(s: &str) -> PyResult<NodeIdentifier> {
    NodeIdentifier::new(s).map_err(value_err)
}

fn merge_request(algorithm: &str, depth: Option<u32>, query: Option<String>) -> PyResult<MergeRequest> {
    match merge::Algorithm::from_name(algorithm) {
        Some(merge::Algorithm::Concatenate) => Ok(MergeRequest::Concatenate),
        Some(merge::Algorithm::RemoveDuplicates) => Ok(MergeRequest::RemoveDuplicates {
            depth: depth.ok_or_else(|| value_err("remove-duplicates needs depth"))?,
        }),
        Some(merge::Algorithm::UserDefined) => Ok(MergeRequest::UserDefined {
            query: query.ok_or_else(|| value_err("user-defined needs query"))?,
        }),
        None => Err(value_err(format!("unknown merge algorithm {algorithm:?}"))),
    }
}

/// A DXQP message.
#[pyclass(name = "Message", module = "pydxq")]
pub struct PyMessage {
    inner: proto::Message,
}

#[pymethods]
impl PyMessage {
    #[new]
    #[pyo3(signature = (msg_type, msg_from = "", msg_to = ""))]
    fn new(msg_type: &str, msg_from: &str, msg_to: &str) -> PyResult<Self> {
        let t = MessageType::from_token(msg_type).ok_or_else(|| value_err(format!("unknown message type {msg_type:?}")))?;
        Ok(Self {
            inner: proto::Message::new(t, &identifier(msg_from)?, &identifier(msg_to)?),
        })
    }

    /// Parses one complete frame.
    #[staticmethod]
    fn parse(data: &[u8]) -> PyResult<Self> {
        proto::Message::parse(data)
            .map(|inner| Self { inner })
            .map_err(|f| ProtocolError::new_err((f.code.value(), f.detail())))
    }

    #[getter]
    fn msg_type(&self) -> &'static str {
        self.inner.msg_type.as_str()
    }

    #[getter]
    fn version(&self) -> String {
        self.inner.version.to_string()
    }

    #[getter]
    fn headers(&self) -> Vec<(String, String)> {
        self.inner
            .headers()
            .iter()
            .map(|h| (h.name().to_string(), h.value().to_string()))
            .collect()
    }

    fn header(&self, name: &str) -> Option<String> {
        self.inner.header(name).map(str::to_string)
    }

    fn set_header(&mut self, name: &str, value: &str) -> PyResult<()> {
        self.inner.set_header(name, value).map_err(value_err)
    }

    fn remove_header(&mut self, name: &str) {
        self.inner.remove_header(name);
    }

    #[getter]
    fn body<'py>(&self, py: Python<'py>) -> Option<Bound<'py, PyBytes>> {
        self.inner.body().map(|b| PyBytes::new(py, b))
    }

    /// Replaces the body and keeps Content-Length in step.
    fn set_body(&mut self, body: &[u8]) {
        self.inner.set_body(body);
    }

    #[getter]
    fn transaction_id(&self) -> Option<String> {
        self.inner.transaction_id().map(str::to_string)
    }

    #[getter]
    fn error_code(&self) -> Option<u16> {
        self.inner.error_code().map(|c| c.value())
    }

    /// Wire bytes, optionally with headers in canonical order.
    #[pyo3(signature = (canonical = false))]
    fn to_bytes<'py>(&self, py: Python<'py>, canonical: bool) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = proto::serialize_message(&self.inner, canonical).map_err(value_err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("<Message {} from={:?} to={:?}>", self.inner.msg_type, self.inner.msg_from().as_str(), self.inner.msg_to().as_str())
    }
}

#[pyfunction]
fn parse_result_sources(value: &str) -> PyResult<Vec<String>> {
    proto::parse_result_sources(value)
        .map(|names| names.into_iter().map(|n| n.as_str().to_string()).collect())
        .map_err(value_err)
}

#[pyfunction]
fn format_result_sources(names: Vec<String>) -> PyResult<String> {
    let names = names.into_iter().map(NodeName::new).collect::<Result<Vec<_>, _>>().map_err(value_err)?;
    Ok(proto::format_result_sources(&names))
}

/// Canonical serialization of an XML fragment.
#[pyfunction]
fn canonical_xml(xml: &str) -> PyResult<String> {
    parse_fragment(xml).map(|nodes| serialize_nodes(&nodes)).map_err(value_err)
}

/// Evaluates a query against a single-rooted document.
#[pyfunction]
fn run_query(query: &str, document: &str) -> PyResult<String> {
    let doc = parse_xml(document).map_err(value_err)?;
    SubsetProcessor.execute(query, &doc).map_err(value_err)
}

#[pyfunction]
fn merge_algorithms() -> Vec<String> {
    merge::list_algorithms().into_iter().map(|n| n.as_str().to_string()).collect()
}

/// Merges `(source name, result body)` pairs with the named algorithm.
#[pyfunction]
#[pyo3(signature = (algorithm, results, depth = None, query = None))]
fn merge_results(algorithm: &str, results: Vec<(String, Vec<u8>)>, depth: Option<u32>, query: Option<String>) -> PyResult<String> {
    let request = merge_request(algorithm, depth, query)?;
    let results = results
        .into_iter()
        .map(|(name, body)| XdpResult::parse(NodeName::new(name).map_err(value_err)?, &body).map_err(value_err))
        .collect::<PyResult<Vec<_>>>()?;
    merge::merge(&request, &results, &SubsetProcessor).map_err(|e| ProtocolError::new_err((e.code().value(), e.to_string())))
}

/// The example network (an XQD with two XDPs) running in-process.
#[pyclass(name = "ExampleNetwork", module = "pydxq")]
pub struct PyExampleNetwork {
    inner: Mutex<demo::ExampleNetwork>,
}

impl PyExampleNetwork {
    fn with<T>(&self, f: impl FnOnce(&demo::ExampleNetwork) -> T) -> T {
        f(&self.inner.lock().expect("network lock"))
    }
}

#[pymethods]
impl PyExampleNetwork {
    /// `sign_off` makes XDPs send RMFROMDL before UNREGISTER when leaving.
    #[new]
    #[pyo3(signature = (sign_off = true))]
    fn new(sign_off: bool) -> PyResult<Self> {
        let net = demo::ExampleNetwork::start(sign_off).map_err(|e| TransportError::new_err(e.to_string()))?;
        Ok(Self { inner: Mutex::new(net) })
    }

    #[classattr]
    const XQD: &'static str = demo::XQD;
    #[classattr]
    const XDPS: (&'static str, &'static str) = (demo::PHYSNET, demo::MIRROR);

    fn join_all(&self) -> PyResult<()> {
        self.with(|n| n.join_all()).map_err(|e| ProtocolError::new_err((0u16, e.to_string())))
    }

    fn leave_all(&self) -> PyResult<()> {
        self.with(|n| n.leave_all()).map_err(|e| ProtocolError::new_err((0u16, e.to_string())))
    }

    /// Runs one client transaction; returns the merged body and its sources.
    #[pyo3(signature = (query, algorithm = "concatenate", depth = None, merge_query = None, txn = "0"))]
    fn query(
        &self,
        query: &str,
        algorithm: &str,
        depth: Option<u32>,
        merge_query: Option<String>,
        txn: &str,
    ) -> PyResult<(String, Vec<String>)> {
        let request = merge_request(algorithm, depth, merge_query)?;
        let txn = TransactionId::new(txn).map_err(value_err)?;
        let outcome = self.with(|n| n.client().query(query, &request, &txn)).map_err(client_err)?;
        Ok((
            outcome.body_str().to_string(),
            outcome.sources.iter().map(|s| s.as_str().to_string()).collect(),
        ))
    }

    /// INFO-REQUEST to any node; returns the reply's data headers.
    #[pyo3(signature = (target, request = "*"))]
    fn info(&self, target: &str, request: &str) -> PyResult<Vec<(String, String)>> {
        let target = identifier(target)?;
        let reply = self.with(|n| n.client().info(&target, request)).map_err(client_err)?;
        Ok(reply
            .headers()
            .iter()
            .filter(|h| !matches!(h.name(), proto::MSG_FROM | proto::MSG_TO))
            .map(|h| (h.name().to_string(), h.value().to_string()))
            .collect())
    }

    fn distribution_list(&self) -> Vec<String> {
        self.with(|n| n.xqd.distribution_list().iter().map(|i| i.as_str().to_string()).collect())
    }

    /// Makes a node stop answering: requests to it time out.
    #[pyo3(signature = (target, times = None))]
    fn silence(&self, target: &str, times: Option<u32>) -> PyResult<()> {
        let target = identifier(target)?;
        let mut rule = FaultRule::always(Fault::Silent);
        rule.remaining = times;
        self.with(|n| n.network.inject(&target, rule));
        Ok(())
    }

    fn clear_faults(&self, target: &str) -> PyResult<()> {
        let target = identifier(target)?;
        self.with(|n| n.network.clear_faults(&target));
        Ok(())
    }

    /// One connectivity sweep; returns the identifiers removed from the
    /// distribution list and those unregistered.
    fn sweep(&self) -> (Vec<String>, Vec<String>) {
        let report = self.with(|n| n.xqd.sweep());
        let ids = |rs: &[dxq::xqd::XdpRecord]| rs.iter().map(|r| r.identifier.as_str().to_string()).collect();
        (ids(&report.removed_from_dl), ids(&report.unregistered))
    }

    /// Every frame recorded so far, in the order it was observed.
    fn transcript<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyBytes>> {
        self.with(|n| n.recorder.frames())
            .iter()
            .map(|f| PyBytes::new(py, &f.bytes))
            .collect()
    }
}

#[pymodule]
fn pydxq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ProtocolError", m.py().get_type::<ProtocolError>())?;
    m.add("TransportError", m.py().get_type::<TransportError>())?;
    m.add_class::<PyMessage>()?;
    m.add_class::<PyExampleNetwork>()?;
    m.add_function(wrap_pyfunction!(parse_result_sources, m)?)?;
    m.add_function(wrap_pyfunction!(format_result_sources, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_xml, m)?)?;
    m.add_function(wrap_pyfunction!(run_query, m)?)?;
    m.add_function(wrap_pyfunction!(merge_algorithms, m)?)?;
    m.add_function(wrap_pyfunction!(merge_results, m)?)?;
    Ok(())
}
