//! A fake validator network on loopback.
//!
//! Topology files are JSON:
//!
//! ```text
//! {
//!   "name": "example",                       (optional)
//!   "nodes": [
//!     {"public_key": "A", "address": "127.0.0.1:18301",
//!      "block_index": 7,                      (optional, default 0)
//!      "latency_ms": 50,                      (optional)
//!      "quorum_set": <QSET>}
//!   ],
//!   "down": ["A"]                             (optional)
//! }
//! ```
//!
//! Member addresses inside `quorum_set` may be omitted; served responses
//! always carry each member's actual listen address. Nodes that are down
//! have no listening socket, so connections to them are refused.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{NodeId, QuorumSet};
use crate::wire::{self, ConsensusMsg, NodeAddress, QsetDoc, Request, Response};

const ACCEPT_POLL: Duration = Duration::from_millis(2);
const IDLE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyNode {
    pub public_key: NodeId,
    pub address: NodeAddress,
    #[serde(default)]
    pub block_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    pub quorum_set: QsetDoc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<TopologyNode>,
    #[serde(default)]
    pub down: BTreeSet<NodeId>,
}

#[derive(Debug, Error)]
pub enum MocknetError {
    #[error("cannot parse topology: {0}")]
    Parse(String),
    #[error("invalid topology: {0}")]
    Validation(String),
    #[error("cannot bind {address}: {source}")]
    BindFailed {
        address: String,
        #[source]
        source: io::Error,
    },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

pub fn load_topology(path: &Path) -> Result<Topology, MocknetError> {
    let text = fs::read_to_string(path).map_err(|e| MocknetError::Parse(format!("{}: {e}", path.display())))?;
    Topology::from_json(&text)
}

impl Topology {
    pub fn from_json(text: &str) -> Result<Topology, MocknetError> {
        let topology: Topology = serde_json::from_str(text).map_err(|e| MocknetError::Parse(e.to_string()))?;
        topology.validate()?;
        Ok(topology)
    }

    pub fn validate(&self) -> Result<(), MocknetError> {
        let mut keys = HashSet::new();
        let mut addresses = HashSet::new();
        for node in &self.nodes {
            if !keys.insert(&node.public_key) {
                return Err(MocknetError::Validation(format!("duplicate node {}", node.public_key)));
            }
            if !addresses.insert(&node.address) {
                return Err(MocknetError::Validation(format!(
                    "duplicate listen address {}",
                    node.address
                )));
            }
        }
        for node in &self.nodes {
            let qset = QuorumSet::from(node.quorum_set.clone());
            let known = |v: &NodeId| keys.contains(v);
            qset.validate(Some(&known))
                .map_err(|e| MocknetError::Validation(format!("quorum set of {}: {e}", node.public_key)))?;
        }
        if let Some(unknown) = self.down.iter().find(|k| !keys.contains(k)) {
            return Err(MocknetError::Validation(format!(
                "down node {unknown} is not in the topology"
            )));
        }
        Ok(())
    }
}

struct MockNode {
    key: NodeId,
    bind: SocketAddr,
    address: NodeAddress,
    latency: Duration,
    /// Response payload; identical for every query.
    message: ConsensusMsg,
    listener: Mutex<Option<Listener>>,
}

struct Listener {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<()>,
}

/// A running mock network. Dropping it shuts every node down.
pub struct Mocknet {
    nodes: Vec<Arc<MockNode>>,
    by_key: HashMap<NodeId, usize>,
}

/// Serves `topology` on its configured listen addresses.
pub fn serve(topology: &Topology) -> Result<Mocknet, MocknetError> {
    start(topology, false)
}

/// Serves `topology` on free loopback ports chosen by the OS; responses
/// advertise the ports actually bound.
pub fn serve_ephemeral(topology: &Topology) -> Result<Mocknet, MocknetError> {
    start(topology, true)
}

fn start(topology: &Topology, ephemeral: bool) -> Result<Mocknet, MocknetError> {
    topology.validate()?;
    let mut listeners = Vec::with_capacity(topology.nodes.len());
    for node in &topology.nodes {
        let target = if ephemeral {
            "127.0.0.1:0".to_owned()
        } else {
            node.address.to_string()
        };
        let bind_failed = |source| MocknetError::BindFailed {
            address: target.clone(),
            source,
        };
        let listener = TcpListener::bind(target.as_str()).map_err(bind_failed)?;
        listeners.push(listener);
    }
    let bound: Vec<SocketAddr> = listeners
        .iter()
        .map(|l| l.local_addr())
        .collect::<io::Result<_>>()
        .map_err(|source| MocknetError::BindFailed {
            address: "local address".into(),
            source,
        })?;
    let advertised: HashMap<NodeId, NodeAddress> = topology
        .nodes
        .iter()
        .zip(&bound)
        .map(|(n, a)| {
            let address = if ephemeral {
                NodeAddress::new(a.ip().to_string(), a.port())
            } else {
                n.address.clone()
            };
            (n.public_key.clone(), address)
        })
        .collect();

    let mut net = Mocknet {
        nodes: Vec::with_capacity(topology.nodes.len()),
        by_key: HashMap::new(),
    };
    for (i, (node, listener)) in topology.nodes.iter().zip(listeners).enumerate() {
        let qset = QuorumSet::from(node.quorum_set.clone());
        let message = ConsensusMsg {
            sender_id: node.public_key.clone(),
            block_index: node.block_index,
            quorum_set: QsetDoc::with_addresses(&qset, &|k| advertised.get(k).cloned()),
            signature: signature(&node.public_key, node.block_index),
        };
        let mock = Arc::new(MockNode {
            key: node.public_key.clone(),
            bind: bound[i],
            address: advertised[&node.public_key].clone(),
            latency: Duration::from_millis(node.latency_ms.unwrap_or(0)),
            message,
            listener: Mutex::new(None),
        });
        if !topology.down.contains(&node.public_key) {
            mock.listen(listener).map_err(|source| MocknetError::BindFailed {
                address: bound[i].to_string(),
                source,
            })?;
        }
        net.by_key.insert(node.public_key.clone(), i);
        net.nodes.push(mock);
    }
    Ok(net)
}

/// Stand-in for a real consensus signature: deterministic, never verified.
fn signature(key: &NodeId, block_index: u64) -> String {
    let digest = Sha256::digest(format!("{key}/{block_index}").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Mocknet {
    /// Address a node listens on, as advertised in quorum sets.
    pub fn address_of(&self, key: &NodeId) -> Option<NodeAddress> {
        self.by_key.get(key).map(|&i| self.nodes[i].address.clone())
    }

    pub fn keys(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter().map(|n| &n.key)
    }

    pub fn is_up(&self, key: &NodeId) -> Result<bool, MocknetError> {
        let node = self.node(key)?;
        let up = node.listener.lock().expect("listener lock").is_some();
        Ok(up)
    }

    /// Takes a node down or brings it back. Returns once the change is in
    /// effect for new connections.
    pub fn inject_fault(&self, key: &NodeId, up: bool) -> Result<(), MocknetError> {
        let node = self.node(key)?;
        let bind_failed = |source| MocknetError::BindFailed {
            address: node.bind.to_string(),
            source,
        };
        if up {
            let mut guard = node.listener.lock().expect("listener lock");
            if guard.is_none() {
                let listener = TcpListener::bind(node.bind).map_err(bind_failed)?;
                *guard = Some(Listener::spawn(Arc::clone(node), listener).map_err(bind_failed)?);
            }
        } else {
            node.stop();
        }
        Ok(())
    }

    pub fn shutdown(&self) {
        for node in &self.nodes {
            node.stop();
        }
    }

    fn node(&self, key: &NodeId) -> Result<&Arc<MockNode>, MocknetError> {
        self.by_key
            .get(key)
            .map(|&i| &self.nodes[i])
            .ok_or_else(|| MocknetError::UnknownNode(key.clone()))
    }
}

impl Drop for Mocknet {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl MockNode {
    fn listen(self: &Arc<Self>, listener: TcpListener) -> io::Result<()> {
        let spawned = Listener::spawn(Arc::clone(self), listener)?;
        *self.listener.lock().expect("listener lock") = Some(spawned);
        Ok(())
    }

    /// Closes the listening socket; waits until it is gone.
    fn stop(&self) {
        let taken = self.listener.lock().expect("listener lock").take();
        if let Some(l) = taken {
            l.stop.store(true, Ordering::SeqCst);
            let _ = l.thread.join();
        }
    }

    fn handle(&self, stream: TcpStream) -> io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_read_timeout(Some(IDLE_TIMEOUT))?;
        let mut writer = stream.try_clone()?;
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let response = match serde_json::from_str::<Request>(&line) {
                Ok(req) if req.method == wire::GET_LATEST_MSG => Response::ok(req.id, self.message.clone()),
                Ok(req) => Response::err(req.id, wire::METHOD_NOT_FOUND, format!("unknown method {}", req.method)),
                Err(e) => Response::err(0, wire::PARSE_ERROR, e.to_string()),
            };
            if !self.latency.is_zero() {
                thread::sleep(self.latency);
            }
            writer.write_all(wire::to_line(&response).as_bytes())?;
        }
        Ok(())
    }
}

impl Listener {
    fn spawn(node: Arc<MockNode>, listener: TcpListener) -> io::Result<Listener> {
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = thread::Builder::new()
            .name(format!("mock-{}", node.key))
            .spawn(move || {
                while !flag.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let node = Arc::clone(&node);
                            thread::spawn(move || {
                                if let Err(e) = node.handle(stream) {
                                    log::debug!("mock {}: connection ended: {e}", node.key);
                                }
                            });
                        }
                        Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                        Err(e) => {
                            log::warn!("mock {}: accept failed: {e}", node.key);
                            thread::sleep(ACCEPT_POLL);
                        }
                    }
                }
            })?;
        Ok(Listener { stop, thread })
    }
}

/// A fault-injection command, one JSON object per line:
/// `{"node":"<key>","state":"up"|"down"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub node: NodeId,
    pub state: NodeState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeState {
    Up,
    Down,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlReply {
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Mocknet {
    /// Applies one control line and returns the reply.
    pub fn apply_control(&self, line: &str) -> ControlReply {
        let result = serde_json::from_str::<ControlCommand>(line)
            .map_err(|e| e.to_string())
            .and_then(|cmd| {
                self.inject_fault(&cmd.node, cmd.state == NodeState::Up)
                    .map_err(|e| e.to_string())
            });
        match result {
            Ok(()) => ControlReply { ok: true, error: None },
            Err(e) => ControlReply {
                ok: false,
                error: Some(e),
            },
        }
    }

    /// Accepts control connections on `address` until `stop` is set.
    pub fn serve_control(&self, address: impl ToSocketAddrs, stop: &AtomicBool) -> Result<(), MocknetError> {
        let listener = TcpListener::bind(address).map_err(|source| MocknetError::BindFailed {
            address: "control".into(),
            source,
        })?;
        self.serve_control_on(listener, stop);
        Ok(())
    }

    pub fn serve_control_on(&self, listener: TcpListener, stop: &AtomicBool) {
        if let Err(e) = listener.set_nonblocking(true) {
            log::error!("control listener: {e}");
            return;
        }
        thread::scope(|scope| {
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        scope.spawn(move || {
                            if let Err(e) = self.control_session(stream, stop) {
                                log::debug!("control connection ended: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL * 5),
                    Err(e) => {
                        log::warn!("control accept failed: {e}");
                        thread::sleep(ACCEPT_POLL * 5);
                    }
                }
            }
        });
    }

    fn control_session(&self, stream: TcpStream, stop: &AtomicBool) -> io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_read_timeout(Some(Duration::from_millis(200)))?;
        let mut writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        let mut line = String::new();
        while !stop.load(Ordering::SeqCst) {
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if !line.trim().is_empty() {
                        let reply = self.apply_control(line.trim());
                        log::info!("control: {} -> ok={}", line.trim(), reply.ok);
                        writer.write_all(wire::to_line(&reply).as_bytes())?;
                    }
                    line.clear();
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::MOBILECOIN_2021_TOPOLOGY;

    #[test]
    fn fixture_topology() {
        let topology = Topology::from_json(MOBILECOIN_2021_TOPOLOGY).unwrap();
        assert_eq!(topology.nodes.len(), 10);
        for node in &topology.nodes {
            let qset = QuorumSet::from(node.quorum_set.clone());
            assert_eq!(qset.threshold, 7);
            assert_eq!(qset.validators.len(), 9);
            assert!(!qset.validators.contains(&node.public_key));
        }
    }

    #[test]
    fn topology_validation() {
        let mut topology = Topology::from_json(MOBILECOIN_2021_TOPOLOGY).unwrap();
        topology.nodes[1].address = topology.nodes[0].address.clone();
        assert!(matches!(topology.validate(), Err(MocknetError::Validation(_))));

        let unknown = MOBILECOIN_2021_TOPOLOGY.replacen("\"public_key\": \"MC2\"\n", "\"public_key\": \"ZZ\"\n", 1);
        assert!(matches!(
            Topology::from_json(&unknown),
            Err(MocknetError::Validation(_))
        ));
        assert!(matches!(
            Topology::from_json("{\"nodes\": 3}"),
            Err(MocknetError::Parse(_))
        ));
    }

    #[test]
    fn signatures_are_stable_hex() {
        let sig = signature(&"MC1".into(), 1);
        assert_eq!(sig.len(), 64);
        assert_eq!(sig, signature(&"MC1".into(), 1));
        assert_ne!(sig, signature(&"MC2".into(), 1));
    }
}
