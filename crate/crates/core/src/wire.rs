//! Newline-delimited JSON protocol spoken between the crawler and validators.
//!
//! ```text
//! request:  {"method":"get_latest_msg","id":<u64>}
//! response: {"id":<u64>,"result":{"sender_id":..,"block_index":..,"quorum_set":<QSET>,"signature":".."}}
//! error:    {"id":<u64>,"error":{"code":<int>,"message":".."}}
//! <QSET>   := {"threshold":<u32>,"members":[<MEMBER>...]}
//! <MEMBER> := {"type":"node","public_key":"..","address":"host:port"}
//!           | {"type":"inner_set","quorum_set":<QSET>}
//! ```
//!
//! The same QSET schema is used in snapshot and topology files, where member
//! addresses are optional.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{NodeId, QuorumSet};

pub const GET_LATEST_MSG: &str = "get_latest_msg";

/// JSON-RPC style code for an unknown method.
pub const METHOD_NOT_FOUND: i64 = -32601;
/// JSON-RPC style code for an unparseable request.
pub const PARSE_ERROR: i64 = -32700;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QsetDoc {
    pub threshold: u32,
    pub members: Vec<MemberDoc>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MemberDoc {
    Node {
        public_key: NodeId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        address: Option<NodeAddress>,
    },
    InnerSet {
        quorum_set: QsetDoc,
    },
}

impl QsetDoc {
    /// Document form with an address attached to every node member that
    /// `address_of` knows.
    pub fn with_addresses(qset: &QuorumSet, address_of: &dyn Fn(&NodeId) -> Option<NodeAddress>) -> QsetDoc {
        let mut members: Vec<MemberDoc> = qset
            .validators
            .iter()
            .map(|v| MemberDoc::Node {
                public_key: v.clone(),
                address: address_of(v),
            })
            .collect();
        members.extend(qset.inner_sets.iter().map(|q| MemberDoc::InnerSet {
            quorum_set: QsetDoc::with_addresses(q, address_of),
        }));
        QsetDoc {
            threshold: qset.threshold,
            members,
        }
    }

    /// Every node member at every level, with its advertised address.
    pub fn addressed_members(&self) -> Vec<(NodeId, Option<NodeAddress>)> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<(NodeId, Option<NodeAddress>)>) {
        for m in &self.members {
            match m {
                MemberDoc::Node { public_key, address } => out.push((public_key.clone(), address.clone())),
                MemberDoc::InnerSet { quorum_set } => quorum_set.collect(out),
            }
        }
    }
}

impl From<QsetDoc> for QuorumSet {
    fn from(doc: QsetDoc) -> Self {
        let mut qset = QuorumSet::new(doc.threshold, vec![], vec![]);
        for m in doc.members {
            match m {
                MemberDoc::Node { public_key, .. } => qset.validators.push(public_key),
                MemberDoc::InnerSet { quorum_set } => qset.inner_sets.push(quorum_set.into()),
            }
        }
        qset
    }
}

impl From<QuorumSet> for QsetDoc {
    fn from(qset: QuorumSet) -> Self {
        QsetDoc::with_addresses(&qset, &|_| None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("address {0:?} is not of the form host:port")]
    Format(String),
    #[error("address {0:?} has an invalid port")]
    Port(String),
}

/// A validator's network-layer address.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeAddress {
    pub host: String,
    pub port: u16,
}

impl NodeAddress {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        NodeAddress {
            host: host.into(),
            port,
        }
    }

    /// The host as an IP literal, if it is one.
    pub fn ip(&self) -> Option<std::net::IpAddr> {
        self.host.parse().ok()
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.host.contains(':') {
            write!(f, "[{}]:{}", self.host, self.port)
        } else {
            write!(f, "{}:{}", self.host, self.port)
        }
    }
}

impl FromStr for NodeAddress {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (host, port) = s.rsplit_once(':').ok_or_else(|| AddressError::Format(s.to_owned()))?;
        let host = host.strip_prefix('[').and_then(|h| h.strip_suffix(']')).unwrap_or(host);
        if host.is_empty() || (host.contains(':') && !s.starts_with('[')) {
            return Err(AddressError::Format(s.to_owned()));
        }
        let port: u16 = port.parse().map_err(|_| AddressError::Port(s.to_owned()))?;
        if port == 0 {
            return Err(AddressError::Port(s.to_owned()));
        }
        Ok(NodeAddress::new(host, port))
    }
}

impl Serialize for NodeAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub method: String,
    pub id: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusMsg {
    pub sender_id: NodeId,
    pub block_index: u64,
    pub quorum_set: QsetDoc,
    pub signature: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<ConsensusMsg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<RpcError>,
}

impl Response {
    pub fn ok(id: u64, result: ConsensusMsg) -> Self {
        Response {
            id,
            result: Some(result),
            error: None,
        }
    }

    pub fn err(id: u64, code: i64, message: impl Into<String>) -> Self {
        Response {
            id,
            result: None,
            error: Some(RpcError {
                code,
                message: message.into(),
            }),
        }
    }
}

/// Serializes `value` as a single protocol line, newline included.
pub fn to_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("protocol types serialize");
    line.push('\n');
    line
}
