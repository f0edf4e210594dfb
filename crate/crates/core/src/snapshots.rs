//! Crawl snapshots and their on-disk series.
//!
//! A snapshot file is pretty-printed UTF-8 JSON with LF line endings and a
//! fixed key order:
//!
//! | field            | type                 | notes                                   |
//! |------------------|----------------------|-----------------------------------------|
//! | `schema_version` | integer              | currently `1`                           |
//! | `timestamp`      | RFC 3339 UTC string  | crawl start                             |
//! | `duration_ms`    | integer              | wall-clock crawl time                   |
//! | `bootstrap`      | array of `host:port` | addresses the crawl started from        |
//! | `records`        | array of records     | one per public key, sorted by key       |
//!
//! Each record carries `public_key`, `address` (absent if never advertised),
//! `hostname` (optional), `active`, `reason` (why an inactive node was not
//! crawled), `block_index`, `signature`, `quorum_set` (QSET schema without
//! member addresses) and `metadata` (organisation, country, isp, source).
//!
//! A series directory holds one file per crawl named
//! `YYYYMMDDTHHMMSSZ.json`, so lexical order is chronological.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enrichment::NodeMetadata;
use crate::model::{Fbas, FbasError, NodeEntry, NodeId, QuorumSet};
use crate::wire::NodeAddress;

pub const SCHEMA_VERSION: u32 = 1;

const FILENAME_FORMAT: &str = "%Y%m%dT%H%M%SZ";

/// One crawled (or merely referenced) validator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub public_key: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<NodeAddress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hostname: Option<String>,
    pub active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
    pub quorum_set: QuorumSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<NodeMetadata>,
}

impl NodeRecord {
    /// A node seen only as a quorum-set member: inactive, trivial quorum set.
    pub fn inactive(public_key: NodeId, address: Option<NodeAddress>, reason: impl Into<String>) -> Self {
        let hostname = address.as_ref().and_then(hostname_of);
        NodeRecord {
            public_key,
            address,
            hostname,
            active: false,
            reason: Some(reason.into()),
            block_index: None,
            signature: None,
            quorum_set: QuorumSet::trivial(),
            metadata: None,
        }
    }
}

/// The address host when it is a DNS name rather than an IP literal.
pub fn hostname_of(address: &NodeAddress) -> Option<String> {
    match address.ip() {
        Some(_) => None,
        None => Some(address.host.clone()),
    }
}

/// Result of one full crawl.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlSnapshot {
    pub timestamp: DateTime<Utc>,
    pub duration_ms: u64,
    pub bootstrap: Vec<NodeAddress>,
    pub records: Vec<NodeRecord>,
}

impl CrawlSnapshot {
    pub fn active_count(&self) -> usize {
        self.records.iter().filter(|r| r.active).count()
    }

    pub fn record(&self, key: &NodeId) -> Option<&NodeRecord> {
        self.records.iter().find(|r| &r.public_key == key)
    }

    /// The FBAS described by the records, in record order.
    pub fn to_fbas(&self) -> Result<Fbas, FbasError> {
        Fbas::new(
            self.records
                .iter()
                .map(|r| NodeEntry::new(r.public_key.clone(), r.quorum_set.clone(), r.active)),
        )
    }

    /// Same content ignoring when the crawl ran and how long it took.
    pub fn same_content(&self, other: &CrawlSnapshot) -> bool {
        self.bootstrap == other.bootstrap && self.records == other.records
    }

    /// File name within a series directory.
    pub fn file_name(&self) -> String {
        format!("{}.json", self.timestamp.format(FILENAME_FORMAT))
    }

    /// The canonical file contents.
    pub fn to_json(&self) -> String {
        let doc = SnapshotDocRef {
            schema_version: SCHEMA_VERSION,
            timestamp: &self.timestamp,
            duration_ms: self.duration_ms,
            bootstrap: &self.bootstrap,
            records: &self.records,
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("snapshot serializes");
        out.push('\n');
        out
    }

    /// Parses and validates file contents.
    pub fn from_json(text: &str) -> Result<CrawlSnapshot, SnapshotError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| SnapshotError::Parse(e.to_string()))?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(SnapshotError::SchemaVersionUnsupported(v)),
            None => return Err(SnapshotError::Parse("missing schema_version".into())),
        }
        let doc: SnapshotDoc = serde_json::from_value(value).map_err(|e| SnapshotError::Parse(e.to_string()))?;
        let snapshot = CrawlSnapshot {
            timestamp: doc.timestamp,
            duration_ms: doc.duration_ms,
            bootstrap: doc.bootstrap,
            records: doc.records,
        };
        snapshot.to_fbas()?;
        Ok(snapshot)
    }
}

#[derive(Serialize)]
struct SnapshotDocRef<'a> {
    schema_version: u32,
    timestamp: &'a DateTime<Utc>,
    duration_ms: u64,
    bootstrap: &'a [NodeAddress],
    records: &'a [NodeRecord],
}

#[derive(Deserialize)]
#[allow(dead_code)]
struct SnapshotDoc {
    schema_version: u32,
    timestamp: DateTime<Utc>,
    duration_ms: u64,
    bootstrap: Vec<NodeAddress>,
    records: Vec<NodeRecord>,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot store {path} unavailable: {source}")]
    StoreUnavailable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("a snapshot for this timestamp already exists at {0}")]
    DuplicateTimestamp(PathBuf),
    #[error("cannot parse snapshot: {0}")]
    Parse(String),
    #[error("unsupported snapshot schema version {0}")]
    SchemaVersionUnsupported(u64),
    #[error("invalid snapshot: {0}")]
    Validation(#[from] FbasError),
}

/// Writes the snapshot into `dir` atomically and returns its path.
pub fn save_snapshot(snapshot: &CrawlSnapshot, dir: &Path) -> Result<PathBuf, SnapshotError> {
    let unavailable = |source| SnapshotError::StoreUnavailable {
        path: dir.to_path_buf(),
        source,
    };
    let path = dir.join(snapshot.file_name());
    if path.exists() {
        return Err(SnapshotError::DuplicateTimestamp(path));
    }
    let mut tmp = tempfile::Builder::new()
        .prefix(".snapshot-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(unavailable)?;
    tmp.write_all(snapshot.to_json().as_bytes()).map_err(unavailable)?;
    tmp.as_file().sync_all().map_err(unavailable)?;
    match tmp.persist_noclobber(&path) {
        Ok(_) => Ok(path),
        Err(e) if e.error.kind() == io::ErrorKind::AlreadyExists => Err(SnapshotError::DuplicateTimestamp(path)),
        Err(e) => Err(unavailable(e.error)),
    }
}

pub fn load_snapshot(path: &Path) -> Result<CrawlSnapshot, SnapshotError> {
    let text = fs::read_to_string(path).map_err(|e| SnapshotError::Parse(format!("{}: {e}", path.display())))?;
    CrawlSnapshot::from_json(&text)
}

/// Contents of a series directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Series {
    /// Snapshot files in chronological order.
    pub snapshots: Vec<PathBuf>,
    /// Other entries, skipped.
    pub ignored: Vec<PathBuf>,
}

/// Timestamp encoded in a snapshot file name.
pub fn parse_file_name(name: &str) -> Option<DateTime<Utc>> {
    let stem = name.strip_suffix(".json")?;
    NaiveDateTime::parse_from_str(stem, FILENAME_FORMAT)
        .ok()
        .filter(|t| t.format(FILENAME_FORMAT).to_string() == stem)
        .map(|t| t.and_utc())
}

pub fn list_series(dir: &Path) -> Result<Series, SnapshotError> {
    let unavailable = |source| SnapshotError::StoreUnavailable {
        path: dir.to_path_buf(),
        source,
    };
    let mut stamped = Vec::new();
    let mut ignored = Vec::new();
    for entry in fs::read_dir(dir).map_err(unavailable)? {
        let entry = entry.map_err(unavailable)?;
        let path = entry.path();
        let stamp = entry.file_name().to_str().and_then(parse_file_name);
        match stamp {
            Some(t) if path.is_file() => stamped.push((t, path)),
            _ => {
                log::warn!("ignoring {} in snapshot series", path.display());
                ignored.push(path);
            }
        }
    }
    stamped.sort();
    ignored.sort();
    Ok(Series {
        snapshots: stamped.into_iter().map(|(_, p)| p).collect(),
        ignored,
    })
}
