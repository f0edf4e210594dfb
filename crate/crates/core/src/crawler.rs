//! Discovers validators by following quorum-set membership.
//!
//! Starting from bootstrap addresses, every responsive node contributes the
//! members of its quorum set (with their advertised addresses) to the next
//! wave. The crawl ends once a wave discovers nobody new. Nodes that are
//! referenced but never answer stay in the snapshot as inactive records.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use chrono::{DurationRound, TimeDelta, Utc};
use thiserror::Error;

use crate::model::{NodeId, QuorumSet};
use crate::snapshots::{self, hostname_of, CrawlSnapshot, NodeRecord, SnapshotError};
use crate::wire::{self, ConsensusMsg, MemberDoc, NodeAddress, Request, Response};

/// Longest response line accepted from a node.
const MAX_LINE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("connection failed: {0}")]
    ConnectFailed(String),
    #[error("timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("node returned error {code}: {message}")]
    Rpc { code: i64, message: String },
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock)
}

/// One `get_latest_msg` exchange with the node at `address`. The timeout
/// bounds connecting and, separately, the whole request/response exchange.
pub fn query_node(address: &NodeAddress, timeout: Duration) -> Result<ConsensusMsg, QueryError> {
    let target = (address.host.as_str(), address.port)
        .to_socket_addrs()
        .map_err(|e| QueryError::ConnectFailed(format!("{address}: {e}")))?
        .next()
        .ok_or_else(|| QueryError::ConnectFailed(format!("{address}: no address")))?;
    let stream = TcpStream::connect_timeout(&target, timeout).map_err(|e| {
        if is_timeout(&e) {
            QueryError::Timeout
        } else {
            QueryError::ConnectFailed(format!("{address}: {e}"))
        }
    })?;
    let deadline = Instant::now() + timeout;
    let io_err = |e: io::Error| {
        if is_timeout(&e) {
            QueryError::Timeout
        } else {
            QueryError::ConnectFailed(format!("{address}: {e}"))
        }
    };
    stream.set_write_timeout(Some(timeout)).map_err(io_err)?;
    let id = 1;
    let request = Request {
        method: wire::GET_LATEST_MSG.into(),
        id,
    };
    (&stream)
        .write_all(wire::to_line(&request).as_bytes())
        .map_err(io_err)?;

    let mut reader = BufReader::new((&stream).take(MAX_LINE));
    let mut line = Vec::new();
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(QueryError::Timeout);
        }
        stream.set_read_timeout(Some(remaining)).map_err(io_err)?;
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => break,
            Ok(_) if line.ends_with(b"\n") => break,
            Ok(_) => {
                if line.len() as u64 >= MAX_LINE {
                    return Err(QueryError::MalformedResponse("response line too long".into()));
                }
            }
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(io_err(e)),
        }
    }
    if line.is_empty() {
        return Err(QueryError::MalformedResponse(
            "connection closed without a response".into(),
        ));
    }
    parse_response(&line, id)
}

fn parse_response(line: &[u8], id: u64) -> Result<ConsensusMsg, QueryError> {
    let malformed = |m: String| QueryError::MalformedResponse(m);
    let response: Response = serde_json::from_slice(line).map_err(|e| malformed(e.to_string()))?;
    if response.id != id {
        return Err(malformed(format!(
            "response id {} does not match request id {id}",
            response.id
        )));
    }
    if let Some(error) = response.error {
        return Err(QueryError::Rpc {
            code: error.code,
            message: error.message,
        });
    }
    let msg = response
        .result
        .ok_or_else(|| malformed("neither result nor error".into()))?;
    if msg.sender_id.as_str().is_empty() {
        return Err(malformed("empty sender_id".into()));
    }
    QuorumSet::from(msg.quorum_set.clone())
        .validate(None)
        .map_err(|e| malformed(format!("invalid quorum set: {e}")))?;
    for member in &msg.quorum_set.members {
        if let MemberDoc::Node {
            public_key,
            address: None,
        } = member
        {
            return Err(malformed(format!("member {public_key} has no address")));
        }
    }
    Ok(msg)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrawlConfig {
    pub bootstrap: Vec<NodeAddress>,
    pub timeout: Duration,
    /// Maximum number of requests in flight.
    pub parallel: usize,
    /// Extra attempts per address after a failed one.
    pub retries: u32,
}

impl CrawlConfig {
    pub fn new(bootstrap: Vec<NodeAddress>) -> Self {
        CrawlConfig {
            bootstrap,
            timeout: Duration::from_millis(1000),
            parallel: 8,
            retries: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("crawl configuration: {0}")]
    InvalidConfig(String),
    #[error("no bootstrap node responded")]
    AllBootstrapUnreachable,
}

struct Probe {
    address: NodeAddress,
    /// Key under which the address was advertised; `None` for bootstrap.
    expected: Option<NodeId>,
}

fn query_with_retries(address: &NodeAddress, config: &CrawlConfig) -> Result<ConsensusMsg, QueryError> {
    let mut attempt = 0;
    loop {
        match query_node(address, config.timeout) {
            Ok(msg) => return Ok(msg),
            Err(e) if attempt >= config.retries => return Err(e),
            Err(e) => log::debug!("{address}: {e}, retrying"),
        }
        attempt += 1;
    }
}

/// Runs every probe with at most `parallel` in flight; results are in probe
/// order regardless of completion order.
fn run_wave(probes: &[Probe], config: &CrawlConfig) -> Vec<Result<ConsensusMsg, QueryError>> {
    let slots: Vec<Mutex<Option<Result<ConsensusMsg, QueryError>>>> = probes.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.parallel.clamp(1, probes.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(probe) = probes.get(i) else { break };
                let result = query_with_retries(&probe.address, config);
                *slots[i].lock().expect("result slot") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("result slot").expect("every probe ran"))
        .collect()
}

/// Crawls the network reachable from `config.bootstrap`.
pub fn crawl(config: &CrawlConfig) -> Result<CrawlSnapshot, CrawlError> {
    if config.bootstrap.is_empty() {
        return Err(CrawlError::InvalidConfig("empty bootstrap list".into()));
    }
    if config.timeout.is_zero() {
        return Err(CrawlError::InvalidConfig("timeout must be positive".into()));
    }
    let timestamp = Utc::now()
        .duration_trunc(TimeDelta::milliseconds(1))
        .expect("millisecond truncation");
    let started = Instant::now();

    let mut records: BTreeMap<NodeId, NodeRecord> = BTreeMap::new();
    let mut contacted: HashSet<NodeAddress> = HashSet::new();
    // Keys already queued or recorded; a key's first advertised address wins.
    let mut claimed: HashSet<NodeId> = HashSet::new();
    let mut frontier: Vec<Probe> = Vec::new();
    for address in &config.bootstrap {
        if contacted.insert(address.clone()) {
            frontier.push(Probe {
                address: address.clone(),
                expected: None,
            });
        }
    }

    let mut any_response = false;
    while !frontier.is_empty() {
        log::debug!("crawl wave of {} addresses", frontier.len());
        let results = run_wave(&frontier, config);
        let mut next = Vec::new();
        for (probe, result) in frontier.iter().zip(results) {
            match result {
                Ok(msg) => {
                    any_response = true;
                    let key = msg.sender_id.clone();
                    if records.get(&key).is_some_and(|r| r.active) {
                        log::debug!("{key} also answers at {}; keeping the first address", probe.address);
                        continue;
                    }
                    if let Some(expected) = probe.expected.as_ref().filter(|&e| *e != key) {
                        log::warn!("{} advertised for {expected} answered as {key}", probe.address);
                        records.entry(expected.clone()).or_insert_with(|| {
                            NodeRecord::inactive(
                                expected.clone(),
                                Some(probe.address.clone()),
                                format!("address answered as {key}"),
                            )
                        });
                    }
                    claimed.insert(key.clone());
                    for (member, address) in msg.quorum_set.addressed_members() {
                        let Some(address) = address else { continue };
                        if claimed.contains(&member) {
                            continue;
                        }
                        claimed.insert(member.clone());
                        if contacted.insert(address.clone()) {
                            next.push(Probe {
                                address,
                                expected: Some(member),
                            });
                        } else {
                            records.entry(member.clone()).or_insert_with(|| {
                                NodeRecord::inactive(member, Some(address), "address already crawled for another key")
                            });
                        }
                    }
                    records.insert(
                        key.clone(),
                        NodeRecord {
                            public_key: key,
                            hostname: hostname_of(&probe.address),
                            address: Some(probe.address.clone()),
                            active: true,
                            reason: None,
                            block_index: Some(msg.block_index),
                            signature: Some(msg.signature),
                            quorum_set: msg.quorum_set.into(),
                            metadata: None,
                        },
                    );
                }
                Err(e) => match &probe.expected {
                    Some(key) => {
                        log::info!("{key} at {} unreachable: {e}", probe.address);
                        records.entry(key.clone()).or_insert_with(|| {
                            NodeRecord::inactive(key.clone(), Some(probe.address.clone()), e.to_string())
                        });
                    }
                    None => log::warn!("bootstrap {} unreachable: {e}", probe.address),
                },
            }
        }
        frontier = next;
    }
    if !any_response {
        return Err(CrawlError::AllBootstrapUnreachable);
    }

    // Members advertised without an address (possible inside inner sets).
    let referenced: Vec<NodeId> = records
        .values()
        .flat_map(|r| r.quorum_set.transitive_members())
        .collect();
    for member in referenced {
        records
            .entry(member.clone())
            .or_insert_with(|| NodeRecord::inactive(member, None, "no address advertised"));
    }

    Ok(CrawlSnapshot {
        timestamp,
        duration_ms: started.elapsed().as_millis() as u64,
        bootstrap: config.bootstrap.clone(),
        records: records.into_values().collect(),
    })
}

/// When and how often [`crawl_loop`] runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    /// Crawls start on multiples of this interval since the Unix epoch.
    pub interval: Duration,
    /// Stop after this many ticks; run until stopped if `None`.
    pub max_ticks: Option<u64>,
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct LoopSummary {
    pub ticks: u64,
    pub saved: Vec<PathBuf>,
    pub failures: u64,
}

/// Crawls at every interval boundary and stores each snapshot in `store`.
pub fn crawl_loop(
    config: &CrawlConfig,
    schedule: &Schedule,
    store: &Path,
    stop: &AtomicBool,
) -> Result<LoopSummary, SnapshotError> {
    run_loop(schedule, store, stop, |_| crawl(config))
}

/// The loop behind [`crawl_loop`] with a custom per-tick crawl. A failed
/// tick is logged and skipped; an unusable store aborts the loop.
pub fn run_loop<F>(
    schedule: &Schedule,
    store: &Path,
    stop: &AtomicBool,
    mut tick: F,
) -> Result<LoopSummary, SnapshotError>
where
    F: FnMut(u64) -> Result<CrawlSnapshot, CrawlError>,
{
    let interval = schedule.interval.max(Duration::from_secs(1));
    let mut summary = LoopSummary::default();
    while schedule.max_ticks.is_none_or(|max| summary.ticks < max) {
        if !sleep_until_boundary(interval, stop) {
            break;
        }
        summary.ticks += 1;
        match tick(summary.ticks) {
            Ok(snapshot) => match snapshots::save_snapshot(&snapshot, store) {
                Ok(path) => {
                    log::info!(
                        "tick {}: {} nodes ({} active) saved to {}",
                        summary.ticks,
                        snapshot.records.len(),
                        snapshot.active_count(),
                        path.display()
                    );
                    summary.saved.push(path);
                }
                Err(e @ SnapshotError::StoreUnavailable { .. }) => return Err(e),
                Err(e) => {
                    log::error!("tick {}: {e}", summary.ticks);
                    summary.failures += 1;
                }
            },
            Err(e) => {
                log::error!("tick {}: crawl failed: {e}", summary.ticks);
                summary.failures += 1;
            }
        }
    }
    Ok(summary)
}

/// Sleeps until the next multiple of `interval`; false if stopped meanwhile.
fn sleep_until_boundary(interval: Duration, stop: &AtomicBool) -> bool {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let step = interval.as_nanos();
    let wait_ns = step - now.as_nanos() % step;
    let wake = Instant::now() + Duration::from_nanos(wait_ns as u64);
    loop {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        let left = wake.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return true;
        }
        thread::sleep(left.min(Duration::from_millis(50)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_validation() {
        let ok = r#"{"id":1,"result":{"sender_id":"A","block_index":3,"quorum_set":{"threshold":1,"members":[{"type":"node","public_key":"B","address":"127.0.0.1:9"}]},"signature":"00"}}"#;
        assert_eq!(parse_response(ok.as_bytes(), 1).unwrap().block_index, 3);
        assert!(matches!(
            parse_response(ok.as_bytes(), 2),
            Err(QueryError::MalformedResponse(_))
        ));

        let too_high = ok.replace("\"threshold\":1", "\"threshold\":12");
        assert!(matches!(
            parse_response(too_high.as_bytes(), 1),
            Err(QueryError::MalformedResponse(_))
        ));
        let unaddressed = ok.replace(",\"address\":\"127.0.0.1:9\"", "");
        assert!(matches!(
            parse_response(unaddressed.as_bytes(), 1),
            Err(QueryError::MalformedResponse(_))
        ));
        let error = r#"{"id":1,"error":{"code":-32601,"message":"no"}}"#;
        assert_eq!(
            parse_response(error.as_bytes(), 1),
            Err(QueryError::Rpc {
                code: -32601,
                message: "no".into()
            })
        );
        assert!(matches!(
            parse_response(b"{\"id\":1}", 1),
            Err(QueryError::MalformedResponse(_))
        ));
    }

    #[test]
    fn config_checks() {
        assert!(matches!(
            crawl(&CrawlConfig::new(vec![])),
            Err(CrawlError::InvalidConfig(_))
        ));
        let mut config = CrawlConfig::new(vec!["127.0.0.1:9".parse().unwrap()]);
        config.timeout = Duration::ZERO;
        assert!(matches!(crawl(&config), Err(CrawlError::InvalidConfig(_))));
    }
}
