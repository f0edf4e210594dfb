//! Attribution of nodes to organisations, countries and ISPs.
//!
//! Organisations come from an ordered hostname-suffix table, countries and
//! ISPs from a CIDR table with longest-prefix matching. Both are plain CSV:
//!
//! ```text
//! hostname_suffix,organisation      cidr,country,isp
//! .example.org,Example Inc          198.51.100.0/24,NL,Example ISP
//! ```
//!
//! Hosts no rule covers get [`UNKNOWN`]. A [`MetaResolver`] may be plugged in
//! for addresses the IP table does not cover.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::net::IpAddr;
use std::path::Path;
use std::time::Duration;

use ipnet::IpNet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Grouping, GroupingKind};
use crate::snapshots::CrawlSnapshot;

pub const UNKNOWN: &str = "unknown";

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed table: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: empty hostname suffix")]
    EmptySuffix { line: u64 },
    #[error("line {line}: invalid prefix {cidr:?}")]
    InvalidPrefix { line: u64, cidr: String },
    #[error("invalid IP address {0:?}")]
    InvalidIp(String),
}

#[derive(Deserialize)]
struct OrgRow {
    hostname_suffix: String,
    organisation: String,
}

#[derive(Deserialize)]
struct IpRow {
    cidr: String,
    country: String,
    isp: String,
}

fn read_table(path: &Path) -> Result<String, EnrichError> {
    fs::read_to_string(path).map_err(|source| EnrichError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

/// Ordered hostname-suffix rules; the first match wins.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OrgRuleTable {
    rules: Vec<(String, String)>,
}

impl OrgRuleTable {
    pub fn new(rules: Vec<(String, String)>) -> Self {
        OrgRuleTable { rules }
    }

    pub fn from_csv(text: &str) -> Result<Self, EnrichError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let mut rules = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row: OrgRow = record.deserialize(Some(&headers))?;
            if row.hostname_suffix.is_empty() {
                return Err(EnrichError::EmptySuffix { line: line_of(&record) });
            }
            rules.push((row.hostname_suffix.to_ascii_lowercase(), row.organisation));
        }
        Ok(OrgRuleTable { rules })
    }

    pub fn load(path: &Path) -> Result<Self, EnrichError> {
        Self::from_csv(&read_table(path)?)
    }

    /// The organisation of the first rule whose suffix ends `hostname`.
    pub fn lookup(&self, hostname: &str) -> Option<&str> {
        let host = hostname.trim_end_matches('.').to_ascii_lowercase();
        self.rules
            .iter()
            .find(|(suffix, _)| host.ends_with(suffix.as_str()))
            .map(|(_, org)| org.as_str())
    }

    /// Like [`OrgRuleTable::lookup`], falling back to [`UNKNOWN`].
    pub fn resolve(&self, hostname: &str) -> &str {
        self.lookup(hostname).unwrap_or(UNKNOWN)
    }
}

/// CIDR prefixes with country code and ISP; the longest prefix wins.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IpMetaTable {
    entries: Vec<(IpNet, String, String)>,
}

impl IpMetaTable {
    pub fn new(mut entries: Vec<(IpNet, String, String)>) -> Self {
        // Stable sort keeps file order among equally long prefixes.
        entries.sort_by_key(|(net, _, _)| std::cmp::Reverse(net.prefix_len()));
        IpMetaTable { entries }
    }

    pub fn from_csv(text: &str) -> Result<Self, EnrichError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row: IpRow = record.deserialize(Some(&headers))?;
            let net: IpNet = row.cidr.parse().map_err(|_| EnrichError::InvalidPrefix {
                line: line_of(&record),
                cidr: row.cidr.clone(),
            })?;
            entries.push((net.trunc(), row.country, row.isp));
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, EnrichError> {
        Self::from_csv(&read_table(path)?)
    }

    /// `(country, isp)` of the longest matching prefix.
    pub fn lookup_addr(&self, ip: IpAddr) -> Option<(&str, &str)> {
        self.entries
            .iter()
            .find(|(net, _, _)| net.contains(&ip))
            .map(|(_, country, isp)| (country.as_str(), isp.as_str()))
    }

    /// Parses `ip` and looks it up, with [`UNKNOWN`] for uncovered addresses.
    pub fn lookup(&self, ip: &str) -> Result<(String, String), EnrichError> {
        let addr: IpAddr = ip.parse().map_err(|_| EnrichError::InvalidIp(ip.to_owned()))?;
        Ok(match self.lookup_addr(addr) {
            Some((country, isp)) => (country.to_owned(), isp.to_owned()),
            None => (UNKNOWN.to_owned(), UNKNOWN.to_owned()),
        })
    }
}

/// Live country/ISP lookup for hosts the offline table does not cover.
/// Implementations must not have side effects per call.
pub trait MetaResolver: Send + Sync {
    /// `(country, isp)` for a host name or IP literal, or `None` if unknown or
    /// the lookup did not finish within `timeout`.
    fn lookup(&self, host: &str, timeout: Duration) -> Option<(String, String)>;
}

/// The default resolver: never touches the network, knows nothing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoNetwork;

impl MetaResolver for NoNetwork {
    fn lookup(&self, _host: &str, _timeout: Duration) -> Option<(String, String)> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetadataSource {
    Table,
    Resolver,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMetadata {
    pub organisation: String,
    pub country: String,
    pub isp: String,
    pub source: MetadataSource,
}

impl NodeMetadata {
    pub fn unknown() -> Self {
        NodeMetadata {
            organisation: UNKNOWN.into(),
            country: UNKNOWN.into(),
            isp: UNKNOWN.into(),
            source: MetadataSource::Unknown,
        }
    }

    pub fn group(&self, kind: GroupingKind) -> Option<&str> {
        match kind {
            GroupingKind::None => None,
            GroupingKind::Organisation => Some(&self.organisation),
            GroupingKind::Isp => Some(&self.isp),
            GroupingKind::Country => Some(&self.country),
        }
    }
}

pub const RESOLVER_TIMEOUT: Duration = Duration::from_secs(2);

/// Returns the snapshot with metadata attached to every record.
pub fn enrich_snapshot(
    snapshot: &CrawlSnapshot,
    orgs: &OrgRuleTable,
    ips: &IpMetaTable,
    resolver: Option<&dyn MetaResolver>,
) -> CrawlSnapshot {
    let mut out = snapshot.clone();
    for record in &mut out.records {
        let host = record.hostname.clone().or_else(|| {
            record
                .address
                .as_ref()
                .filter(|a| a.ip().is_none())
                .map(|a| a.host.clone())
        });
        let ip = record.address.as_ref().and_then(|a| a.ip());

        let organisation = host.as_deref().and_then(|h| orgs.lookup(h));
        let mut source = if organisation.is_some() {
            MetadataSource::Table
        } else {
            MetadataSource::Unknown
        };
        let mut location = ip
            .and_then(|ip| ips.lookup_addr(ip))
            .map(|(c, i)| (c.to_owned(), i.to_owned()));
        if location.is_some() {
            source = MetadataSource::Table;
        } else if let Some(resolver) = resolver {
            let target = ip.map(|ip| ip.to_string()).or_else(|| host.clone());
            location = target.and_then(|t| resolver.lookup(&t, RESOLVER_TIMEOUT));
            if location.is_some() && source == MetadataSource::Unknown {
                source = MetadataSource::Resolver;
            }
        }
        let (country, isp) = location.unwrap_or_else(|| (UNKNOWN.into(), UNKNOWN.into()));
        record.metadata = Some(NodeMetadata {
            organisation: organisation.unwrap_or(UNKNOWN).to_owned(),
            country,
            isp,
            source,
        });
    }
    out
}

/// Groups the snapshot's nodes by a metadata attribute. Nodes whose attribute
/// is missing or unknown each form their own group, so unattributed nodes
/// are never merged with one another.
pub fn grouping_from_snapshot(snapshot: &CrawlSnapshot, kind: GroupingKind) -> Grouping {
    let assignment: BTreeMap<_, _> = snapshot
        .records
        .iter()
        .map(|r| {
            let group = r
                .metadata
                .as_ref()
                .and_then(|m| m.group(kind))
                .filter(|g| !g.is_empty() && *g != UNKNOWN)
                .map(str::to_owned)
                .unwrap_or_else(|| match kind {
                    GroupingKind::None => r.public_key.to_string(),
                    _ => format!("{UNKNOWN}:{}", r.public_key),
                });
            (r.public_key.clone(), group)
        })
        .collect();
    Grouping { kind, assignment }
}

/// Node count per group, over all records.
pub fn group_counts(grouping: &Grouping) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for group in grouping.assignment.values() {
        *counts.entry(group.as_str()).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn org_rules_first_match_wins() {
        let table = OrgRuleTable::from_csv(
            "hostname_suffix,organisation\n.mobilecoinww.example,MobileCoin Worldwide\n.example,Catch-all\n",
        )
        .unwrap();
        assert_eq!(table.resolve("node1.prod.mobilecoinww.example"), "MobileCoin Worldwide");
        assert_eq!(
            table.resolve("NODE1.PROD.MOBILECOINWW.EXAMPLE."),
            "MobileCoin Worldwide"
        );
        assert_eq!(table.resolve("other.example"), "Catch-all");
        assert_eq!(table.resolve("host.invalid"), UNKNOWN);
        assert!(matches!(
            OrgRuleTable::from_csv("hostname_suffix,organisation\n,Nobody\n"),
            Err(EnrichError::EmptySuffix { line: 2 })
        ));
    }

    #[test]
    fn ip_table_longest_prefix() {
        let table = IpMetaTable::from_csv(crate::fixtures::MOBILECOIN_2021_IP_META).unwrap();
        let nl = ("NL".to_owned(), "Microsoft Corporation".to_owned());
        assert_eq!(table.lookup("198.51.100.11").unwrap(), nl);
        assert_eq!(table.lookup("198.51.100.200").unwrap().0, "GB");
        assert_eq!(
            table.lookup("10.0.0.1").unwrap(),
            (UNKNOWN.to_owned(), UNKNOWN.to_owned())
        );
        assert!(matches!(table.lookup("300.1.1.1"), Err(EnrichError::InvalidIp(_))));
        assert!(matches!(
            IpMetaTable::from_csv("cidr,country,isp\n10.0.0.0/33,XX,Y\n"),
            Err(EnrichError::InvalidPrefix { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_nodes_get_singleton_groups() {
        let snapshot = CrawlSnapshot::from_json(crate::fixtures::MOBILECOIN_2021_SNAPSHOT).unwrap();
        let bare = enrich_snapshot(&snapshot, &OrgRuleTable::default(), &IpMetaTable::default(), None);
        assert!(bare.records.iter().all(|r| r.metadata == Some(NodeMetadata::unknown())));
        let grouping = grouping_from_snapshot(&bare, GroupingKind::Organisation);
        assert_eq!(group_counts(&grouping).len(), 10);
    }

    struct Fixed;

    impl MetaResolver for Fixed {
        fn lookup(&self, _host: &str, _timeout: Duration) -> Option<(String, String)> {
            Some(("CH".into(), "Resolved ISP".into()))
        }
    }

    #[test]
    fn resolver_fills_gaps_only() {
        let snapshot = CrawlSnapshot::from_json(crate::fixtures::MOBILECOIN_2021_SNAPSHOT).unwrap();
        let ips = IpMetaTable::from_csv("cidr,country,isp\n198.51.100.0/24,NL,Microsoft Corporation\n").unwrap();
        let out = enrich_snapshot(&snapshot, &OrgRuleTable::default(), &ips, Some(&Fixed));
        let lnf = out.record(&"LNF".into()).unwrap().metadata.clone().unwrap();
        assert_eq!((lnf.country.as_str(), lnf.source), ("CH", MetadataSource::Resolver));
        let mc1 = out.record(&"MC1".into()).unwrap().metadata.clone().unwrap();
        assert_eq!((mc1.country.as_str(), mc1.source), ("NL", MetadataSource::Table));
    }
}
