//! Per-snapshot analysis reports and the batch time-series table.

use std::path::{Path, PathBuf};

use chrono::SecondsFormat;
use fbascope::analysis::{GroupFamily, MinimalSetFamily};
use fbascope::enrichment::{self, IpMetaTable, OrgRuleTable};
use fbascope::snapshots::{self, CrawlSnapshot};
use fbascope::{AnalysisError, Analyzer, CardinalityStats, FamilyKind, Fbas, GroupingKind};
use serde::Serialize;

pub const BATCH_HEADER: [&str; 10] = [
    "timestamp",
    "node_count",
    "active_count",
    "top_tier_size",
    "mbs_min",
    "mbs_mean",
    "mbs_max",
    "mss_min",
    "mss_mean",
    "mss_max",
];

/// Cardinality statistics with the mean rounded to one decimal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
    pub count: usize,
}

impl From<CardinalityStats> for Stats {
    fn from(s: CardinalityStats) -> Self {
        Stats {
            min: s.min,
            mean: (s.mean * 10.0).round() / 10.0,
            max: s.max,
            count: s.count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyReport {
    pub stats: Stats,
    /// Set when the empty set qualifies (no quorum exists).
    pub vacuous: bool,
    /// Node keys, or group names when merged.
    pub sets: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetricReport {
    pub members: Vec<String>,
    pub quorum_set: fbascope::QuorumSet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub timestamp: String,
    pub fbas_fingerprint: String,
    pub grouping: GroupingKind,
    pub threshold_reduction: u32,
    pub node_count: usize,
    pub active_count: usize,
    pub quorum_intersection: bool,
    pub quorum_intersection_vacuous: bool,
    pub top_tier: Vec<String>,
    pub symmetric_top_tier: Option<SymmetricReport>,
    pub minimal_blocking_sets: FamilyReport,
    pub minimal_splitting_sets: FamilyReport,
}

fn node_family(fbas: &Fbas, family: &MinimalSetFamily) -> FamilyReport {
    FamilyReport {
        stats: family.stats().into(),
        vacuous: family.vacuous,
        sets: family
            .sets
            .iter()
            .map(|s| fbas.ids_of(s).into_iter().map(|id| id.to_string()).collect())
            .collect(),
    }
}

fn group_family(family: &GroupFamily) -> FamilyReport {
    FamilyReport {
        stats: family.stats().into(),
        vacuous: family.vacuous,
        sets: family
            .named_sets()
            .into_iter()
            .map(|s| s.into_iter().map(str::to_owned).collect())
            .collect(),
    }
}

pub fn format_timestamp(snapshot: &CrawlSnapshot) -> String {
    snapshot.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Optional offline tables applied to snapshots lacking metadata.
#[derive(Clone, Debug, Default)]
pub struct Tables {
    pub orgs: Option<OrgRuleTable>,
    pub ips: Option<IpMetaTable>,
}

impl Tables {
    pub fn is_empty(&self) -> bool {
        self.orgs.is_none() && self.ips.is_none()
    }

    pub fn enrich(&self, snapshot: &CrawlSnapshot) -> CrawlSnapshot {
        if self.is_empty() {
            return snapshot.clone();
        }
        let empty_orgs = OrgRuleTable::default();
        let empty_ips = IpMetaTable::default();
        enrichment::enrich_snapshot(
            snapshot,
            self.orgs.as_ref().unwrap_or(&empty_orgs),
            self.ips.as_ref().unwrap_or(&empty_ips),
            None,
        )
    }
}

/// Full analysis of one snapshot, lifted to `grouping` unless it is `None`.
pub fn analyze_snapshot(
    snapshot: &CrawlSnapshot,
    grouping: GroupingKind,
    reduce_thresholds: u32,
    budget: u64,
) -> Result<AnalysisReport, AnalysisError> {
    let mut fbas = snapshot.to_fbas().expect("snapshot was validated on load");
    if reduce_thresholds > 0 {
        let reduced = fbas.reduce_thresholds(reduce_thresholds);
        if reduced.clamped {
            log::warn!("some thresholds were below {reduce_thresholds} and stay at 0");
        }
        fbas = reduced.fbas;
    }
    let analyzer = Analyzer::with_budget(&fbas, budget);
    let intersection = analyzer.quorum_intersection()?;
    let top_tier = analyzer.top_tier()?;
    let symmetric = analyzer.symmetric_top_tier()?.map(|s| SymmetricReport {
        members: fbas.ids_of(&s.members).into_iter().map(|id| id.to_string()).collect(),
        quorum_set: s.common_qset,
    });
    let (blocking, splitting) = match grouping {
        GroupingKind::None => (
            node_family(&fbas, &analyzer.minimal_blocking_sets()?),
            node_family(&fbas, &analyzer.minimal_splitting_sets()?),
        ),
        kind => {
            let groups = enrichment::grouping_from_snapshot(snapshot, kind);
            (
                group_family(&analyzer.lift_kind(FamilyKind::Blocking, &groups)?),
                group_family(&analyzer.lift_kind(FamilyKind::Splitting, &groups)?),
            )
        }
    };
    Ok(AnalysisReport {
        timestamp: format_timestamp(snapshot),
        fbas_fingerprint: fbas.fingerprint(),
        grouping,
        threshold_reduction: reduce_thresholds,
        node_count: fbas.len(),
        active_count: fbas.active_count(),
        quorum_intersection: intersection.holds,
        quorum_intersection_vacuous: intersection.vacuous,
        top_tier: fbas.ids_of(&top_tier).into_iter().map(|id| id.to_string()).collect(),
        symmetric_top_tier: symmetric,
        minimal_blocking_sets: blocking,
        minimal_splitting_sets: splitting,
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    /// Single-row CSV summary.
    pub fn to_csv(&self) -> String {
        let b = &self.minimal_blocking_sets.stats;
        let s = &self.minimal_splitting_sets.stats;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "timestamp",
            "grouping",
            "node_count",
            "active_count",
            "top_tier_size",
            "mbs_min",
            "mbs_mean",
            "mbs_max",
            "mbs_count",
            "mss_min",
            "mss_mean",
            "mss_max",
            "mss_count",
        ])
        .expect("in-memory csv");
        w.write_record([
            self.timestamp.clone(),
            self.grouping.to_string(),
            self.node_count.to_string(),
            self.active_count.to_string(),
            self.top_tier.len().to_string(),
            b.min.to_string(),
            format!("{:.1}", b.mean),
            b.max.to_string(),
            b.count.to_string(),
            s.min.to_string(),
            format!("{:.1}", s.mean),
            s.max.to_string(),
            s.count.to_string(),
        ])
        .expect("in-memory csv");
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

/// One line of the time-series table. Analysis fields are `None` when the
/// snapshot could not be loaded or analysed.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub timestamp: String,
    pub node_count: Option<usize>,
    pub active_count: Option<usize>,
    pub top_tier_size: Option<usize>,
    pub mbs: Option<CardinalityStats>,
    pub mss: Option<CardinalityStats>,
}

impl ReportRow {
    fn fields(&self) -> [String; 10] {
        let n = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        let min = |s: Option<CardinalityStats>| n(s.map(|s| s.min));
        let mean = |s: Option<CardinalityStats>| s.map(|s| format!("{:.1}", s.mean)).unwrap_or_default();
        let max = |s: Option<CardinalityStats>| n(s.map(|s| s.max));
        [
            self.timestamp.clone(),
            n(self.node_count),
            n(self.active_count),
            n(self.top_tier_size),
            min(self.mbs),
            mean(self.mbs),
            max(self.mbs),
            min(self.mss),
            mean(self.mss),
            max(self.mss),
        ]
    }
}

fn stamp_of(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .and_then(snapshots::parse_file_name)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
        .unwrap_or_else(|| path.display().to_string())
}

/// Analyses one snapshot file into a row; failures leave fields empty.
pub fn batch_row(path: &Path, budget: u64) -> (ReportRow, bool) {
    let mut row = ReportRow {
        timestamp: stamp_of(path),
        node_count: None,
        active_count: None,
        top_tier_size: None,
        mbs: None,
        mss: None,
    };
    let snapshot = match snapshots::load_snapshot(path) {
        Ok(s) => s,
        Err(e) => {
            log::error!("{}: {e}", path.display());
            return (row, false);
        }
    };
    row.timestamp = format_timestamp(&snapshot);
    let fbas = snapshot.to_fbas().expect("snapshot was validated on load");
    row.node_count = Some(fbas.len());
    row.active_count = Some(fbas.active_count());
    let analyzer = Analyzer::with_budget(&fbas, budget);
    let analysed = (|| {
        Ok::<_, AnalysisError>((
            analyzer.top_tier()?.count(),
            analyzer.minimal_blocking_sets()?.stats(),
            analyzer.minimal_splitting_sets()?.stats(),
        ))
    })();
    match analysed {
        Ok((tier, mbs, mss)) => {
            row.top_tier_size = Some(tier);
            row.mbs = Some(mbs);
            row.mss = Some(mss);
        }
        Err(e) => log::error!("{}: {e}", path.display()),
    }
    (row, true)
}

/// Rows for every snapshot of a series, in chronological order, and how
/// many snapshots could be parsed.
pub fn batch_rows(paths: &[PathBuf], budget: u64) -> (Vec<ReportRow>, usize) {
    let mut parsed = 0;
    let rows = paths
        .iter()
        .map(|p| {
            let (row, ok) = batch_row(p, budget);
            parsed += usize::from(ok);
            row
        })
        .collect();
    (rows, parsed)
}

pub fn render_batch_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BATCH_HEADER).expect("in-memory csv");
    for row in rows {
        w.write_record(row.fields()).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}
