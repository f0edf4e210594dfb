//! The `fbascope` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

pub mod report;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbascope::crawler::{self, CrawlConfig, CrawlError, Schedule};
use fbascope::enrichment::{IpMetaTable, OrgRuleTable};
use fbascope::mocknet;
use fbascope::snapshots::{self, CrawlSnapshot};
use fbascope::{GroupingKind, NodeAddress, NodeId, DEFAULT_BUDGET};
use thiserror::Error;

use report::Tables;

/// Environment variable overriding the analysis search budget.
pub const BUDGET_ENV: &str = "QS_ANALYSIS_BUDGET";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fbascope",
    version,
    about = "Crawl FBAS validator networks and analyse their quorum structure"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl a network and store the snapshot(s).
    Crawl(CrawlArgs),
    /// Analyse one snapshot.
    Analyze(AnalyzeArgs),
    /// Summarise a directory of snapshots as CSV.
    Batch(BatchArgs),
    /// Serve a topology file on loopback.
    Mocknet(MocknetArgs),
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// CSV `hostname_suffix,organisation`.
    #[arg(long)]
    pub org_table: Option<PathBuf>,
    /// CSV `cidr,country,isp`.
    #[arg(long)]
    pub ip_table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CrawlArgs {
    /// File with one `host:port` per line.
    #[arg(long)]
    pub bootstrap: PathBuf,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub parallel: u64,
    #[arg(long, default_value_t = 1)]
    pub retries: u32,
    /// Snapshot directory (created if missing).
    #[arg(long, default_value = "snapshots")]
    pub out: PathBuf,
    /// Crawl repeatedly on multiples of this many seconds.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub loop_interval_s: Option<u64>,
    /// With `--loop-interval-s`, stop after this many crawls.
    #[arg(long, requires = "loop_interval_s")]
    pub ticks: Option<u64>,
    #[command(flatten)]
    pub tables: TableArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Merge {
    None,
    Org,
    Isp,
    Country,
}

impl From<Merge> for GroupingKind {
    fn from(m: Merge) -> Self {
        match m {
            Merge::None => GroupingKind::None,
            Merge::Org => GroupingKind::Organisation,
            Merge::Isp => GroupingKind::Isp,
            Merge::Country => GroupingKind::Country,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long, value_enum, default_value_t = Merge::None)]
    pub merge: Merge,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Lower every threshold by this much before analysing.
    #[arg(long, default_value_t = 0)]
    pub reduce_thresholds: u32,
    /// Tables used to attribute nodes when the snapshot carries no metadata.
    #[command(flatten)]
    pub tables: TableArgs,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MocknetArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Nodes to start down.
    #[arg(long, value_delimiter = ',')]
    pub down: Vec<String>,
    /// Address accepting `{"node":"<key>","state":"up"|"down"}` lines.
    #[arg(long)]
    pub control: Option<String>,
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("fbascope: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Crawl(args) => cmd_crawl(&args, out),
        Command::Analyze(args) => cmd_analyze(&args, out),
        Command::Batch(args) => cmd_batch(&args, out),
        Command::Mocknet(args) => cmd_mocknet(&args, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

/// Search budget from the environment, or the default.
pub fn budget_from_env() -> Result<u64, CliError> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{BUDGET_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

fn load_tables(args: &TableArgs) -> Result<Tables, CliError> {
    let usage = |e: fbascope::enrichment::EnrichError| CliError::Usage(e.to_string());
    Ok(Tables {
        orgs: args
            .org_table
            .as_deref()
            .map(OrgRuleTable::load)
            .transpose()
            .map_err(usage)?,
        ips: args
            .ip_table
            .as_deref()
            .map(IpMetaTable::load)
            .transpose()
            .map_err(usage)?,
    })
}

/// Addresses from a bootstrap file: one per line, `#` starts a comment.
pub fn read_bootstrap(path: &Path) -> Result<Vec<NodeAddress>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut addresses = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let address = line
            .parse()
            .map_err(|e| CliError::Usage(format!("{}:{}: {e}", path.display(), n + 1)))?;
        addresses.push(address);
    }
    if addresses.is_empty() {
        return Err(CliError::Usage(format!("{}: no bootstrap addresses", path.display())));
    }
    Ok(addresses)
}

fn crawl_summary(snapshot: &CrawlSnapshot) -> String {
    format!(
        "{} nodes ({} active) in {} ms\n",
        snapshot.records.len(),
        snapshot.active_count(),
        snapshot.duration_ms
    )
}

pub fn cmd_crawl(args: &CrawlArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let bootstrap = read_bootstrap(&args.bootstrap)?;
    let tables = load_tables(&args.tables)?;
    let config = CrawlConfig {
        bootstrap,
        timeout: Duration::from_millis(args.timeout_ms),
        parallel: args.parallel as usize,
        retries: args.retries,
    };
    fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let crawl_once = || -> Result<CrawlSnapshot, CrawlError> { Ok(tables.enrich(&crawler::crawl(&config)?)) };

    let Some(interval) = args.loop_interval_s else {
        let snapshot = crawl_once().map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = snapshots::save_snapshot(&snapshot, &args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_out(out, &crawl_summary(&snapshot))?;
        return write_out(out, &format!("saved {}\n", path.display()));
    };

    let schedule = Schedule {
        interval: Duration::from_secs(interval),
        max_ticks: args.ticks,
    };
    let stop = AtomicBool::new(false);
    let mut lines = Vec::new();
    let summary = crawler::run_loop(&schedule, &args.out, &stop, |_| {
        let snapshot = crawl_once()?;
        lines.push(crawl_summary(&snapshot));
        Ok(snapshot)
    })
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    for line in &lines {
        write_out(out, line)?;
    }
    write_out(
        out,
        &format!(
            "{} crawls, {} saved, {} failed\n",
            summary.ticks,
            summary.saved.len(),
            summary.failures
        ),
    )
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let budget = budget_from_env()?;
    let tables = load_tables(&args.tables)?;
    let snapshot = snapshots::load_snapshot(&args.snapshot).map_err(|e| CliError::Usage(e.to_string()))?;
    let snapshot = if tables.is_empty() {
        snapshot
    } else {
        tables.enrich(&snapshot)
    };
    let report = report::analyze_snapshot(&snapshot, args.merge.into(), args.reduce_thresholds, budget)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    match args.format {
        Format::Json => write_out(out, &report.to_json()),
        Format::Csv => write_out(out, &report.to_csv()),
    }
}

pub fn cmd_batch(args: &BatchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let budget = budget_from_env()?;
    let series = snapshots::list_series(&args.dir).map_err(|e| CliError::Usage(e.to_string()))?;
    let (rows, parsed) = report::batch_rows(&series.snapshots, budget);
    if parsed == 0 {
        return Err(CliError::Runtime(format!(
            "no snapshots parsed in {}",
            args.dir.display()
        )));
    }
    fs::write(&args.out, report::render_batch_csv(&rows))
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    write_out(out, &format!("{} rows written to {}\n", rows.len(), args.out.display()))
}

pub fn cmd_mocknet(args: &MocknetArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut topology = mocknet::load_topology(&args.topology).map_err(|e| CliError::Usage(e.to_string()))?;
    topology.down.extend(args.down.iter().map(|k| NodeId::from(k.trim())));
    topology.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let net = mocknet::serve(&topology).map_err(|e| CliError::Runtime(e.to_string()))?;
    for node in &topology.nodes {
        let state = if topology.down.contains(&node.public_key) {
            "down"
        } else {
            "up"
        };
        write_out(out, &format!("{} {} {state}\n", node.public_key, node.address))?;
    }
    let _ = out.flush();
    let stop = AtomicBool::new(false);
    match &args.control {
        Some(address) => net
            .serve_control(address.as_str(), &stop)
            .map_err(|e| CliError::Runtime(e.to_string())),
        None => loop {
            std::thread::park();
        },
    }
}
