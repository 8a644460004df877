//! The `qcity` command line.

use crate::config::{parse_config, ConfigError};
use crate::output::{emit, emit_series, Format, OutputRow};
use crate::runner::{run_parallel, Sweep, SweepError};
use clap::{Parser, ValueEnum};
use qcity_core::network::{modified_preset, paris_preset, HUB};
use qcity_core::protocols::{ProtocolError, ProtocolStats};
use qcity_core::{NetworkError, ProtocolKind, RunSpec, Topology};
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paris,
    ParisModified,
}

/// Simulate protocols on a metropolitan quantum network.
#[derive(Debug, Parser)]
#[command(name = "qcity", version)]
pub struct Cli {
    /// Network description file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in network, used when no config is given.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// One of bb84, bb84-transmitted, bbm92, mdi, delegated, ghz-share,
    /// ghz-verify, anon-entangle.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Sending node of a two-party protocol.
    #[arg(long, requires = "to", conflicts_with = "participants")]
    pub from: Option<String>,
    /// Receiving node of a two-party protocol.
    #[arg(long, requires = "from")]
    pub to: Option<String>,
    /// Comma-separated participants in protocol order.
    #[arg(long, value_delimiter = ',')]
    pub participants: Option<Vec<String>>,
    /// Simulated time per run in milliseconds.
    #[arg(long)]
    pub duration_ms: Option<f64>,
    #[arg(long)]
    pub runs: Option<u32>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write results here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Repeat for each value of a parameter, as KEY=START:STOP:STEP.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Emit the mean cumulative curve (time_s,cumulative_bits) instead of
    /// the summary table.
    #[arg(long, conflicts_with = "sweep")]
    pub series: bool,
    /// Per-run breakdown on standard error.
    #[arg(long)]
    pub verbose: bool,
}

pub const DEFAULT_DURATION_MS: f64 = 10.0;
pub const DEFAULT_RUNS: u32 = 10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for invalid input, 2 for failures while running or writing.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Network(_) | CliError::Sweep(_) => 1,
            CliError::Protocol(ProtocolError::Network(_) | ProtocolError::BadParameter(_)) => 1,
            CliError::Protocol(_) | CliError::Io(_) => 2,
        }
    }
}

/// Participants used when the command line and config name none.
pub fn default_participants(protocol: ProtocolKind) -> Vec<String> {
    let names: &[&str] = match protocol {
        ProtocolKind::Bb84 => &[HUB, "alice"],
        ProtocolKind::Bb84Transmitted => &["bob", "erika"],
        ProtocolKind::Bbm92 | ProtocolKind::Delegated => &["alice", "erika"],
        ProtocolKind::Mdi => &["alice", "bob"],
        ProtocolKind::GhzShare | ProtocolKind::GhzVerify | ProtocolKind::AnonEntangle => {
            &["alice", "bob", "charlie", "dina"]
        }
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Topology and run after merging config, preset and flags; flags win.
pub fn resolve(cli: &Cli) -> Result<(Topology, RunSpec), CliError> {
    let (topology, base) = match &cli.config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => match cli.preset.unwrap_or(Preset::Paris) {
            Preset::Paris => (paris_preset(), None),
            Preset::ParisModified => (modified_preset(), None),
        },
    };
    let protocol = match (&cli.protocol, &base) {
        (Some(p), _) => ProtocolKind::from_str(p)?,
        (None, Some(b)) => b.protocol,
        (None, None) => return Err(CliError::Usage("no protocol given".into())),
    };
    let participants = if let Some(p) = &cli.participants {
        p.clone()
    } else if let (Some(a), Some(b)) = (&cli.from, &cli.to) {
        vec![a.clone(), b.clone()]
    } else if let Some(b) = base.as_ref().filter(|b| b.protocol == protocol) {
        b.participants.clone()
    } else {
        default_participants(protocol)
    };
    let spec = RunSpec {
        protocol,
        participants,
        duration_s: cli
            .duration_ms
            .map(|ms| ms * 1e-3)
            .or(base.as_ref().map(|b| b.duration_s))
            .unwrap_or(DEFAULT_DURATION_MS * 1e-3),
        runs: cli.runs.or(base.as_ref().map(|b| b.runs)).unwrap_or(DEFAULT_RUNS),
        seed: cli.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
    };
    topology.check_run(&spec)?;
    Ok((topology, spec))
}

fn verbose_report(stats: &ProtocolStats, spec: &RunSpec, label: &str) {
    let mut err = std::io::stderr().lock();
    for (i, r) in stats.runs.iter().enumerate() {
        let _ = writeln!(
            err,
            "{label}run {i} seed {}: counted {} of {} uses, {} flipped, rate {:.6e}/s",
            spec.seed.wrapping_add(i as u64),
            r.sifted_bits,
            r.channel_uses,
            r.flipped_bits,
            r.rate()
        );
    }
}

/// Runs the command and returns the rendered output.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let (topology, spec) = resolve(cli)?;
    if let Some(text) = &cli.sweep {
        let sweep: Sweep = text.parse()?;
        let mut rows = Vec::new();
        for v in sweep.values() {
            let t = sweep.apply(&topology, &spec, v)?;
            let stats = run_parallel(&t, &spec)?;
            if cli.verbose {
                verbose_report(&stats, &spec, &format!("{}={v} ", sweep.key));
            }
            rows.push(OutputRow::from_stats(&stats).with_sweep(&sweep.key, v));
        }
        return Ok(emit(&rows, cli.format));
    }
    let stats = run_parallel(&topology, &spec)?;
    if cli.verbose {
        verbose_report(&stats, &spec, "");
    }
    if cli.series {
        return Ok(emit_series(&stats));
    }
    Ok(emit(&[OutputRow::from_stats(&stats)], cli.format))
}

/// Entry point shared by the binary and the tests.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = execute(&cli).and_then(|text| {
        match &cli.output {
            Some(path) => std::fs::write(path, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcity: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
