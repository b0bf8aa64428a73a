use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use uaanet::engine::{trace, Engine};
use uaanet::gateway::scenario::load_scenario;
use uaanet::gateway::server::{self, ServerConfig, PORT_ENV};
use uaanet::gateway::sweep::{self, Table2ModeReport, TABLE2_AVERAGE_PER_HOP_S};

#[derive(Parser)]
#[command(name = "uaanet", version, about = "Contract-governed UAV ad-hoc network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario headless to its horizon.
    Run {
        scenario: PathBuf,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the metrics report (JSON) here.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve a scenario over the live control stream.
    Serve {
        scenario: PathBuf,
        #[arg(long, env = PORT_ENV, default_value_t = server::DEFAULT_PORT)]
        port: u16,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Listen address.
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
    },
    /// Run a bundled sweep.
    Sweep {
        /// The five-row detection-delay sweep, in both per-hop readings.
        #[arg(long, required = true)]
        table2: bool,
        /// Write the sweep report (JSON) here.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Write the bundled sweep scenarios into this directory and exit.
        #[arg(long, value_name = "DIR")]
        write_scenarios: Option<PathBuf>,
    },
    /// Check a scenario file.
    Validate { scenario: PathBuf },
}

fn read_scenario(path: &Path) -> Result<uaanet::gateway::ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load_scenario(&text).with_context(|| format!("in {}", path.display()))
}

fn run(scenario: &Path, trace_out: Option<&Path>, metrics_out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut config = read_scenario(scenario)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let mut engine = Engine::new(config)?;
    engine.run_to_horizon();
    let report = engine.metrics_report();
    if let Some(path) = trace_out {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        trace::write_jsonl(std::io::BufWriter::new(file), engine.trace())?;
    }
    if let Some(path) = metrics_out {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "ticks {}  transactions {}  succeeded {}  failed {}  voided {}  aborted {}  conserved {}",
        engine.tick(),
        report.opened,
        report.succeeded,
        report.failed,
        report.voided,
        report.aborted,
        report.token_audit.conserved
    );
    for d in &report.detections {
        println!("  detection n={} x={} {:?} delay {:.3} s culprit {}", d.n, d.x, d.reason, d.delay_s, d.culprit);
    }
    Ok(())
}

fn print_mode(report: &Table2ModeReport) -> bool {
    println!("{:?} per-hop delays", report.mode);
    println!("  {:>3} {:>3} {:>8} {:>10} {:>10} {:>10}  culprit", "n", "x", "per_hop", "listed", "expected", "measured");
    let mut ok = true;
    for r in &report.rows {
        let matches = r.matches(0.005);
        ok &= matches;
        println!(
            "  {:>3} {:>3} {:>8.3} {:>10.3} {:>10.3} {:>10}  {} {}",
            r.n,
            r.x,
            r.per_hop_s,
            r.listed_delay_s,
            r.expected_delay_s,
            r.measured_delay_s.map_or("-".into(), |d| format!("{d:.3}")),
            r.culprit.as_deref().unwrap_or("-"),
            if matches { "ok" } else { "MISMATCH" }
        );
    }
    match report.average_per_hop_s {
        Some(avg) => println!("  average per-hop {avg:.3} s"),
        None => {
            println!("  average per-hop unavailable");
            ok = false;
        }
    }
    ok
}

fn sweep_cmd(metrics: Option<&Path>, write_scenarios: Option<&Path>) -> Result<()> {
    if let Some(dir) = write_scenarios {
        for path in sweep::write_table2_scenarios(dir)? {
            println!("wrote {}", path.display());
        }
        return Ok(());
    }
    let report = sweep::sweep_table2()?;
    let mut ok = print_mode(&report.constant);
    ok &= print_mode(&report.per_row);
    let avg_ok = report
        .per_row
        .average_per_hop_s
        .is_some_and(|a| (a - TABLE2_AVERAGE_PER_HOP_S).abs() <= 0.01);
    if let Some(path) = metrics {
        std::fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if !(ok && avg_ok) {
        bail!("sweep does not reproduce the reference table");
    }
    Ok(())
}

fn serve(scenario: &Path, port: u16, speed: f64, bind: std::net::IpAddr) -> Result<()> {
    if !(speed.is_finite() && speed > 0.0) {
        bail!("--speed must be positive");
    }
    let engine = Engine::new(read_scenario(scenario)?)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = server::spawn(engine, ServerConfig { port, speed, bind }).await?;
        println!("listening on ws://{}/ws", handle.addr);
        tokio::select! {
            _ = handle.wait() => {}
            _ = tokio::signal::ctrl_c() => {}
        }
        anyhow::Ok(())
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run { scenario, trace, metrics, seed } => run(scenario, trace.as_deref(), metrics.as_deref(), *seed),
        Cmd::Serve { scenario, port, speed, bind } => serve(scenario, *port, *speed, *bind),
        Cmd::Sweep { metrics, write_scenarios, .. } => sweep_cmd(metrics.as_deref(), write_scenarios.as_deref()),
        Cmd::Validate { scenario } => read_scenario(scenario).map(|c| {
            println!("ok: {} nodes, {} actions, horizon {} s", c.nodes.len(), c.actions.len(), c.horizon_s);
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
