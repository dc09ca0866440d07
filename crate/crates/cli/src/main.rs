use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use clap::{Parser, Subcommand};

use pulselink::device::DeviceConfig;
use pulselink::harness::{
    compare_to_reference, export_series, load_report, run_to_dir, HarnessError, Scenario, TELEMETRY_FILE,
};
use pulselink::modem::HttpMethod;
use pulselink::telemetry::{route, BucketUnit, FeedQuery, TelemetryService};

/// Exported snapshots are never written to, so any well-formed key will do.
const SNAPSHOT_KEY: &str = "SNAPSHOT00000000";

#[derive(Parser)]
#[command(name = "pulselink", version, about = "Wearable vitals monitor simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a bundled scenario by name, or a scenario file by path.
    Run {
        scenario: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Print the reference comparison table for a run directory.
    Report { rundir: PathBuf },
    /// Print bucket averages from a run's telemetry snapshot as CSV.
    Export {
        rundir: PathBuf,
        #[arg(long, default_value = "minutes", value_parser = parse_bucket)]
        bucket: BucketUnit,
    },
    /// Serve the telemetry HTTP API with one empty channel.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        api_key: Option<String>,
    },
    /// List the bundled scenarios.
    Scenarios,
}

fn parse_bucket(s: &str) -> Result<BucketUnit, String> {
    BucketUnit::parse(s).ok_or_else(|| format!("expected minutes, hours or days, got {s:?}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out } => run(&scenario, &out),
        Command::Report { rundir } => report(&rundir),
        Command::Export { rundir, bucket } => export(&rundir, bucket).map(|()| ExitCode::SUCCESS),
        Command::Serve { addr, api_key } => serve(addr, api_key).map(|()| ExitCode::SUCCESS),
        Command::Scenarios => {
            for (name, _) in pulselink::harness::BUNDLED {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        let invalid = err
            .downcast_ref::<HarnessError>()
            .is_some_and(|e| matches!(e, HarnessError::Invalid(_) | HarnessError::Parse(_)));
        ExitCode::from(if invalid { 1 } else { 3 })
    })
}

fn run(scenario_arg: &str, out_root: &Path) -> Result<ExitCode> {
    let scenario = Scenario::resolve(scenario_arg)?;
    let started = Instant::now();
    let (output, dir) = run_to_dir(&scenario, out_root)?;
    let r = &output.report;
    println!("scenario     {} (seed {})", r.scenario, r.seed);
    println!(
        "simulated    {} ms in {:.2} s",
        r.duration_ms,
        started.elapsed().as_secs_f64()
    );
    println!(
        "uploads      {}/{} received ({})",
        r.uploads_received,
        r.uploads_attempted,
        r.success_decimal.as_deref().unwrap_or("undefined")
    );
    println!("alerts       {}", r.alerts.len());
    println!("sms          {} sent, {} delivered", r.sms_sent, r.sms_delivered);
    if let Some(at) = r.battery_depleted_at_ms {
        println!("battery      depleted at {at} ms");
    }
    println!("artifacts    {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn report(rundir: &Path) -> Result<ExitCode> {
    let report = load_report(rundir).with_context(|| format!("reading {}", rundir.display()))?;
    let rows = compare_to_reference(&report);
    println!(
        "{:<28} {:>12} {:>12} {:>10} {:>8} status",
        "metric", "reference", "run", "delta", "tol"
    );
    for row in &rows {
        println!("{row}");
    }
    println!("bpm error is measured against the signal generator, not a reference device");
    let flagged = rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        println!("{flagged} row(s) outside tolerance");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn export(rundir: &Path, bucket: BucketUnit) -> Result<()> {
    let path = rundir.join(TELEMETRY_FILE);
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let svc = TelemetryService::new();
    let id = svc.load_snapshot(SNAPSHOT_KEY, BufReader::new(file))?;
    let feed = svc.get_feed(id, FeedQuery::All)?;
    print!("{}", export_series(&feed, bucket)?);
    Ok(())
}

#[derive(Clone)]
struct ServeState {
    svc: Arc<TelemetryService>,
    started: Instant,
}

async fn handle(state: axum::extract::State<ServeState>, req: Request<Body>) -> Response {
    let method = match *req.method() {
        Method::GET => HttpMethod::Get,
        Method::POST => HttpMethod::Post,
        Method::HEAD => HttpMethod::Head,
        _ => return StatusCode::METHOD_NOT_ALLOWED.into_response(),
    };
    let target = req.uri().path_and_query().map_or("/", |pq| pq.as_str()).to_string();
    let now_ms = state.started.elapsed().as_millis() as u64;
    let reply = route(&state.svc, method, &target, now_ms);
    let status = StatusCode::from_u16(reply.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let content_type = if reply.body.starts_with(['{', '[']) {
        "application/json"
    } else {
        "text/plain"
    };
    (status, [(header::CONTENT_TYPE, content_type)], reply.body).into_response()
}

fn serve(addr: SocketAddr, api_key: Option<String>) -> Result<()> {
    let key = api_key.unwrap_or_else(|| DeviceConfig::default().api_key);
    let svc = Arc::new(TelemetryService::new());
    let id = svc.create_channel(&key)?;
    let state = ServeState {
        svc,
        started: Instant::now(),
    };
    let app = Router::new().fallback(handle).with_state(state);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!(
            "channel {} on http://{} (write key {key})",
            id.0,
            listener.local_addr()?
        );
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
