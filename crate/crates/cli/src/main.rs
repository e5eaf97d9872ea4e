use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use spotter::alertgate::{ConfigDocument, Mode};
use spotter::alertnet::{MeshTopology, TopologyDocument};
use spotter::clipstore::corpus::corpus_scenarios;
use spotter::clipstore::{load_clip, save_clip, synth_clip};
use spotter::controlplane::{run_replay, server, ClipSource, ControlPlane, RunSpec};
use spotter::evalharness::{
    aggregate_report, evaluate_clip, sweep_report, EvalOptions, LatencyAccounting, SweepOptions,
};
use spotter::runlog::{CaptureMode, ClockMode};
use spotter::{Clip, PipelineConfig, RunLog, ScenarioSpec};

#[derive(Parser)]
#[command(
    name = "spotter",
    version,
    about = "Hazard alert pipeline replay and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay clips through the pipeline and write a run log.
    Run(RunArgs),
    /// Score run logs against their clips.
    Eval(EvalArgs),
    /// Generate clip bundles from a scenario or the built-in corpus.
    Synth(SynthArgs),
    /// Serve the control API.
    Serve(ServeArgs),
    /// Check clip bundles and config, topology or scenario documents.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Simulated,
    Realtime,
}

#[derive(Clone, Copy, ValueEnum)]
enum Capture {
    Internal,
    HarnessLoop,
}

impl From<Clock> for ClockMode {
    fn from(c: Clock) -> Self {
        match c {
            Clock::Simulated => ClockMode::Simulated,
            Clock::Realtime => ClockMode::Realtime,
        }
    }
}

impl From<Capture> for CaptureMode {
    fn from(c: Capture) -> Self {
        match c {
            Capture::Internal => CaptureMode::Internal,
            Capture::HarnessLoop => CaptureMode::HarnessLoop,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Clip bundle directories.
    #[arg(required = true)]
    clips: Vec<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Overrides the mode in the config file.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, value_enum, default_value = "simulated")]
    clock: Clock,
    #[arg(long, value_enum, default_value = "internal")]
    capture: Capture,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "duplicate", default_value_t = spotter::controlplane::DEFAULT_DUPLICATION)]
    duplication: u32,
    /// Run log path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run logs, paired in order with --clip.
    #[arg(long = "run")]
    runs: Vec<PathBuf>,
    #[arg(long = "clip")]
    clips: Vec<PathBuf>,
    /// Sweep all modes over the built-in corpus instead.
    #[arg(long, conflicts_with_all = ["runs", "clips"])]
    corpus: bool,
    #[arg(long, default_value_t = spotter::evalharness::DEFAULT_IOU_THRESHOLD)]
    iou: f64,
    #[arg(long)]
    include_mesh: bool,
    #[arg(long, default_value_t = spotter::evalharness::DEFAULT_BIN_WIDTH_MS)]
    bin_width: f64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario document.
    #[arg(long, required_unless_present = "corpus")]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write every corpus clip under this directory.
    #[arg(long, conflicts_with = "scenario")]
    corpus: bool,
    /// Bundle directory (a parent directory with --corpus).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    listen: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    clip: Vec<PathBuf>,
    #[arg(long)]
    config: Vec<PathBuf>,
    #[arg(long)]
    topology: Vec<PathBuf>,
    #[arg(long)]
    scenario: Vec<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn read_doc<D: serde::de::DeserializeOwned>(path: &Path) -> Result<D> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => Ok(read_doc::<ConfigDocument<f64>>(p)?
            .resolve()
            .with_context(|| format!("invalid config {}", p.display()))?),
        None => Ok(PipelineConfig::for_mode(Mode::Default)),
    }
}

fn load_topology(path: Option<&Path>) -> Result<MeshTopology> {
    match path {
        Some(p) => Ok(
            MeshTopology::from_document(read_doc::<TopologyDocument>(p)?)
                .with_context(|| format!("invalid topology {}", p.display()))?,
        ),
        None => Ok(MeshTopology::single_band("band0")),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(m) = a.mode {
        config.set_mode(m);
    }
    let topology = load_topology(a.topology.as_deref())?;
    let mut spec = RunSpec::new(
        a.clips.into_iter().map(ClipSource::Path).collect(),
        config,
        topology,
    );
    spec.clock_mode = a.clock.into();
    spec.capture = a.capture.into();
    spec.seed = a.seed;
    spec.duplication = a.duplication;
    let log = run_replay(&spec)?;
    match a.out {
        Some(p) => log
            .save(&p)
            .with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = io::stdout().lock();
            log.write_to(&mut out)?;
            out.flush()?;
        }
    }
    eprintln!(
        "{} frames, {} alerts, {} deliveries",
        log.footer.frames_processed,
        log.alerts().count(),
        log.deliveries().count()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let opts = EvalOptions {
        iou_threshold: a.iou,
        accounting: LatencyAccounting {
            include_mesh: a.include_mesh,
            ..LatencyAccounting::default()
        },
        bin_width: a.bin_width,
    };
    let report = if a.corpus {
        let clips = corpus_scenarios::<f64>()
            .iter()
            .map(|e| synth_clip(&e.scenario, e.seed).map(Arc::new))
            .collect::<Result<Vec<_>, _>>()?;
        let sweep = SweepOptions {
            eval: opts,
            ..SweepOptions::default()
        };
        sweep_report(&clips, &sweep)?
    } else {
        if a.runs.is_empty() || a.runs.len() != a.clips.len() {
            bail!("give one --clip per --run");
        }
        let mut results = Vec::new();
        for (run, clip) in a.runs.iter().zip(&a.clips) {
            let log = RunLog::load(run).with_context(|| format!("reading {}", run.display()))?;
            let clip: Clip =
                load_clip(clip).with_context(|| format!("loading {}", clip.display()))?;
            results.push(evaluate_clip(&log, &clip, &opts)?);
        }
        aggregate_report(&results, &opts)?
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if a.corpus {
        let entries = corpus_scenarios::<f64>();
        for e in &entries {
            let clip = synth_clip(&e.scenario, e.seed)?;
            save_clip(&clip, a.out.join(&clip.clip_id))?;
        }
        eprintln!("wrote {} clips to {}", entries.len(), a.out.display());
        return Ok(());
    }
    let path = a.scenario.expect("required by clap");
    let scenario: ScenarioSpec = read_doc(&path)?;
    let clip = synth_clip(&scenario, a.seed)?;
    save_clip(&clip, &a.out)?;
    eprintln!("wrote {} to {}", clip.clip_id, a.out.display());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let topology = load_topology(a.topology.as_deref())?;
    let plane = Arc::new(ControlPlane::new(config, topology)?);
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    eprintln!("listening on {}", listener.local_addr()?);
    server::serve(listener, plane)?;
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let mut failed = 0;
    let mut check = |kind: &str, path: &Path, r: Result<()>| match r {
        Ok(()) => println!("ok    {kind} {}", path.display()),
        Err(e) => {
            failed += 1;
            println!("FAIL  {kind} {}: {e:#}", path.display());
        }
    };
    for p in &a.clip {
        check(
            "clip",
            p,
            load_clip::<f64>(p).map(|_| ()).map_err(Into::into),
        );
    }
    for p in &a.config {
        check("config", p, load_config(Some(p)).map(|_| ()));
    }
    for p in &a.topology {
        check("topology", p, load_topology(Some(p)).map(|_| ()));
    }
    for p in &a.scenario {
        let r = read_doc::<ScenarioSpec>(p).and_then(|s| s.validate().map_err(Into::into));
        check("scenario", p, r);
    }
    if a.clip.len() + a.config.len() + a.topology.len() + a.scenario.len() == 0 {
        bail!("nothing to validate");
    }
    if failed > 0 {
        bail!("{failed} document(s) failed validation");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Validate(a) => cmd_validate(a),
    }
}
