use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use msek::harness::{compare, run_embedded, HarnessConfig, Manager, RunReport, RunSpec};
use msek::knowledge::PromptTemplate;
use msek::sim::{serve, SimServer, Simulator};
use msek::synthesize::{build_engine, EngineConfig, EngineKind};
use msek::{ArrivalTrace, Objective};

#[derive(Parser)]
#[command(
    name = "msek",
    version,
    about = "Monitor-synthesize-execute loop over a simulated web-server farm"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the simulator over the TCP line protocol.
    Sim {
        #[arg(long, default_value_t = 4242)]
        port: u16,
        #[command(flatten)]
        setup: Setup,
    },
    /// Run the managing loop against an embedded simulator.
    Run(RunArgs),
    /// Run the threshold-based reactive manager.
    Baseline {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        periods: Option<usize>,
        #[command(flatten)]
        setup: Setup,
    },
    /// Compare two run directories.
    Compare { a: PathBuf, b: PathBuf },
    /// Arrival-trace utilities.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Write a generated trace as CSV.
    Gen {
        #[arg(long, default_value = "worldcup-like")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Setup {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Trace CSV; defaults to the bundled worldcup-like trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Http,
    Mock,
    Replay,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Http => EngineKind::HttpChat,
            EngineArg::Mock => EngineKind::MockOracle,
            EngineArg::Replay => EngineKind::Replay,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "mock")]
    engine: EngineArg,
    #[arg(long)]
    periods: Option<usize>,
    /// Skip the queueing-model check on decisions.
    #[arg(long)]
    no_verify: bool,
    #[arg(long)]
    out: PathBuf,
    /// Transcript to replay (replay engine only).
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    /// Directory overriding the bundled prompt files.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[command(flatten)]
    setup: Setup,
}

struct Loaded {
    cfg: HarnessConfig,
    trace: ArrivalTrace,
    seed: u64,
}

impl Setup {
    fn load(&self) -> Result<Loaded> {
        let cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                HarnessConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => HarnessConfig::default(),
        };
        cfg.system.validate()?;
        let trace = match &self.trace {
            Some(p) => {
                ArrivalTrace::load(p).with_context(|| format!("loading trace {}", p.display()))?
            }
            None => msek::trace::worldcup_like(),
        };
        Ok(Loaded {
            cfg,
            trace,
            seed: self.seed,
        })
    }
}

impl Loaded {
    fn spec(&self, periods: Option<usize>) -> RunSpec {
        let mut spec = RunSpec::new(self.cfg.system.clone(), self.trace.clone(), self.seed);
        spec.periods = periods;
        spec.utility = self.cfg.utility;
        spec
    }
}

fn finish(out: &Path, report: &RunReport) -> Result<()> {
    let t = &report.totals;
    println!(
        "{} periods, utility {:.2}, mean rt {:.4} s, max rt {:.4} s, rt ok {:.1}%",
        t.periods,
        t.utility,
        t.mean_rt,
        t.max_rt,
        100.0 * t.rt_ok_fraction
    );
    println!("report written to {}", out.display());
    if let Some(reason) = &report.aborted {
        bail!("run aborted: {reason}");
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let loaded = args.setup.load()?;
    let mut spec = loaded.spec(args.periods);
    if let Some(dir) = &args.templates {
        spec.template = PromptTemplate::load_dir(dir, &Objective::new(spec.config.rt_threshold))?;
    }
    let mut ecfg = EngineConfig::of_kind(args.engine.into());
    if let Some(m) = args.model {
        ecfg.model = m;
    }
    if let Some(e) = args.endpoint {
        ecfg.endpoint = e;
    }
    ecfg.transcript = args.transcript;
    ecfg.validate(spec.config.control_period)?;
    let engine = build_engine(&ecfg, spec.config.rt_threshold)?;
    let out = run_embedded(
        &spec,
        Manager::mse(engine, !args.no_verify),
        Some(&args.out),
    )?;
    finish(&args.out, &out.report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Sim { port, setup } => {
            let loaded = setup.load()?;
            let sim = Simulator::from_config(&loaded.cfg.system, loaded.trace, loaded.seed);
            let listener = TcpListener::bind(("127.0.0.1", port))
                .with_context(|| format!("binding port {port}"))?;
            log::info!("simulator listening on {}", listener.local_addr()?);
            serve(&listener, SimServer::new(sim), None)?;
            Ok(())
        }
        Command::Run(args) => run(args),
        Command::Baseline {
            out,
            periods,
            setup,
        } => {
            let loaded = setup.load()?;
            let spec = loaded.spec(periods);
            let run = run_embedded(&spec, Manager::Reactive(loaded.cfg.thresholds), Some(&out))?;
            finish(&out, &run.report)
        }
        Command::Compare { a, b } => {
            let ra = RunReport::load(&a).with_context(|| format!("loading {}", a.display()))?;
            let rb = RunReport::load(&b).with_context(|| format!("loading {}", b.display()))?;
            print!("{}", compare(&ra, &rb)?.table());
            Ok(())
        }
        Command::Trace {
            command: TraceCommand::Gen { kind, out },
        } => {
            ArrivalTrace::generate(&kind)?.save(&out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
