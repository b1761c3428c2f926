//! `georeg`: run, compare and inspect georegistration scenarios.
//!
//! Failures print a single JSON record `{"error": {"kind", "message"}}` on
//! stderr and exit with a nonzero code (2 for usage errors, 1 otherwise).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use georeg::harness::{
    compare_methods, report_to_csv, report_to_json, run_scenario, Method, ReportFormat, Scenario, ScenarioConfig,
};
use georeg::map_index::{load_db, save_db};
use georeg::{Error, Result};

#[derive(Parser)]
#[command(name = "georeg", version, about = "Map-aided UAV geolocalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run several methods over a range of seeds and summarize.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of seeds, starting at the scenario seed.
        #[arg(long, default_value_t = 20)]
        runs: u64,
        /// Methods to compare, comma separated.
        #[arg(long, value_delimiter = ',', default_values = ["proposed", "baseline-m1", "vio-only"])]
        methods: Vec<MethodArg>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build the map feature database of a scenario, or inspect a database file.
    BuildMap {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Database file to write.
        #[arg(long, required_unless_present = "inspect")]
        out: Option<PathBuf>,
        /// Print the header and extent of an existing database file.
        #[arg(long, conflicts_with = "out")]
        inspect: Option<PathBuf>,
    },
    /// Print intermediate data of a scenario for debugging.
    Dump {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = DumpWhat::Config)]
        what: DumpWhat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML). Defaults to the selected preset.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: rural-like, zone-like or noiseless.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Proposed,
    BaselineM1,
    VioOnly,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Proposed => Method::Proposed,
            MethodArg::BaselineM1 => Method::BaselineM1,
            MethodArg::VioOnly => Method::VioOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DumpWhat {
    /// The resolved scenario, TOML.
    Config,
    /// Odometry keyframes with their tracked features, JSON.
    Vio,
    /// The optimized pose graph of the proposed method, JSON.
    Graph,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => ScenarioConfig::preset(name)?,
            (None, None) => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.method {
            cfg.method = m.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| if text.ends_with('\n') { Ok(()) } else { stdout.write_all(b"\n") })
                .map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn pretty(text: serde_json::Result<String>) -> Result<String> {
    text.map_err(|e| Error::InvalidInput {
        field: "output",
        reason: e.to_string(),
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, output } => {
            let cfg = scenario.resolve()?;
            let report = run_scenario(&cfg)?;
            let text = match ReportFormat::from(output.format) {
                ReportFormat::Json => report_to_json(&report)?,
                ReportFormat::Csv => report_to_csv(&report)?,
            };
            emit(output.out.as_deref(), &text)?;
            if output.out.is_some() {
                emit(None, &pretty(serde_json::to_string_pretty(&report.metrics))?)?;
            }
            Ok(())
        }
        Command::Compare {
            scenario,
            runs,
            methods,
            output,
        } => {
            let cfg = scenario.resolve()?;
            if runs == 0 {
                return Err(Error::Config {
                    field: "runs".into(),
                    reason: "must be positive".into(),
                });
            }
            let seeds: Vec<u64> = (0..runs).map(|i| cfg.seed.wrapping_add(i)).collect();
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
            let table = compare_methods(&cfg, &methods, &seeds)?;
            let text = match ReportFormat::from(output.format) {
                ReportFormat::Json => table.to_json()?,
                ReportFormat::Csv => table.to_csv()?,
            };
            emit(output.out.as_deref(), &text)
        }
        Command::BuildMap { scenario, out, inspect } => {
            if let Some(path) = inspect {
                let db = load_db(&path)?;
                let summary = serde_json::json!({
                    "path": path,
                    "entries": db.len(),
                    "descriptor_dim": db.descriptor_dim,
                    "stride": db.stride,
                    "geometry": db.geom,
                    "extent_m": [db.geom.width_m(), db.geom.height_m()],
                });
                return emit(None, &pretty(serde_json::to_string_pretty(&summary))?);
            }
            let cfg = scenario.resolve()?;
            let s = Scenario::prepare(&cfg)?;
            let path = out.expect("clap requires --out without --inspect");
            save_db(&s.db, &path)?;
            let summary = serde_json::json!({
                "path": path,
                "seed": cfg.seed,
                "entries": s.db.len(),
                "landmarks": s.world.landmarks.len(),
                "descriptor_dim": s.db.descriptor_dim,
                "stride": s.db.stride,
            });
            emit(None, &pretty(serde_json::to_string_pretty(&summary))?)
        }
        Command::Dump { scenario, what, out } => {
            let cfg = scenario.resolve()?;
            let text = match what {
                DumpWhat::Config => cfg.to_toml_string()?,
                DumpWhat::Vio => pretty(serde_json::to_string_pretty(&Scenario::prepare(&cfg)?.vio))?,
                DumpWhat::Graph => {
                    let s = Scenario::prepare(&cfg)?;
                    let statuses = s.register(Method::Proposed)?;
                    let regs: Vec<_> = statuses.iter().filter_map(|st| st.result().cloned()).collect();
                    match s.fuse(&regs, &cfg.optimizer)? {
                        Some((graph, _)) => graph.to_json()?,
                        None => return Err(Error::GaugeFree),
                    }
                }
            };
            emit(out.as_deref(), &text)
        }
    }
}

fn error_record(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("{}", error_record("usage", e.to_string().trim_end()));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
