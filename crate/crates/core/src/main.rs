use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crossdiff::cost::{catalogue, CostSpec};
use crossdiff::mtw::Verdict;
use crossdiff::scenario::{emit_tables, run_scenario_with, CheckOp, CheckSpec, MeasurePair, MeasureSource, RunOptions, Scenario};
use crossdiff::transport::CcmMode;
use crossdiff::Error;

#[derive(Parser)]
#[command(name = "crossdiff", version, about = "Cross-difference geometry, MTW checks and discrete optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cost catalogue.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
    /// Signature, Taylor order and a signature map of a cost.
    AnalyzeCost(Common),
    /// Conditions A0-A4 on the scenario grid.
    MtwCheck {
        #[command(flatten)]
        common: Common,
        /// Also run the strict/strong variants.
        #[arg(long)]
        strict: bool,
    },
    /// Solve the transport problem and report duality and support diagnostics.
    Solve(Common),
    /// Solve, then certify the plan by cyclical monotonicity.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Longest cycle checked.
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Force exhaustive enumeration.
        #[arg(long)]
        exact: bool,
    },
    /// Run every check declared in a scenario file.
    Run(Common),
}

#[derive(Subcommand)]
enum ZooAction {
    List,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalogue cost name, when no scenario file is given.
    #[arg(long)]
    cost: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Source measure CSV (`w,x1,...`).
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target measure CSV.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Output directory for report.json and tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for independent checks.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario, Error> {
        let mut s = match (&self.config, &self.cost) {
            (Some(p), _) => Scenario::load(p)?,
            (None, Some(name)) => {
                let mut spec = CostSpec::named(name, self.dim.unwrap_or(1));
                spec.dim = self.dim.or(Some(1));
                Scenario::new(spec)
            }
            (None, None) => return Err(Error::Config("give --config or --cost".into())),
        };
        match (&self.source, &self.target) {
            (Some(a), Some(b)) => {
                let cwd = std::env::current_dir()?;
                let abs = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { cwd.join(p) };
                s.measures = Some(MeasurePair { source: MeasureSource::File { path: abs(a) }, target: MeasureSource::File { path: abs(b) } });
            }
            (None, None) => {}
            _ => return Err(Error::Config("--source and --target go together".into())),
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        Ok(s)
    }

    fn out_dir(&self, s: &Scenario) -> PathBuf {
        self.out.clone().or_else(|| s.output_dir.as_ref().map(|d| s.base_dir.join(d))).unwrap_or_else(|| PathBuf::from("crossdiff-out"))
    }
}

fn preset(ops: &[CheckOp]) -> Vec<CheckSpec> {
    ops.iter().map(|op| CheckSpec::expecting(*op, Verdict::Pass)).collect()
}

fn execute(common: &Common, checks: Option<Vec<CheckSpec>>) -> Result<i32, Error> {
    let mut s = common.scenario()?;
    if let Some(checks) = checks {
        s.checks = checks;
    }
    let report = run_scenario_with(&s, &RunOptions { jobs: common.jobs })?;
    let out = common.out_dir(&s);
    report.write_json(&out)?;
    emit_tables(&report, &out)?;
    for c in &report.checks {
        let verdict = match (&c.verdict, &c.error) {
            (Some(v), _) => format!("{v:?}").to_lowercase(),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => "none".into(),
        };
        let expect = c.expect.map(|e| format!(" (expected {})", format!("{e:?}").to_lowercase())).unwrap_or_default();
        println!("[{:02}] {:<14} {verdict}{expect}{}", c.index, c.op.name(), if c.met { "" } else { "  <-- not met" });
    }
    println!("report: {}", out.join("report.json").display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Zoo { action: ZooAction::List } => {
            let mut out = std::io::stdout().lock();
            for e in catalogue() {
                let line = format!("{:<16} {:<28} params: {}; excluded: {}; domains: {}", e.name, e.formula, e.parameters, e.excluded_set, e.default_domains);
                if writeln!(out, "{line}").is_err() {
                    break;
                }
            }
            Ok(0)
        }
        Command::AnalyzeCost(common) => execute(&common, Some(preset(&[CheckOp::Signature, CheckOp::Taylor, CheckOp::SignatureMap]))),
        Command::MtwCheck { common, strict } => {
            let mut checks = preset(&[CheckOp::A0, CheckOp::A1, CheckOp::A2, CheckOp::A3, CheckOp::A4]);
            if strict {
                for op in [CheckOp::A3, CheckOp::A4] {
                    let mut k = CheckSpec::expecting(op, Verdict::Pass);
                    k.params.strict = Some(true);
                    k.params.strong = Some(true);
                    checks.push(k);
                }
            }
            execute(&common, Some(checks))
        }
        Command::Solve(common) => execute(&common, Some(preset(&[CheckOp::Solve, CheckOp::Spacelike, CheckOp::Decompose]))),
        Command::Certify { common, k, exact } => {
            let mut cert = CheckSpec::expecting(CheckOp::Certify, Verdict::Pass);
            cert.params.k = Some(k);
            cert.params.mode = Some(if exact { CcmMode::Exact } else { CcmMode::Auto });
            execute(&common, Some(vec![CheckSpec::expecting(CheckOp::Solve, Verdict::Pass), cert]))
        }
        Command::Run(common) => {
            if common.config.is_none() {
                Err(Error::Config("run needs --config".into()))
            } else {
                execute(&common, None)
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
