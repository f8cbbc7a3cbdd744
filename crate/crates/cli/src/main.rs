use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use qtraj_cli::config::{self, BornCurveConfig, DistributionConfig, JumpConfig};
use qtraj_cli::verify::{Profile, Verifier, VerifyOptions};
use qtraj_cli::{commands, CliError, CliResult};

#[derive(Parser)]
#[command(name = "qtraj", version, about = "Quantum trajectory ensembles: Born curves, distributions, jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outcome probability against the initial rho00 for one or more gS values.
    BornCurve(BornCurveArgs),
    /// Histograms of z at fixed evolution parameters, with the analytic density.
    Distribution(DistributionArgs),
    /// Two-delta decomposition of the jump-model ensemble.
    Jump(JumpArgs),
    /// Run the acceptance criteria.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file (a run manifest works too); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    /// Evolution-parameter budget per trajectory.
    #[arg(long)]
    max_tau: Option<f64>,
}

#[derive(Args)]
struct BornCurveArgs {
    #[command(flatten)]
    common: Common,
    /// Noise strength g*S_xi; repeat for several curves.
    #[arg(long)]
    gsxi: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    x_grid: Vec<f64>,
    /// integrated, ito or stratonovich_heun.
    #[arg(long)]
    scheme: Option<String>,
    /// gaussian or z2.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistributionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    tau_snapshots: Vec<f64>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct JumpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    tau_snapshots: Vec<f64>,
    /// Jump rate in units of the Born rate.
    #[arg(long)]
    rate_multiplier: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// 10^4 trajectories with widened tolerances.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// JSON report path.
    #[arg(long, default_value = "verify_report.json")]
    out: PathBuf,
    /// Comma-separated criterion ids.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long, default_value_t = 1.0, hide = true)]
    tolerance_scale: f64,
}

fn parse_enum<T: FromStr<Err = String>>(flag: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

macro_rules! set {
    ($cfg:ident . $field:ident, $v:expr) => {
        if let Some(v) = $v {
            $cfg.$field = v;
        }
    };
}

fn apply_common(c: &Common, n: &mut usize, seed: &mut u64, dt: &mut f64, g: &mut f64, max_tau: &mut f64) {
    if let Some(v) = c.n_traj {
        *n = v;
    }
    if let Some(v) = c.seed {
        *seed = v;
    }
    if let Some(v) = c.dt {
        *dt = v;
    }
    if let Some(v) = c.g {
        *g = v;
    }
    if let Some(v) = c.max_tau {
        *max_tau = v;
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::BornCurve(a) => {
            let mut cfg: BornCurveConfig = config::load(a.common.config.as_deref())?;
            apply_common(&a.common, &mut cfg.n_traj, &mut cfg.seed, &mut cfg.dt, &mut cfg.g, &mut cfg.max_tau);
            if !a.gsxi.is_empty() {
                cfg.gsxi = a.gsxi;
            }
            if !a.x_grid.is_empty() {
                cfg.x_grid = a.x_grid;
            }
            set!(cfg.scheme, a.scheme.map(|s| parse_enum("scheme", &s)).transpose()?);
            set!(cfg.noise, a.noise.map(|s| parse_enum("noise", &s)).transpose()?);
            set!(cfg.out, a.out);
            let m = commands::born_curve(&cfg)?;
            eprintln!("wrote {} ({:.1}s)", cfg.out.display(), m.wall_clock_seconds);
        }
        Command::Distribution(a) => {
            let mut cfg: DistributionConfig = config::load(a.common.config.as_deref())?;
            apply_common(&a.common, &mut cfg.n_traj, &mut cfg.seed, &mut cfg.dt, &mut cfg.g, &mut cfg.max_tau);
            set!(cfg.x, a.x);
            if !a.tau_snapshots.is_empty() {
                cfg.tau_snapshots = a.tau_snapshots;
            }
            set!(cfg.scheme, a.scheme.map(|s| parse_enum("scheme", &s)).transpose()?);
            set!(cfg.noise, a.noise.map(|s| parse_enum("noise", &s)).transpose()?);
            set!(cfg.out_dir, a.out_dir);
            let m = commands::distribution(&cfg)?;
            eprintln!("wrote {} files to {} ({:.1}s)", m.outputs.len(), cfg.out_dir.display(), m.wall_clock_seconds);
        }
        Command::Jump(a) => {
            let mut cfg: JumpConfig = config::load(a.common.config.as_deref())?;
            apply_common(&a.common, &mut cfg.n_traj, &mut cfg.seed, &mut cfg.dt, &mut cfg.g, &mut cfg.max_tau);
            set!(cfg.x, a.x);
            if !a.tau_snapshots.is_empty() {
                cfg.tau_snapshots = a.tau_snapshots;
            }
            set!(cfg.rate_multiplier, a.rate_multiplier);
            set!(cfg.out, a.out);
            let m = commands::jump(&cfg)?;
            eprintln!("wrote {} ({:.1}s)", cfg.out.display(), m.wall_clock_seconds);
        }
        Command::Verify(a) => {
            let opts = VerifyOptions {
                profile: if a.quick { Profile::quick() } else { Profile::full() },
                seed: a.seed,
                only: a.only,
                tolerance_scale: a.tolerance_scale,
                threads: a.threads,
            };
            let mut v = Verifier::new(opts);
            let report = v.run(|r| println!("{}", r.line()))?;
            let failed = report.criteria.iter().filter(|c| !c.passed).count();
            println!(
                "{}: {}/{} criteria passed ({} profile, {:.1}s)",
                if report.passed { "PASS" } else { "FAIL" },
                report.criteria.len() - failed,
                report.criteria.len(),
                report.profile.name,
                report.wall_clock_seconds
            );
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(&a.out, text + "\n").map_err(|e| CliError::io(&a.out, e))?;
            if !report.passed {
                return Err(CliError::Verification(format!("{failed} criteria failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
