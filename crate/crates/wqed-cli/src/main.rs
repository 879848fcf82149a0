use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use wqed_cli::config::{BlochConfig, Config, SmeConfig};
use wqed_cli::presets::{run_preset, write_preset_outputs, Overrides};
use wqed_cli::run::run_config;
use wqed_cli::{load_config, CliError, RunManifest};
use wqed_core::{DriveParams, FeedbackParams, SmeScheme};

#[derive(Parser)]
#[command(name = "wqed", version, about = "Feedback dynamics of atoms in front of a mirror-terminated waveguide")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in experiment, or all of them with --all.
    Preset {
        name: Option<String>,
        #[arg(long, conflicts_with = "name")]
        all: bool,
        /// List preset names.
        #[arg(long)]
        list: bool,
    },
    /// Run a TOML config file or re-run a manifest.json.
    Simulate { config: PathBuf },
    /// Single-atom Bloch equations, optionally with the noise-free feedback flow.
    Bloch(BlochArgs),
    /// Homodyne-feedback trajectory ensemble.
    Sme(SmeArgs),
    /// DDE against the k-grid Schrödinger oracle (refinement ladder).
    OracleCheck {
        /// Oracle config; defaults to the built-in N=1 and N=2 ladder.
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DriveArgs {
    #[arg(long, default_value_t = 0.0)]
    rabi: f64,
    #[arg(long = "detuning", default_value_t = 0.0, allow_negative_numbers = true)]
    detuning_y: f64,
    #[arg(long = "gamma-eff")]
    gamma_eff: f64,
    #[arg(long = "gamma-env", default_value_t = 0.0)]
    gamma_env: f64,
    #[arg(long = "initial-sz", default_value_t = -1.0, allow_negative_numbers = true)]
    initial_sz: f64,
}

impl DriveArgs {
    fn drive(&self) -> DriveParams {
        DriveParams { rabi: self.rabi, detuning_y: self.detuning_y, gamma_eff: self.gamma_eff, gamma_env: self.gamma_env }
    }
}

#[derive(Args)]
struct BlochArgs {
    #[command(flatten)]
    drive: DriveArgs,
    /// Feedback gain; enables the feedback flow.
    #[arg(long = "g-f")]
    g_f: Option<f64>,
    #[arg(long = "gamma-1r", default_value_t = 0.0)]
    gamma_1r: f64,
}

#[derive(Args)]
struct SmeArgs {
    #[command(flatten)]
    drive: DriveArgs,
    #[arg(long = "g-f")]
    g_f: f64,
    #[arg(long = "gamma-1r")]
    gamma_1r: f64,
    #[arg(long = "n-traj")]
    n_traj: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SmeScheme>,
    #[arg(long)]
    substeps: Option<usize>,
    /// Write every trajectory's ⟨σᶻ⟩.
    #[arg(long)]
    dump_trajectories: bool,
}

fn parse_scheme(s: &str) -> Result<SmeScheme, String> {
    match s {
        "kraus" => Ok(SmeScheme::Kraus),
        "euler-maruyama" | "em" => Ok(SmeScheme::EulerMaruyama),
        _ => Err(format!("unknown scheme `{s}` (kraus, euler-maruyama)")),
    }
}

fn apply(mut c: Config, cli: &Cli) -> Config {
    if let Some(dt) = cli.dt {
        c.set_dt(dt);
    }
    if let Some(t) = cli.t_end {
        c.set_t_end(t);
    }
    if let Some(s) = cli.seed {
        c.set_seed(s);
    }
    c
}

/// Runs configs, writes outputs under `dir` and prints the summary.
fn run_configs(configs: Vec<Config>, dir: PathBuf, source: Option<&str>) -> Result<bool, CliError> {
    let start = Instant::now();
    let data = configs.iter().map(run_config).collect::<Result<Vec<_>, _>>()?;
    let mut manifest = RunManifest::new(None, source);
    manifest.seeds = configs.iter().filter_map(Config::seed).collect();
    manifest.configs = configs;
    manifest.wall_clock_s = start.elapsed().as_secs_f64();
    for d in &data {
        if let wqed_cli::run::RunData::Oracle { ladder, .. } = d {
            for (m, _, e) in ladder {
                println!("M = {m:>5}: relative error {e:.4e}");
            }
        }
        if let wqed_cli::run::RunData::Sme { steady_mean, stationary_std, .. } = d {
            println!("steady mean {:.5e} +- {:.2e}, stationary std {:.4e}", steady_mean.0, steady_mean.1, stationary_std.0);
        }
        if let wqed_cli::run::RunData::Bloch { trajectory, steady } = d {
            println!("sigma_z(T) = {:.8e}, steady value {steady:?}", trajectory.states.last().unwrap().sz.re);
        }
    }
    write_preset_outputs(&dir, &data, &mut manifest)?;
    println!("wrote {}", dir.join("manifest.json").display());
    Ok(true)
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let ov = Overrides { out: Some(cli.out.clone()), seed: cli.seed, dt: cli.dt, t_end: cli.t_end };
    match &cli.command {
        Command::Preset { list: true, .. } => {
            for p in wqed_cli::PRESETS {
                println!("{p}");
            }
            Ok(true)
        }
        Command::Preset { all: true, .. } => {
            let (outs, criteria) = wqed_cli::suite::run_all(&ov)?;
            for (name, o) in &outs {
                println!("{name} ({:.2} s)", o.runtime);
                for a in &o.manifest.assertions {
                    println!("  {}", a.line());
                }
            }
            for c in &criteria {
                println!("{}", c.line());
            }
            Ok(criteria.iter().all(|c| c.passed))
        }
        Command::Preset { name: Some(name), .. } => {
            let o = run_preset(name, &ov)?;
            for n in &o.manifest.notes {
                println!("{n}");
            }
            for a in &o.manifest.assertions {
                println!("{}", a.line());
            }
            println!("wrote {}", cli.out.join(name).join("manifest.json").display());
            Ok(o.manifest.passed())
        }
        Command::Preset { .. } => Err(CliError::field("preset", "give a preset name, --all or --list")),
        Command::Simulate { config } => {
            let configs = load_config(config)?.into_iter().map(|c| apply(c, cli).resolve()).collect::<Result<_, _>>()?;
            let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            run_configs(configs, cli.out.join(stem), Some(&config.display().to_string()))
        }
        Command::Bloch(b) => {
            let cfg = Config::Bloch(BlochConfig {
                drive: b.drive.drive(),
                feedback: b.g_f.map(|g| FeedbackParams::new(g, b.gamma_1r)),
                initial_sz: Some(b.drive.initial_sz),
                ..Default::default()
            });
            run_configs(vec![apply(cfg, cli).resolve()?], cli.out.join("bloch"), None)
        }
        Command::Sme(s) => {
            let cfg = Config::Sme(SmeConfig {
                drive: s.drive.drive(),
                feedback: FeedbackParams::new(s.g_f, s.gamma_1r),
                initial_sz: Some(s.drive.initial_sz),
                n_traj: s.n_traj,
                scheme: s.scheme,
                substeps: s.substeps,
                dump_trajectories: Some(s.dump_trajectories),
                ..Default::default()
            });
            run_configs(vec![apply(cfg, cli).resolve()?], cli.out.join("sme"), None)
        }
        Command::OracleCheck { config: Some(path) } => {
            let configs = load_config(path)?.into_iter().map(|c| apply(c, cli).resolve()).collect::<Result<_, _>>()?;
            run_configs(configs, cli.out.join("oracle-check"), Some(&path.display().to_string()))
        }
        Command::OracleCheck { config: None } => {
            let o = run_preset("oracle", &ov)?;
            for (k, v) in &o.metrics {
                println!("{k}: {v:.4e}");
            }
            for a in &o.manifest.assertions {
                println!("{}", a.line());
            }
            Ok(o.manifest.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more assertions failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
