//! Run configurations. A TOML file holds one run; its `kind` key selects the
//! experiment and the remaining keys are checked strictly against it.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use wqed_core::{AtomSpec, DriveParams, FeedbackParams, NetworkSpec, PairKernel, SmeScheme};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Config {
    OneExcitation(OneExcitationConfig),
    TwoExcitation(TwoExcitationConfig),
    Bloch(BlochConfig),
    Sme(SmeConfig),
    Oracle(OracleConfig),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneExcitationConfig {
    #[serde(default, skip_serializing, rename = "kind")]
    pub tag: Option<String>,
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub waveguide_loss: f64,
    /// Initial amplitudes as [re, im]; defaults to atom 1 excited.
    pub initial: Option<Vec<[f64; 2]>>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Number of graph snapshots written, evenly spaced.
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoExcitationConfig {
    #[serde(default, skip_serializing, rename = "kind")]
    pub tag: Option<String>,
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub waveguide_loss: f64,
    /// 1-based pair initially excited.
    pub pair: Option<[usize; 2]>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// Also evolve the one-photon sector (vertex probabilities).
    pub field: Option<bool>,
    pub kgrid_points: Option<usize>,
    pub kgrid_half_width: Option<f64>,
    pub kernel: Option<KernelChoice>,
    pub snapshots: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    Symmetric,
    AsPrinted,
}

impl From<KernelChoice> for PairKernel {
    fn from(k: KernelChoice) -> Self {
        match k {
            KernelChoice::Symmetric => PairKernel::Symmetric,
            KernelChoice::AsPrinted => PairKernel::AsPrinted,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlochConfig {
    #[serde(default, skip_serializing, rename = "kind")]
    pub tag: Option<String>,
    pub drive: DriveParams,
    /// Present: noise-free feedback flow; absent: plain Bloch equations.
    pub feedback: Option<FeedbackParams>,
    /// Initial ⟨σᶻ⟩ with zero coherence; default −1.
    pub initial_sz: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmeConfig {
    #[serde(default, skip_serializing, rename = "kind")]
    pub tag: Option<String>,
    pub drive: DriveParams,
    pub feedback: FeedbackParams,
    pub initial_sz: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub scheme: Option<SmeScheme>,
    pub substeps: Option<usize>,
    /// Start of the stationary window.
    pub t_stationary: Option<f64>,
    /// Write every trajectory's ⟨σᶻ⟩ (large).
    pub dump_trajectories: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default, skip_serializing, rename = "kind")]
    pub tag: Option<String>,
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub waveguide_loss: f64,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    /// k-grid sizes; the error is reported for each.
    pub points: Option<Vec<usize>>,
    pub dk: Option<f64>,
}

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_SME_DT: f64 = 0.05;
pub const DEFAULT_N_TRAJ: usize = 2000;
pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_SUBSTEPS: usize = 10;
pub const DEFAULT_ORACLE_DK: f64 = 0.02;

fn max_round_trip(atoms: &[AtomSpec]) -> f64 {
    atoms.iter().map(AtomSpec::round_trip).fold(0.0, f64::max)
}

fn min_round_trip(atoms: &[AtomSpec]) -> f64 {
    atoms.iter().map(AtomSpec::round_trip).fold(f64::INFINITY, f64::min)
}

impl Config {
    /// Fills every unset field with its default.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        match &mut self {
            Config::OneExcitation(c) => {
                c.dt.get_or_insert(DEFAULT_DT);
                c.t_end.get_or_insert((5.0 * max_round_trip(&c.atoms)).max(10.0));
                c.snapshots.get_or_insert(50);
                let n = c.atoms.len();
                c.initial.get_or_insert_with(|| {
                    let mut v = vec![[0.0, 0.0]; n];
                    if n > 0 {
                        v[0][0] = 1.0;
                    }
                    v
                });
            }
            Config::TwoExcitation(c) => {
                c.pair.get_or_insert([1, 2]);
                c.dt.get_or_insert(DEFAULT_DT);
                c.t_end.get_or_insert((2.0 * max_round_trip(&c.atoms)).max(10.0));
                c.field.get_or_insert(true);
                c.kgrid_points.get_or_insert(2048);
                c.kernel.get_or_insert(KernelChoice::Symmetric);
                c.snapshots.get_or_insert(50);
                if c.kgrid_half_width.is_none() && !c.atoms.is_empty() {
                    let ybar = c.atoms.iter().map(AtomSpec::emission_rate).fold(0.0, f64::max);
                    c.kgrid_half_width = Some((20.0 * ybar.max(1e-3)).min(c.atoms[0].omega_a));
                }
            }
            Config::Bloch(c) => {
                c.dt.get_or_insert(DEFAULT_DT);
                c.t_end.get_or_insert(200.0);
                c.initial_sz.get_or_insert(-1.0);
            }
            Config::Sme(c) => {
                c.dt.get_or_insert(DEFAULT_SME_DT);
                let t_end = *c.t_end.get_or_insert(200.0);
                c.n_traj.get_or_insert(DEFAULT_N_TRAJ);
                c.seed.get_or_insert(DEFAULT_SEED);
                c.scheme.get_or_insert(SmeScheme::Kraus);
                c.substeps.get_or_insert(DEFAULT_SUBSTEPS);
                c.t_stationary.get_or_insert(0.5 * t_end);
                c.initial_sz.get_or_insert(-1.0);
                c.dump_trajectories.get_or_insert(false);
            }
            Config::Oracle(c) => {
                c.dt.get_or_insert(DEFAULT_DT);
                c.t_end.get_or_insert(3.0 * max_round_trip(&c.atoms));
                c.points.get_or_insert(vec![4096]);
                c.dk.get_or_insert(DEFAULT_ORACLE_DK);
            }
        }
        // the parsed `kind` key is only a discriminant
        match &mut self {
            Config::OneExcitation(c) => c.tag = None,
            Config::TwoExcitation(c) => c.tag = None,
            Config::Bloch(c) => c.tag = None,
            Config::Sme(c) => c.tag = None,
            Config::Oracle(c) => c.tag = None,
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &'static str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::field(name, format!("{x} must be > 0"))),
            _ => Ok(()),
        };
        match self {
            Config::OneExcitation(c) => {
                self.network()?;
                positive("dt", c.dt)?;
                positive("t_end", c.t_end)?;
                if let Some(init) = &c.initial {
                    if init.len() != c.atoms.len() {
                        return Err(CliError::field("initial", format!("{} entries for {} atoms", init.len(), c.atoms.len())));
                    }
                }
            }
            Config::TwoExcitation(c) => {
                self.network()?;
                positive("dt", c.dt)?;
                positive("t_end", c.t_end)?;
                if let Some([j, l]) = c.pair {
                    let n = c.atoms.len();
                    if j == l || j == 0 || l == 0 || j > n || l > n {
                        return Err(CliError::field("pair", format!("[{j}, {l}] is not a pair of distinct atoms in 1..={n}")));
                    }
                }
                if c.atoms.len() < 2 {
                    return Err(CliError::field("atoms", "two excitations need at least two atoms"));
                }
            }
            Config::Bloch(c) => {
                positive("dt", c.dt)?;
                positive("t_end", c.t_end)?;
                c.drive.validate().map_err(|e| CliError::field("drive", e.to_string()))?;
            }
            Config::Sme(c) => {
                positive("dt", c.dt)?;
                positive("t_end", c.t_end)?;
                if matches!(c.n_traj, Some(n) if n < 2) {
                    return Err(CliError::field("n_traj", "needs at least 2 trajectories"));
                }
            }
            Config::Oracle(c) => {
                self.network()?;
                positive("dt", c.dt)?;
                positive("t_end", c.t_end)?;
                positive("dk", c.dk)?;
            }
        }
        Ok(())
    }

    /// The validated network, for kinds that have one.
    pub fn network(&self) -> Result<NetworkSpec, CliError> {
        let (atoms, loss) = match self {
            Config::OneExcitation(c) => (&c.atoms, c.waveguide_loss),
            Config::TwoExcitation(c) => (&c.atoms, c.waveguide_loss),
            Config::Oracle(c) => (&c.atoms, c.waveguide_loss),
            _ => return Err(CliError::field("kind", "this kind has no atom network")),
        };
        NetworkSpec::new(atoms.clone(), loss).map_err(|e| match e {
            wqed_core::Error::UnsortedPositions { index, .. } => {
                CliError::field("atoms", format!("atoms[{index}].position: {e}"))
            }
            other => CliError::field("atoms", other.to_string()),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Config::OneExcitation(_) => "one-excitation",
            Config::TwoExcitation(_) => "two-excitation",
            Config::Bloch(_) => "bloch",
            Config::Sme(_) => "sme",
            Config::Oracle(_) => "oracle",
        }
    }

    pub fn set_dt(&mut self, dt: f64) {
        match self {
            Config::OneExcitation(c) => c.dt = Some(dt),
            Config::TwoExcitation(c) => c.dt = Some(dt),
            Config::Bloch(c) => c.dt = Some(dt),
            Config::Sme(c) => c.dt = Some(dt),
            Config::Oracle(c) => c.dt = Some(dt),
        }
    }

    pub fn set_t_end(&mut self, t: f64) {
        match self {
            Config::OneExcitation(c) => c.t_end = Some(t),
            Config::TwoExcitation(c) => c.t_end = Some(t),
            Config::Bloch(c) => c.t_end = Some(t),
            Config::Sme(c) => {
                c.t_end = Some(t);
                c.t_stationary = c.t_stationary.map(|s| s.min(0.5 * t));
            }
            Config::Oracle(c) => c.t_end = Some(t),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        if let Config::Sme(c) = self {
            c.seed = Some(seed);
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Config::Sme(c) => c.seed,
            _ => None,
        }
    }

    /// Shortest round trip of the network, if any.
    pub fn min_delay(&self) -> Option<f64> {
        match self {
            Config::OneExcitation(c) => Some(min_round_trip(&c.atoms)),
            Config::TwoExcitation(c) => Some(min_round_trip(&c.atoms)),
            Config::Oracle(c) => Some(min_round_trip(&c.atoms)),
            _ => None,
        }
    }
}

fn strict<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
}

/// Parses one run from TOML text.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    let kind = match table.get("kind") {
        Some(toml::Value::String(s)) => s.clone(),
        Some(_) => return Err(CliError::field("kind", "must be a string")),
        None => return Err(CliError::field("kind", "missing; one of one-excitation, two-excitation, bloch, sme, oracle")),
    };
    let cfg = match kind.as_str() {
        "one-excitation" => Config::OneExcitation(strict(text)?),
        "two-excitation" => Config::TwoExcitation(strict(text)?),
        "bloch" => Config::Bloch(strict(text)?),
        "sme" => Config::Sme(strict(text)?),
        "oracle" => Config::Oracle(strict(text)?),
        other => return Err(CliError::field("kind", format!("unknown kind `{other}`"))),
    };
    cfg.resolve()
}

/// Loads a TOML run file, or the runs recorded in a JSON manifest.
pub fn load_config(path: &Path) -> Result<Vec<Config>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: crate::output::RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        return m.configs.into_iter().map(Config::resolve).collect();
    }
    Ok(vec![parse_config(&text).map_err(|e| e.in_file(path))?])
}

/// The TOML text of a single run (used to write configs back out).
pub fn to_toml(cfg: &Config) -> Result<String, CliError> {
    toml::to_string(cfg).map_err(|e| CliError::Schema(e.to_string()))
}
