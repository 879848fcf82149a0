//! Executes one resolved configuration and turns the result into tables.

use wqed_core::graph::{snapshot_one_excitation, snapshot_two_excitation, GraphSnapshot};
use wqed_core::one_excitation::{simulate_one_excitation, OneExcitationRun};
use wqed_core::open_system::{
    integrate_bloch, integrate_feedback_mean, steady_sigma_z, steady_sigma_z_feedback, BlochTrajectory, BlochVector,
};
use wqed_core::oracle::{compare_oracle_dde_detail, KGrid, OracleRun};
use wqed_core::sme::{run_ensemble_opts, EnsembleRun, SmeOptions};
use wqed_core::two_excitation::{
    simulate_pair_amplitudes_with, simulate_single_photon_component, PairRun, PairState, SinglePhotonField,
};
use wqed_core::{network::pair_list, C64};

use crate::config::{Config, SmeConfig};
use crate::output::{col, Table};
use crate::CliError;

pub enum RunData {
    OneExcitation {
        run: OneExcitationRun,
        snapshots: Vec<GraphSnapshot>,
    },
    TwoExcitation {
        pair: PairRun,
        field: Option<SinglePhotonField>,
        snapshots: Vec<GraphSnapshot>,
    },
    Bloch {
        trajectory: BlochTrajectory,
        /// Closed-form steady ⟨σᶻ⟩ when it exists.
        steady: Option<f64>,
    },
    Sme {
        run: EnsembleRun,
        config: SmeConfig,
        /// Stationary-window mean and its standard error.
        steady_mean: (f64, f64),
        /// Stationary standard deviation and its batch standard error.
        stationary_std: (f64, f64),
    },
    Oracle {
        /// (points, dk, relative error) for each requested grid.
        ladder: Vec<(usize, f64, f64)>,
        finest: Box<(OneExcitationRun, OracleRun)>,
    },
}

fn spaced(len: usize, count: usize) -> Vec<usize> {
    if len == 0 || count == 0 {
        return Vec::new();
    }
    let count = count.min(len);
    if count == 1 {
        return vec![len - 1];
    }
    let mut v: Vec<usize> = (0..count).map(|i| i * (len - 1) / (count - 1)).collect();
    v.dedup();
    v
}

/// Expects a resolved configuration.
pub fn run_config(cfg: &Config) -> Result<RunData, CliError> {
    let missing = |f: &str| CliError::field(f, "unresolved configuration");
    match cfg {
        Config::OneExcitation(c) => {
            let net = cfg.network()?;
            let init: Vec<C64> =
                c.initial.as_ref().ok_or_else(|| missing("initial"))?.iter().map(|[r, i]| C64::new(*r, *i)).collect();
            let run = simulate_one_excitation(
                &net,
                &init,
                c.t_end.ok_or_else(|| missing("t_end"))?,
                c.dt.ok_or_else(|| missing("dt"))?,
            )?;
            let snapshots = spaced(run.trajectory.len(), c.snapshots.unwrap_or(0))
                .into_iter()
                .map(|i| snapshot_one_excitation(&run, run.trajectory.times[i]))
                .collect::<Result<_, _>>()?;
            Ok(RunData::OneExcitation { run, snapshots })
        }
        Config::TwoExcitation(c) => {
            let net = cfg.network()?;
            let [j, l] = c.pair.ok_or_else(|| missing("pair"))?;
            let (t_end, dt) = (c.t_end.ok_or_else(|| missing("t_end"))?, c.dt.ok_or_else(|| missing("dt"))?);
            let kernel = c.kernel.ok_or_else(|| missing("kernel"))?.into();
            let pair = simulate_pair_amplitudes_with(&net, &PairState::single(net.len(), j - 1, l - 1), t_end, dt, kernel)?;
            let mut snapshots = Vec::new();
            let field = if c.field.unwrap_or(false) {
                let wa = net.omega_a()?;
                let grid = KGrid::band(
                    wa,
                    c.kgrid_half_width.ok_or_else(|| missing("kgrid_half_width"))?,
                    c.kgrid_points.ok_or_else(|| missing("kgrid_points"))?,
                )?;
                let field = simulate_single_photon_component(&net, &pair, &grid, t_end, dt)?;
                for i in spaced(field.times.len(), c.snapshots.unwrap_or(0)) {
                    snapshots.push(snapshot_two_excitation(&pair, &field, field.times[i])?);
                }
                Some(field)
            } else {
                None
            };
            Ok(RunData::TwoExcitation { pair, field, snapshots })
        }
        Config::Bloch(c) => {
            let init = BlochVector::from_z(c.initial_sz.unwrap_or(-1.0));
            let (t_end, dt) = (c.t_end.ok_or_else(|| missing("t_end"))?, c.dt.ok_or_else(|| missing("dt"))?);
            let (trajectory, steady) = match &c.feedback {
                Some(fb) => {
                    (integrate_feedback_mean(&c.drive, fb, &init, t_end, dt)?, steady_sigma_z_feedback(&c.drive, fb).ok())
                }
                None => (integrate_bloch(&c.drive, &init, t_end, dt)?, steady_sigma_z(&c.drive).ok()),
            };
            Ok(RunData::Bloch { trajectory, steady })
        }
        Config::Sme(c) => {
            let opts = SmeOptions {
                scheme: c.scheme.ok_or_else(|| missing("scheme"))?,
                substeps: c.substeps.ok_or_else(|| missing("substeps"))?,
            };
            let run = run_ensemble_opts(
                &c.drive,
                &c.feedback,
                &BlochVector::from_z(c.initial_sz.unwrap_or(-1.0)),
                c.t_end.ok_or_else(|| missing("t_end"))?,
                c.dt.ok_or_else(|| missing("dt"))?,
                c.n_traj.ok_or_else(|| missing("n_traj"))?,
                c.seed.ok_or_else(|| missing("seed"))?,
                &opts,
            )?;
            let t_from = c.t_stationary.ok_or_else(|| missing("t_stationary"))?;
            let steady_mean = run.steady_mean(t_from)?;
            let batches = (run.sigma_z.len() / 2).clamp(2, 20);
            let stationary_std = run.stationary_std(t_from, batches)?;
            Ok(RunData::Sme { run, config: c.clone(), steady_mean, stationary_std })
        }
        Config::Oracle(c) => {
            let net = cfg.network()?;
            let wa = net.omega_a()?;
            let (t_end, dt, dk) = (
                c.t_end.ok_or_else(|| missing("t_end"))?,
                c.dt.ok_or_else(|| missing("dt"))?,
                c.dk.ok_or_else(|| missing("dk"))?,
            );
            let mut ladder = Vec::new();
            let mut finest = None;
            let mut points = c.points.clone().ok_or_else(|| missing("points"))?;
            points.sort_unstable();
            for m in points {
                let grid = KGrid::centered(wa, dk, m)?;
                let (err, dde, oracle) = compare_oracle_dde_detail(&net, &grid, t_end, dt)?;
                ladder.push((m, dk, err));
                finest = Some((dde, oracle));
            }
            let finest = Box::new(finest.ok_or_else(|| CliError::field("points", "no grid sizes given"))?);
            Ok(RunData::Oracle { ladder, finest })
        }
    }
}

impl RunData {
    pub fn tables(&self) -> Vec<Table> {
        match self {
            RunData::OneExcitation { run, .. } => {
                let n = run.network.len();
                let mut cols = vec![col("t", "s")];
                for j in 1..=n {
                    cols.push(col(format!("c{j}_re"), "1"));
                    cols.push(col(format!("c{j}_im"), "1"));
                }
                cols.extend((1..=n).map(|j| col(format!("p{j}"), "1")));
                cols.push(col("photon", "1"));
                let mut t = Table::with_columns("amplitudes", cols);
                for (i, &time) in run.trajectory.times.iter().enumerate() {
                    let s = run.trajectory.state(i);
                    let mut row = vec![time];
                    for c in s {
                        row.push(c.re);
                        row.push(c.im);
                    }
                    row.extend(s.iter().map(|c| c.norm_sqr()));
                    row.push(run.photon_probability[i]);
                    t.push(row);
                }
                vec![t]
            }
            RunData::TwoExcitation { pair, field, .. } => {
                let n = pair.n_atoms;
                let pairs = pair_list(n);
                let mut cols = vec![col("t", "s")];
                cols.extend(pairs.iter().map(|(j, l)| col(format!("p{}{}", j + 1, l + 1), "1")));
                let mut t = Table::with_columns("pairs", cols);
                for (i, &time) in pair.trajectory.times.iter().enumerate() {
                    let mut row = vec![time];
                    row.extend(pair.trajectory.state(i).iter().map(|c| c.norm_sqr()));
                    t.push(row);
                }
                let mut out = vec![t];
                if let Some(f) = field {
                    let mut cols = vec![col("t", "s")];
                    cols.extend((1..=n).map(|j| col(format!("p{j}"), "1")));
                    let mut v = Table::with_columns("vertices", cols);
                    for (time, p) in f.times.iter().zip(&f.vertex_probability) {
                        let mut row = vec![*time];
                        row.extend(p);
                        v.push(row);
                    }
                    out.push(v);
                }
                out
            }
            RunData::Bloch { trajectory, .. } => {
                let mut t = Table::new("bloch", &[("t", "s"), ("sp_re", "1"), ("sp_im", "1"), ("sz", "1")]);
                for (time, s) in trajectory.times.iter().zip(&trajectory.states) {
                    t.push(vec![*time, s.sp.re, s.sp.im, s.sz.re]);
                }
                vec![t]
            }
            RunData::Sme { run, config, .. } => {
                let s = &run.stats;
                let mut t =
                    Table::new("ensemble", &[("t", "s"), ("mean_sz", "1"), ("var_sz", "1"), ("stderr_sz", "1")]);
                for i in 0..s.times.len() {
                    t.push(vec![s.times[i], s.mean_sz[i], s.var_sz[i], s.stderr_sz[i]]);
                }
                let mut out = vec![t];
                if config.dump_trajectories == Some(true) {
                    let mut cols = vec![col("t", "s")];
                    cols.extend((0..run.sigma_z.len()).map(|k| col(format!("sz_{k}"), "1")));
                    let mut d = Table::with_columns("trajectories", cols);
                    for i in 0..s.times.len() {
                        let mut row = vec![s.times[i]];
                        row.extend(run.sigma_z.iter().map(|x| x[i]));
                        d.push(row);
                    }
                    out.push(d);
                }
                out
            }
            RunData::Oracle { ladder, finest } => {
                let mut t = Table::new("oracle_refinement", &[("points", "1"), ("dk", "1/s"), ("rel_error", "1")]);
                for (m, dk, e) in ladder {
                    t.push(vec![*m as f64, *dk, *e]);
                }
                let (dde, oracle) = finest.as_ref();
                let n = dde.network.len();
                let mut cols = vec![col("t", "s")];
                cols.extend((1..=n).map(|j| col(format!("dde_p{j}"), "1")));
                cols.extend((1..=n).map(|j| col(format!("oracle_p{j}"), "1")));
                let mut p = Table::with_columns("oracle_populations", cols);
                for (i, &time) in dde.trajectory.times.iter().enumerate() {
                    let mut row = vec![time];
                    row.extend(dde.trajectory.state(i).iter().map(|c| c.norm_sqr()));
                    row.extend(oracle.atoms[i].iter().map(|c| c.norm_sqr()));
                    p.push(row);
                }
                vec![t, p]
            }
        }
    }

    pub fn snapshots(&self) -> Option<&[GraphSnapshot]> {
        match self {
            RunData::OneExcitation { snapshots, .. } | RunData::TwoExcitation { snapshots, .. } => Some(snapshots),
            _ => None,
        }
    }
}
