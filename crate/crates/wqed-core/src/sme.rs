//! Homodyne-measured atom with measurement feedback F = X: single trajectories,
//! ensembles and the fluctuation and convergence summaries.
//!
//! Two steppers are provided. `EulerMaruyama` is the literal Itô update of
//! the conditional Bloch equations; it leaves the Bloch ball whenever the
//! conditional state is pure, so its states are projected back and counted.
//! `Kraus` applies the measurement as a Kraus map on ρ followed by the
//! feedback rotation exp(−i g X dY); it agrees with the Itô equations to
//! first order and never leaves the ball.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::open_system::{feedback_drift, BlochVector, DriveParams, FeedbackParams};

const I: C64 = C64::new(0.0, 1.0);
/// Allowed distance outside the Bloch ball before a step counts as clipped.
pub const BALL_TOLERANCE: f64 = 1e-3;
/// Largest tolerated fraction of clipped steps.
pub const CLIP_BUDGET: f64 = 1e-3;
const BLOW_UP: f64 = 10.0;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Gaussian increments with variance dt from a ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream: u64,
    pub counter: u64,
    pub dt: f64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NoiseStream { seed, stream, counter: 0, dt, rng }
    }

    /// The stream positioned after `counter` draws.
    pub fn at(seed: u64, stream: u64, dt: f64, counter: u64) -> Self {
        let mut s = Self::new(seed, stream, dt);
        for _ in 0..counter {
            s.next_dw();
        }
        s
    }

    pub fn next_dw(&mut self) -> f64 {
        self.counter += 1;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * self.dt.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub bloch: BlochVector,
    pub t: f64,
    /// ∫ I_c dt accumulated so far.
    pub record: f64,
    /// Steps that needed projection back into the Bloch ball.
    pub clipped: u64,
}

impl TrajectoryState {
    pub fn new(bloch: BlochVector) -> Self {
        TrajectoryState { bloch, t: 0.0, record: 0.0, clipped: 0 }
    }
}

/// I_c = γ_1R⟨X⟩ + dW/dt with η = γ = 1.
pub fn homodyne_record(state: &BlochVector, fb: &FeedbackParams, dw: f64, dt: f64) -> f64 {
    fb.gamma_1r * state.x().re + dw / dt
}

/// Nearest point of the Bloch ball; returns whether the excursion exceeded
/// the tolerance.
fn project(b: &mut BlochVector) -> bool {
    let sp = 0.5 * (b.sp + b.sm.conj());
    let excursion = (b.sp - sp).norm().max(b.sz.im.abs());
    let mut v = [sp.re, sp.im, b.sz.re];
    // ball radius in (2 Re sp, 2 Im sp, sz) coordinates
    let r = (4.0 * v[0] * v[0] + 4.0 * v[1] * v[1] + v[2] * v[2]).sqrt();
    let outside = (r - 1.0).max(0.0);
    if r > 1.0 {
        for x in &mut v {
            *x /= r;
        }
    }
    let sp = C64::new(v[0], v[1]);
    *b = BlochVector { sp, sm: sp.conj(), sz: re(v[2]) };
    excursion.max(outside) > BALL_TOLERANCE
}

/// Euler–Maruyama step of the conditional equations (Itô), then projection.
pub fn sme_step(
    state: &TrajectoryState,
    drive: &DriveParams,
    fb: &FeedbackParams,
    dw: f64,
    dt: f64,
) -> Result<TrajectoryState> {
    check(dt > 0.0 && dt <= 0.05 + 1e-12, "dt", format!("{dt} must lie in (0, 0.05]"))?;
    check(dw.is_finite(), "dW", "must be finite")?;
    let b = state.bloch;
    let (sp, sm, sz) = (b.sp, b.sm, b.sz);
    let x = sp + sm;
    let (g, gr) = (fb.g_f, fb.gamma_1r);
    let a = feedback_drift(drive, fb);
    let v = b.as_vector();
    let drift = a * v - nalgebra::Vector3::new(re(0.0), re(0.0), re(drive.gamma_eff));
    let noise = [
        (re(1.0) + sz) * (0.5 * gr) - x * sp * gr - I * g * sz,
        (re(1.0) + sz) * (0.5 * gr) - x * sm * gr + I * g * sz,
        -x * (re(1.0) + sz) * gr - I * (2.0 * g) * (sp - sm),
    ];
    let mut next = BlochVector {
        sp: sp + drift[0] * dt + noise[0] * dw,
        sm: sm + drift[1] * dt + noise[1] * dw,
        sz: sz + drift[2] * dt + noise[2] * dw,
    };
    let t = state.t + dt;
    if !(next.norm() <= BLOW_UP) {
        return Err(Error::BlowUp { index: 0, t, norm: next.norm() });
    }
    let clipped = project(&mut next);
    Ok(TrajectoryState {
        bloch: next,
        t,
        record: state.record + homodyne_record(&b, fb, dw, dt) * dt,
        clipped: state.clipped + clipped as u64,
    })
}

fn sigma_minus() -> Matrix2<C64> {
    Matrix2::new(re(0.0), re(0.0), re(1.0), re(0.0))
}

/// Measurement Kraus map with the record increment dY = γ_1R⟨X⟩dt + dW, the
/// unobserved part of the decay, then the feedback rotation.
pub fn kraus_step(
    state: &TrajectoryState,
    drive: &DriveParams,
    fb: &FeedbackParams,
    dw: f64,
    dt: f64,
) -> Result<TrajectoryState> {
    let b = state.bloch;
    let rho = b.to_density();
    let sm = sigma_minus();
    let sp = sm.adjoint();
    let n = sp * sm;
    let x_op = sp + sm;
    let gr = fb.gamma_1r;
    let dy = gr * b.x().re * dt + dw;
    let h = n * re(-drive.detuning_y) + x_op * re(0.5 * drive.rabi);
    let m = Matrix2::identity() - h * (I * dt) - n * re(0.5 * drive.gamma_eff * dt) + sm * re(gr * dy);
    let hidden = drive.gamma_eff - gr * gr;
    let mut next = m * rho * m.adjoint() + sm * rho * sp * re(hidden * dt);
    let tr = next.trace().re;
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::BlowUp { index: 0, t: state.t + dt, norm: tr });
    }
    next /= re(tr);
    // exp(−i g X dY) = cos(g dY) − i sin(g dY) X
    let th = fb.g_f * dy;
    let u = Matrix2::identity() * re(th.cos()) - x_op * (I * th.sin());
    next = u * next * u.adjoint();
    next = (next + next.adjoint()) * re(0.5);
    let mut bloch = BlochVector::from_density(&next);
    let clipped = project(&mut bloch);
    Ok(TrajectoryState {
        bloch,
        t: state.t + dt,
        record: state.record + dy,
        clipped: state.clipped + clipped as u64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmeScheme {
    EulerMaruyama,
    #[default]
    Kraus,
}

/// Stepping options. `substeps` splits every output step; the noise of the
/// output step is the sum of its substep increments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmeOptions {
    pub scheme: SmeScheme,
    pub substeps: usize,
}

impl Default for SmeOptions {
    fn default() -> Self {
        SmeOptions { scheme: SmeScheme::Kraus, substeps: 1 }
    }
}

fn validate(drive: &DriveParams, fb: &FeedbackParams, opts: &SmeOptions) -> Result<()> {
    drive.validate()?;
    fb.validate()?;
    check(drive.gamma_env == 0.0, "gamma_env", "the stochastic model has no environmental decay")?;
    check(opts.substeps >= 1, "substeps", "must be at least 1")?;
    if opts.scheme == SmeScheme::Kraus {
        check(
            fb.gamma_1r * fb.gamma_1r <= drive.gamma_eff * (1.0 + 1e-12),
            "gamma_1R",
            format!("γ_1R² = {} exceeds Γ_eff = {}", fb.gamma_1r * fb.gamma_1r, drive.gamma_eff),
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
    /// I_c averaged over each output step (one fewer than times).
    pub record: Vec<f64>,
    /// Noise increment of each output step.
    pub dw: Vec<f64>,
    pub clipped: u64,
    pub steps: u64,
}

impl Trajectory {
    pub fn sigma_z(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.sz.re).collect()
    }

    pub fn clip_rate(&self) -> f64 {
        self.clipped as f64 / self.steps.max(1) as f64
    }
}

/// Trajectory driven by an explicit noise source (one draw per substep).
pub fn run_trajectory_with_noise<N: FnMut() -> f64>(
    drive: &DriveParams,
    fb: &FeedbackParams,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
    opts: &SmeOptions,
    mut noise: N,
) -> Result<Trajectory> {
    validate(drive, fb, opts)?;
    check(dt > 0.0 && t_end >= dt, "dt", "need 0 < dt <= t_end")?;
    let steps = (t_end / dt).round() as usize;
    let h = dt / opts.substeps as f64;
    let step = match opts.scheme {
        SmeScheme::EulerMaruyama => sme_step,
        SmeScheme::Kraus => kraus_step,
    };
    let mut st = TrajectoryState::new(*init);
    let mut out = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        record: Vec::with_capacity(steps),
        dw: Vec::with_capacity(steps),
        clipped: 0,
        steps: (steps * opts.substeps) as u64,
    };
    out.times.push(0.0);
    out.states.push(*init);
    for i in 0..steps {
        let before = st.record;
        let mut dw_sum = 0.0;
        for _ in 0..opts.substeps {
            let dw = noise();
            dw_sum += dw;
            st = step(&st, drive, fb, dw, h).map_err(|e| match e {
                Error::BlowUp { t, norm, .. } => Error::BlowUp { index: 0, t, norm },
                other => other,
            })?;
        }
        st.t = (i + 1) as f64 * dt;
        out.times.push(st.t);
        out.states.push(st.bloch);
        out.record.push((st.record - before) / dt);
        out.dw.push(dw_sum);
    }
    out.clipped = st.clipped;
    if out.clip_rate() > CLIP_BUDGET {
        return Err(Error::ClippingBudget { rate: out.clip_rate() });
    }
    Ok(out)
}

/// Seeded trajectory; stream 0 of `seed`.
pub fn run_trajectory(
    drive: &DriveParams,
    fb: &FeedbackParams,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    run_trajectory_opts(drive, fb, init, t_end, dt, seed, 0, &SmeOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_trajectory_opts(
    drive: &DriveParams,
    fb: &FeedbackParams,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
    seed: u64,
    stream: u64,
    opts: &SmeOptions,
) -> Result<Trajectory> {
    let mut ns = NoiseStream::new(seed, stream, dt / opts.substeps as f64);
    run_trajectory_with_noise(drive, fb, init, t_end, dt, opts, || ns.next_dw())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_sz: Vec<f64>,
    pub var_sz: Vec<f64>,
    pub stderr_sz: Vec<f64>,
    pub n_traj: usize,
    pub master_seed: u64,
    /// Trajectory i uses stream i of the master seed.
    pub streams: std::ops::Range<u64>,
    pub clipped: u64,
}

impl EnsembleStats {
    /// Mean over t ≥ t_from of the across-trajectory standard deviation.
    pub fn stationary_std(&self, t_from: f64) -> f64 {
        let v: Vec<f64> = self.times.iter().zip(&self.var_sz).filter(|(t, _)| **t >= t_from).map(|(_, v)| v.sqrt()).collect();
        pairwise_sum(&v) / v.len() as f64
    }
}

/// Order-fixed pairwise summation.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 8 {
        return x.iter().sum();
    }
    let (a, b) = x.split_at(x.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Everything the ensemble keeps per trajectory.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    /// ⟨σᶻ⟩ series of every trajectory, in stream order.
    pub sigma_z: Vec<Vec<f64>>,
}

impl EnsembleRun {
    /// Mean of ⟨σᶻ⟩ over t ≥ t_from and the standard error of that mean,
    /// estimated from the spread of per-trajectory time averages.
    pub fn steady_mean(&self, t_from: f64) -> Result<(f64, f64)> {
        let times = &self.stats.times;
        let i0 = times.iter().position(|&t| t >= t_from).ok_or(Error::OutOfRange {
            t: t_from,
            start: times[0],
            end: *times.last().unwrap(),
        })?;
        let avgs: Vec<f64> = self.sigma_z.iter().map(|s| pairwise_sum(&s[i0..]) / (s.len() - i0) as f64).collect();
        let n = avgs.len() as f64;
        let m = pairwise_sum(&avgs) / n;
        let dev: Vec<f64> = avgs.iter().map(|a| (a - m) * (a - m)).collect();
        Ok((m, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()))
    }

    /// Stationary standard deviation of ⟨σᶻ⟩ over t ≥ t_from with a
    /// batch-means standard error (trajectories split into `batches` groups
    /// in stream order).
    pub fn stationary_std(&self, t_from: f64, batches: usize) -> Result<(f64, f64)> {
        let n = self.sigma_z.len();
        check(batches >= 2 && n >= 2 * batches, "batches", format!("{batches} batches need >= {} trajectories", 2 * batches))?;
        let all = self.stats.stationary_std(t_from);
        let size = n / batches;
        let est: Vec<f64> = (0..batches)
            .map(|b| {
                let part = &self.sigma_z[b * size..(b + 1) * size];
                reduce(self.stats.times.clone(), part, self.stats.master_seed, 0).stationary_std(t_from)
            })
            .collect();
        let m = pairwise_sum(&est) / batches as f64;
        let dev: Vec<f64> = est.iter().map(|e| (e - m) * (e - m)).collect();
        Ok((all, (pairwise_sum(&dev) / (batches - 1) as f64 / batches as f64).sqrt()))
    }
}

pub fn run_ensemble(
    drive: &DriveParams,
    fb: &FeedbackParams,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
    n_traj: usize,
    master_seed: u64,
) -> Result<EnsembleStats> {
    Ok(run_ensemble_opts(drive, fb, init, t_end, dt, n_traj, master_seed, &SmeOptions::default())?.stats)
}

/// Trajectories run in parallel; results are gathered in stream order and
/// reduced by pairwise sums, so the statistics do not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble_opts(
    drive: &DriveParams,
    fb: &FeedbackParams,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
    n_traj: usize,
    master_seed: u64,
    opts: &SmeOptions,
) -> Result<EnsembleRun> {
    check(n_traj >= 2, "n_traj", "need at least two trajectories")?;
    let runs: Vec<Result<Trajectory>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            run_trajectory_opts(drive, fb, init, t_end, dt, master_seed, i, opts).map_err(|e| match e {
                Error::BlowUp { t, norm, .. } => Error::BlowUp { index: i as usize, t, norm },
                other => other,
            })
        })
        .collect();
    let mut series = Vec::with_capacity(n_traj);
    let mut times = Vec::new();
    let mut clipped = 0;
    for r in runs {
        let tr = r?;
        clipped += tr.clipped;
        if times.is_empty() {
            times = tr.times.clone();
        }
        series.push(tr.sigma_z());
    }
    let stats = reduce(times, &series, master_seed, clipped);
    Ok(EnsembleRun { stats, sigma_z: series })
}

fn reduce(times: Vec<f64>, series: &[Vec<f64>], master_seed: u64, clipped: u64) -> EnsembleStats {
    let n = series.len();
    let mut col = vec![0.0; n];
    let (mut mean, mut var, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..times.len() {
        for (c, s) in col.iter_mut().zip(series) {
            *c = s[i];
        }
        let m = pairwise_sum(&col) / n as f64;
        let dev: Vec<f64> = col.iter().map(|x| (x - m) * (x - m)).collect();
        let v = pairwise_sum(&dev) / (n - 1) as f64;
        mean.push(m);
        var.push(v);
        se.push((v / n as f64).sqrt());
    }
    EnsembleStats {
        times,
        mean_sz: mean,
        var_sz: var,
        stderr_sz: se,
        n_traj: n,
        master_seed,
        streams: 0..n as u64,
        clipped,
    }
}

/// 2√(VΓ_eff)/(1 + 2V): size of the dominant noise increment of
/// ⟨σ⁺⟩ − ⟨σ⁻⟩ around the feedback steady state.
pub fn predicted_fluctuation(v: f64, gamma_eff: f64) -> Result<f64> {
    check(v > 0.0, "V", "must be positive")?;
    check(gamma_eff > 0.0, "gamma_eff", "must be positive")?;
    Ok(2.0 * (v * gamma_eff).sqrt() / (1.0 + 2.0 * v))
}

/// First time after which the series stays within `level`·|x(0) − x(∞)| of
/// its final value, interpolated linearly between samples.
pub fn convergence_time(times: &[f64], series: &[f64], level: f64) -> Result<f64> {
    check(times.len() == series.len() && times.len() >= 2, "series", "needs matching times, length >= 2")?;
    let n = series.len();
    let tail = &series[n - (n / 10).max(2)..];
    let drift = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    if drift >= 1e-3 {
        return Err(Error::NotConverged(drift));
    }
    let fin = series[n - 1];
    let band = level * (series[0] - fin).abs();
    let dev = |i: usize| (series[i] - fin).abs();
    match (0..n).rev().find(|&i| dev(i) > band) {
        None => Ok(times[0]),
        Some(i) if i + 1 >= n => Ok(times[n - 1]),
        Some(i) => {
            let (d0, d1) = (dev(i), dev(i + 1));
            let f = if d0 == d1 { 0.0 } else { (d0 - band) / (d0 - d1) };
            Ok(times[i] + f * (times[i + 1] - times[i]))
        }
    }
}

/// Least-squares slope of Im Δ(⟨σ⁺⟩ − ⟨σ⁻⟩) on dW over steps with t ≥ t_from,
/// pooled across trajectories. The standard error comes from the spread of
/// the per-trajectory slopes, since increments within one trajectory share
/// its slowly varying state. Returns (slope, standard error).
#[allow(clippy::too_many_arguments)]
pub fn increment_regression(
    drive: &DriveParams,
    fb: &FeedbackParams,
    t_end: f64,
    dt: f64,
    n_traj: usize,
    seed: u64,
    t_from: f64,
    opts: &SmeOptions,
) -> Result<(f64, f64)> {
    check(n_traj >= 2, "n_traj", "need at least two trajectories")?;
    // per trajectory: (Σxy, Σxx, Σx, Σy, count)
    let parts: Vec<Result<[f64; 5]>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let tr = run_trajectory_opts(drive, fb, &BlochVector::ground(), t_end, dt, seed, i, opts)?;
            let mut acc = [0.0; 5];
            for (j, w) in tr.states.windows(2).enumerate() {
                if tr.times[j] < t_from {
                    continue;
                }
                let y = ((w[1].sp - w[1].sm) - (w[0].sp - w[0].sm)).im;
                let x = tr.dw[j];
                acc[0] += x * y;
                acc[1] += x * x;
                acc[2] += x;
                acc[3] += y;
                acc[4] += 1.0;
            }
            Ok(acc)
        })
        .collect();
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    check(parts[0][4] > 2.0, "t_from", "no increments in the regression window")?;
    let slope_of = |p: &[f64; 5]| (p[0] - p[2] * p[3] / p[4]) / (p[1] - p[2] * p[2] / p[4]);
    let mut total = [0.0; 5];
    for p in &parts {
        for k in 0..5 {
            total[k] += p[k];
        }
    }
    let slopes: Vec<f64> = parts.iter().map(slope_of).collect();
    let n = slopes.len() as f64;
    let m = pairwise_sum(&slopes) / n;
    let dev: Vec<f64> = slopes.iter().map(|s| (s - m) * (s - m)).collect();
    Ok((slope_of(&total), (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::open_system::integrate_feedback_mean;
    use approx::assert_abs_diff_eq;

    fn fig4a() -> (DriveParams, FeedbackParams) {
        (DriveParams::new(0.0, 0.0, 0.01), FeedbackParams::new(3f64.sqrt(), 0.1))
    }

    #[test]
    fn record_samples() {
        let fb = FeedbackParams::new(1.0, 0.3);
        let b = BlochVector { sp: re(0.25), sm: re(0.25), sz: re(0.0) };
        assert_abs_diff_eq!(homodyne_record(&b, &fb, 0.0, 0.01), 0.15, epsilon = 1e-15);
        assert_eq!(homodyne_record(&BlochVector::ground(), &fb, 0.02, 0.01), 2.0);
        let mut ns = NoiseStream::new(3, 0, 0.01);
        let n = 10_000;
        let samples: Vec<f64> = (0..n).map(|_| homodyne_record(&b, &fb, ns.next_dw(), 0.01)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 0.15).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn noise_stream_statistics_and_replay() {
        let mut a = NoiseStream::new(11, 4, 0.02);
        let xs: Vec<f64> = (0..40_000).map(|_| a.next_dw()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 4.0 * (0.02f64 / 40_000.0).sqrt());
        assert!((var / 0.02 - 1.0).abs() < 0.03);
        let mut b = NoiseStream::at(11, 4, 0.02, 1000);
        assert_eq!(b.next_dw(), xs[1000]);
        // doubling dt doubles the increment variance draw for draw
        let mut c = NoiseStream::new(11, 4, 0.04);
        let x0 = c.next_dw();
        assert_abs_diff_eq!(x0 * x0, 2.0 * xs[0] * xs[0], epsilon = 1e-15);
    }

    #[test]
    fn ground_state_is_fixed_without_feedback() {
        let drive = DriveParams::new(0.0, 0.0, 0.01);
        let st = TrajectoryState::new(BlochVector::ground());
        let next = sme_step(&st, &drive, &FeedbackParams::off(), 0.0, 0.05).unwrap();
        assert_eq!(next.bloch, BlochVector::ground());
        let next = kraus_step(&st, &drive, &FeedbackParams::off(), 0.0, 0.05).unwrap();
        assert!((next.bloch.as_vector() - BlochVector::ground().as_vector()).norm() < 1e-15);
        assert!(sme_step(&st, &drive, &FeedbackParams::off(), 0.0, 0.06).is_err());
    }

    #[test]
    fn zero_noise_matches_the_mean_flow() {
        let drive = DriveParams::new(0.3, 0.05, 0.04);
        let fb = FeedbackParams::new(0.4, 0.2);
        let init = BlochVector::ground();
        let mean = integrate_feedback_mean(&drive, &fb, &init, 20.0, 1e-3).unwrap();
        let mut errs = Vec::new();
        for dt in [0.01, 0.005] {
            let opts = SmeOptions { scheme: SmeScheme::EulerMaruyama, substeps: 1 };
            let tr = run_trajectory_with_noise(&drive, &fb, &init, 20.0, dt, &opts, || 0.0).unwrap();
            let stride = (dt / 1e-3f64).round() as usize;
            let err = tr
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| (s.as_vector() - mean.states[i * stride].as_vector()).norm())
                .fold(0.0, f64::max);
            errs.push(err);
        }
        // Euler: first order in dt
        assert!(errs[0] < 5e-2, "{errs:?}");
        assert!(errs[1] < 0.6 * errs[0], "{errs:?}");
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let (drive, fb) = fig4a();
        let a = run_trajectory(&drive, &fb, &BlochVector::ground(), 20.0, 0.05, 9).unwrap();
        let b = run_trajectory(&drive, &fb, &BlochVector::ground(), 20.0, 0.05, 9).unwrap();
        let c = run_trajectory(&drive, &fb, &BlochVector::ground(), 20.0, 0.05, 10).unwrap();
        assert_eq!(a.sigma_z(), b.sigma_z());
        assert_eq!(a.record, b.record);
        assert_ne!(a.sigma_z(), c.sigma_z());
    }

    #[test]
    fn euler_leaves_the_ball_on_pure_states() {
        let (drive, fb) = fig4a();
        let opts = SmeOptions { scheme: SmeScheme::EulerMaruyama, substeps: 1 };
        let r = run_trajectory_opts(&drive, &fb, &BlochVector::ground(), 50.0, 0.05, 1, 0, &opts);
        assert!(matches!(r, Err(Error::ClippingBudget { .. })));
    }

    #[test]
    fn kraus_stays_physical() {
        let (drive, fb) = fig4a();
        let tr = run_trajectory(&drive, &fb, &BlochVector::ground(), 50.0, 0.05, 2).unwrap();
        assert_eq!(tr.clipped, 0);
        assert!(tr.states.iter().all(|s| s.is_physical(1e-9)));
        let bad = FeedbackParams::new(1.0, 0.2);
        assert!(run_trajectory(&drive, &bad, &BlochVector::ground(), 1.0, 0.05, 2).is_err());
    }

    #[test]
    fn ensemble_is_schedule_independent() {
        let (drive, fb) = fig4a();
        let run = || run_ensemble(&drive, &fb, &BlochVector::ground(), 10.0, 0.05, 16, 5).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
        assert_eq!(one, many);
        assert!(one.var_sz.last().unwrap() > &0.0);
        for (v, s) in one.var_sz.iter().zip(&one.stderr_sz) {
            assert_abs_diff_eq!(*s, (v / 16.0).sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn no_feedback_ensemble_decays() {
        let drive = DriveParams::new(0.0, 0.0, 0.5);
        let fb = FeedbackParams::new(0.0, 0.5);
        let stats = run_ensemble(&drive, &fb, &BlochVector::excited(), 10.0, 0.01, 200, 1).unwrap();
        for i in (0..stats.times.len()).step_by(100) {
            let (t, m) = (stats.times[i], stats.mean_sz[i]);
            let exact = 2.0 * (-0.5 * t).exp() - 1.0;
            assert!((m - exact).abs() < 4.0 * stats.stderr_sz[i] + 5e-3, "{t} {m} {exact}");
        }
    }

    #[test]
    fn fluctuation_formula() {
        assert_abs_diff_eq!(predicted_fluctuation(300.0, 0.01).unwrap(), 2.0 * 3f64.sqrt() / 601.0, epsilon = 1e-15);
        assert!(predicted_fluctuation(300.0, 1e-12).unwrap() < 1e-7);
        let mut last = 0.0;
        for i in 1..20 {
            let f = predicted_fluctuation(10.0, 0.05 * i as f64).unwrap();
            assert!(f > last);
            last = f;
        }
    }

    #[test]
    fn convergence_time_cases() {
        let times: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
        let e: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        assert_abs_diff_eq!(convergence_time(&times, &e, (-1f64).exp()).unwrap(), 1.0, epsilon = 1e-4);
        assert_eq!(convergence_time(&times, &vec![0.3; times.len()], 0.5).unwrap(), 0.0);
        let ramp: Vec<f64> = times.clone();
        assert!(matches!(convergence_time(&times, &ramp, 0.5), Err(Error::NotConverged(_))));
    }
}
