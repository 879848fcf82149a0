//! Fixed-step RK4 for linear complex DDEs, method of steps.
//!
//! The step is snapped so the shortest delay is an integer number of steps.
//! Each stored sample keeps two derivatives, the limit from the left and from
//! the right, so the Hermite interpolant on every cell sees the one-sided
//! derivative that belongs to it. The jump of the history at t = 0 then
//! propagates into later kinks without smearing.

use num_complex::Complex64 as C64;

use crate::error::{check, Error, Result};
use crate::network::DelaySystem;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Which one-sided limit to take when a lookup lands on a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Ring buffer of past states with their one-sided derivatives.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    pub t0: f64,
    pub dt: f64,
    dim: usize,
    cap: usize,
    x: Vec<C64>,
    dl: Vec<C64>,
    dr: Vec<C64>,
    last: usize,
    filled: bool,
}

impl HistoryBuffer {
    /// `span` is the longest look-back that will be requested.
    pub fn new(dim: usize, dt: f64, span: f64) -> Self {
        let cap = (span / dt).ceil() as usize + 3;
        HistoryBuffer {
            t0: 0.0,
            dt,
            dim,
            cap,
            x: vec![ZERO; cap * dim],
            dl: vec![ZERO; cap * dim],
            dr: vec![ZERO; cap * dim],
            last: 0,
            filled: false,
        }
    }

    pub fn current_time(&self) -> f64 {
        self.t0 + self.last as f64 * self.dt
    }

    fn slot(&self, n: usize) -> std::ops::Range<usize> {
        let s = (n % self.cap) * self.dim;
        s..s + self.dim
    }

    /// Stores sample `n` (must be 0 or last + 1).
    pub fn push(&mut self, n: usize, x: &[C64], dl: &[C64], dr: &[C64]) {
        debug_assert!(if self.filled { n == self.last + 1 } else { n == 0 });
        let r = self.slot(n);
        self.x[r.clone()].copy_from_slice(x);
        self.dl[r.clone()].copy_from_slice(dl);
        self.dr[r].copy_from_slice(dr);
        self.last = n;
        self.filled = true;
    }

    pub fn sample(&self, n: usize) -> &[C64] {
        &self.x[self.slot(n)]
    }

    /// Adds `scale · x(t)` into `out`. x is zero for t < 0; at t = 0 the left
    /// limit is zero and the right limit is the initial state.
    pub fn accumulate(&self, t: f64, side: Side, scale: &[C64], out: &mut [C64], dim: usize) {
        let _ = dim;
        let tol = 1e-9 * self.dt;
        let s = t - self.t0;
        if s < -tol || (s <= tol && side == Side::Left) || !self.filled {
            return;
        }
        let u = s / self.dt;
        let near = u.round();
        if (u - near).abs() * self.dt <= tol {
            let n = near as usize;
            matvec_add(scale, self.sample(n.min(self.last)), out);
            return;
        }
        let m = u.floor() as usize;
        let th = u - m as f64;
        let (th2, th3) = (th * th, th * th * th);
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = (th3 - 2.0 * th2 + th) * self.dt;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = (th3 - th2) * self.dt;
        let (a, b) = (self.slot(m), self.slot(m + 1));
        let mut tmp = [ZERO; 16];
        let mut heap;
        let v: &mut [C64] = if self.dim <= 16 {
            &mut tmp[..self.dim]
        } else {
            heap = vec![ZERO; self.dim];
            &mut heap
        };
        for i in 0..self.dim {
            v[i] = self.x[a.start + i] * h00
                + self.dr[a.start + i] * h10
                + self.x[b.start + i] * h01
                + self.dl[b.start + i] * h11;
        }
        matvec_add(scale, v, out);
    }
}

/// out += M v, M row-major square.
#[inline]
fn matvec_add(m: &[C64], v: &[C64], out: &mut [C64]) {
    let n = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * n..(r + 1) * n];
        let mut acc = ZERO;
        for (a, b) in row.iter().zip(v) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// Value of the history at `t`: zero before 0, Hermite interpolation inside.
pub fn sample_history(buffer: &HistoryBuffer, t: f64) -> Result<Vec<C64>> {
    let last = buffer.current_time();
    if t > last + 1e-9 * buffer.dt {
        return Err(Error::FutureHistory { t, last });
    }
    if t < buffer.current_time() - (buffer.cap - 2) as f64 * buffer.dt - 1e-9 * buffer.dt && t >= 0.0 {
        return Err(Error::OutOfRange {
            t,
            start: buffer.current_time() - (buffer.cap - 2) as f64 * buffer.dt,
            end: last,
        });
    }
    let mut eye = vec![ZERO; buffer.dim * buffer.dim];
    for i in 0..buffer.dim {
        eye[i * buffer.dim + i] = C64::new(1.0, 0.0);
    }
    let mut out = vec![ZERO; buffer.dim];
    buffer.accumulate(t, Side::Right, &eye, &mut out, buffer.dim);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrajectory {
    pub times: Vec<f64>,
    pub dim: usize,
    /// Row-major: states[i * dim + j].
    pub states: Vec<C64>,
    deriv_left: Vec<C64>,
    deriv_right: Vec<C64>,
    pub labels: Vec<String>,
}

impl AmplitudeTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[C64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component(&self, j: usize) -> impl Iterator<Item = C64> + '_ {
        (0..self.len()).map(move |i| self.states[i * self.dim + j])
    }

    pub fn dt(&self) -> f64 {
        if self.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// Hermite interpolation between stored samples (uniform grid).
    pub fn interpolate_into(&self, t: f64, out: &mut [C64]) -> Result<()> {
        let (start, end) = (self.times[0], self.t_end());
        let dt = self.dt();
        if t < start - 1e-9 * dt || t > end + 1e-9 * dt {
            return Err(Error::OutOfRange { t, start, end });
        }
        if self.len() == 1 {
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let u = ((t - start) / dt).clamp(0.0, (self.len() - 1) as f64);
        let near = u.round();
        if (u - near).abs() < 1e-9 {
            out.copy_from_slice(self.state(near as usize));
            return Ok(());
        }
        let m = (u.floor() as usize).min(self.len() - 2);
        let th = u - m as f64;
        let (th2, th3) = (th * th, th * th * th);
        let h00 = 2.0 * th3 - 3.0 * th2 + 1.0;
        let h10 = (th3 - 2.0 * th2 + th) * dt;
        let h01 = -2.0 * th3 + 3.0 * th2;
        let h11 = (th3 - th2) * dt;
        let (a, b) = (m * self.dim, (m + 1) * self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.states[a + i] * h00
                + self.deriv_right[a + i] * h10
                + self.states[b + i] * h01
                + self.deriv_left[b + i] * h11;
        }
        Ok(())
    }

    pub fn interpolate(&self, t: f64) -> Result<Vec<C64>> {
        let mut out = vec![ZERO; self.dim];
        self.interpolate_into(t, &mut out)?;
        Ok(out)
    }
}

/// Step actually used for a requested `dt`: the largest step ≤ dt that
/// divides the shortest delay.
pub fn snapped_step(system: &DelaySystem, dt: f64) -> f64 {
    match system.min_delay() {
        Some(d) => d / (d / dt - 1e-9).ceil().max(1.0),
        None => dt,
    }
}

pub fn integrate_dde(system: &DelaySystem, init: &[C64], t_end: f64, dt: f64) -> Result<AmplitudeTrajectory> {
    integrate_dde_forced(system, init, t_end, dt, |_, _| {})
}

/// As `integrate_dde` with an additive source: x' = ... + F(t), where
/// `forcing(t, out)` adds F(t) into `out`.
pub fn integrate_dde_forced<F>(
    system: &DelaySystem,
    init: &[C64],
    t_end: f64,
    dt: f64,
    forcing: F,
) -> Result<AmplitudeTrajectory>
where
    F: Fn(f64, &mut [C64]),
{
    let dim = system.dim;
    if init.len() != dim {
        return Err(Error::Dimension { expected: dim, got: init.len() });
    }
    check(dt.is_finite() && dt > 0.0, "dt", format!("{dt} must be > 0"))?;
    check(t_end.is_finite() && t_end > 0.0, "t_end", format!("{t_end} must be > 0"))?;
    if let Some(d) = system.min_delay() {
        if dt > d / 4.0 * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, min_delay: d });
        }
    }
    let h = snapped_step(system, dt);
    let steps = (t_end / h - 1e-9).ceil() as usize;

    let flat = |m: &nalgebra::DMatrix<C64>| -> Vec<C64> {
        let mut v = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                v.push(m[(r, c)]);
            }
        }
        v
    };
    let a = flat(&system.instantaneous);
    let delayed: Vec<(f64, Vec<C64>)> = system.delayed_terms.iter().map(|t| (t.delay, flat(&t.matrix))).collect();
    let span = system.max_delay().unwrap_or(h);
    let mut hist = HistoryBuffer::new(dim, h, span);

    let rhs = |hist: &HistoryBuffer, t: f64, x: &[C64], side: Side, out: &mut [C64]| {
        out.fill(ZERO);
        matvec_add(&a, x, out);
        for (d, m) in &delayed {
            hist.accumulate(t - d, side, m, out, dim);
        }
        forcing(t, out);
    };
    let on_zero = |t: f64| delayed.iter().any(|(d, _)| (t - d).abs() <= 1e-9 * h);

    let mut traj = AmplitudeTrajectory {
        times: Vec::with_capacity(steps + 1),
        dim,
        states: Vec::with_capacity((steps + 1) * dim),
        deriv_left: Vec::with_capacity((steps + 1) * dim),
        deriv_right: Vec::with_capacity((steps + 1) * dim),
        labels: system.labels.clone(),
    };

    let mut x = init.to_vec();
    let mut dl = vec![ZERO; dim];
    let mut dr = vec![ZERO; dim];
    rhs(&hist, 0.0, &x, Side::Right, &mut dr);
    // left derivative at 0 is irrelevant (no cell ends there)
    dl.copy_from_slice(&dr);
    hist.push(0, &x, &dl, &dr);
    traj.times.push(0.0);
    traj.states.extend_from_slice(&x);
    traj.deriv_left.extend_from_slice(&dl);
    traj.deriv_right.extend_from_slice(&dr);

    let (mut k2, mut k3, mut k4, mut tmp) = (vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim], vec![ZERO; dim]);
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = &dr;
        for i in 0..dim {
            tmp[i] = x[i] + k1[i] * (0.5 * h);
        }
        rhs(&hist, t + 0.5 * h, &tmp, Side::Right, &mut k2);
        for i in 0..dim {
            tmp[i] = x[i] + k2[i] * (0.5 * h);
        }
        rhs(&hist, t + 0.5 * h, &tmp, Side::Right, &mut k3);
        for i in 0..dim {
            tmp[i] = x[i] + k3[i] * h;
        }
        let t1 = (n + 1) as f64 * h;
        rhs(&hist, t1, &tmp, Side::Left, &mut k4);
        for i in 0..dim {
            x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        if x.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite { t: t1 });
        }
        // history for stage lookups must not yet contain sample n+1
        rhs(&hist, t1, &x, Side::Left, &mut dl);
        if on_zero(t1) {
            rhs(&hist, t1, &x, Side::Right, &mut dr);
        } else {
            dr.copy_from_slice(&dl);
        }
        hist.push(n + 1, &x, &dl, &dr);
        traj.times.push(t1);
        traj.states.extend_from_slice(&x);
        traj.deriv_left.extend_from_slice(&dl);
        traj.deriv_right.extend_from_slice(&dr);
    }
    Ok(traj)
}
