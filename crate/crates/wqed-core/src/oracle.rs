//! Discretized-waveguide Schrödinger integration of the one-excitation sector.
//!
//! The field is kept on k > 0 with the standing-wave couplings, so the mirror
//! term is exercised directly. Field amplitudes are carried in the frame
//! rotating at k − ωa; the measure is dk/2π.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::network::NetworkSpec;
use crate::one_excitation::simulate_one_excitation;

pub const MIN_GRID_POINTS: usize = 256;

/// Uniform wavenumber grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub k: Vec<f64>,
    pub dk: f64,
}

impl KGrid {
    /// m points spanning [center − half, center + half].
    pub fn band(center: f64, half: f64, m: usize) -> Result<Self> {
        check(half > 0.0 && half.is_finite(), "half_width", "must be positive")?;
        let dk = 2.0 * half / (m.max(2) - 1) as f64;
        Self::with_spacing(center - half, dk, m)
    }

    /// m points from k0 in steps of dk.
    pub fn with_spacing(k0: f64, dk: f64, m: usize) -> Result<Self> {
        check(m >= MIN_GRID_POINTS, "grid", format!("needs at least {MIN_GRID_POINTS} points, got {m}"))?;
        check(dk > 0.0 && dk.is_finite(), "dk", "must be positive")?;
        check(k0 > 0.0, "grid", "the band must stay on k > 0")?;
        Ok(KGrid { k: (0..m).map(|i| k0 + i as f64 * dk).collect(), dk })
    }

    /// Centered on ωa with a fixed spacing; the band grows with m.
    pub fn centered(center: f64, dk: f64, m: usize) -> Result<Self> {
        Self::with_spacing(center - 0.5 * dk * (m - 1) as f64, dk, m)
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Largest |k − center| on the grid.
    pub fn half_width(&self, center: f64) -> f64 {
        (self.k[0] - center).abs().max((self.k[self.len() - 1] - center).abs())
    }

    /// Trapezoid weights in the dk/2π measure.
    pub fn weights(&self) -> Vec<f64> {
        let w = self.dk / (2.0 * std::f64::consts::PI);
        let mut out = vec![w; self.len()];
        out[0] *= 0.5;
        *out.last_mut().unwrap() *= 0.5;
        out
    }

    /// A uniform grid is periodic in t with period 2π/dk; half of that is the
    /// latest time at which its revivals cannot interfere.
    pub fn check_aliasing(&self, t_end: f64) -> Result<()> {
        if self.dk * t_end > std::f64::consts::PI {
            return Err(Error::Aliasing(self.dk * t_end));
        }
        Ok(())
    }

    /// The band must cover ten emission rates around ωa.
    pub fn check_covers(&self, net: &NetworkSpec) -> Result<()> {
        let wa = net.omega_a()?;
        let need = 10.0 * net.max_emission_rate();
        check(
            self.k[0] <= wa - need && self.k[self.len() - 1] >= wa + need,
            "grid",
            format!("band must cover ωa ± {need}"),
        )
    }
}

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub times: Vec<f64>,
    /// atoms[i][j] = c_j(times[i]).
    pub atoms: Vec<Vec<C64>>,
    /// c̃(t_end, k) in the lab frame.
    pub field: Vec<C64>,
    /// Σ|c_j|² + Σ w|c̃|² at each recorded time.
    pub norm: Vec<f64>,
}

impl OracleRun {
    pub fn population(&self, j: usize) -> Vec<f64> {
        self.atoms.iter().map(|c| c[j].norm_sqr()).collect()
    }
}

/// RK4 over (c_j, c̃_m); every `record` steps a sample is kept.
fn integrate(
    net: &NetworkSpec,
    grid: &KGrid,
    init: &[C64],
    steps: usize,
    dt: f64,
    record: usize,
) -> Result<OracleRun> {
    let n = net.len();
    let m = grid.len();
    let wa = net.omega_a()?;
    let w = grid.weights();
    let detuning: Vec<f64> = grid.k.iter().map(|k| k - wa).collect();
    // G[m*n + j] = i(γR e^{−ikz} − γL e^{ikz})
    let coupling: Vec<C64> = grid
        .k
        .iter()
        .flat_map(|&k| {
            net.atoms.iter().map(move |a| {
                let ph = C64::from_polar(1.0, -k * a.position);
                C64::i() * (a.gamma_right * ph - a.gamma_left * ph.conj())
            })
        })
        .collect();

    let rhs = |c: &[C64], b: &[C64], dc: &mut [C64], db: &mut [C64]| {
        for (j, d) in dc.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for mm in 0..m {
                acc += w[mm] * coupling[mm * n + j].conj() * b[mm];
            }
            *d = -C64::i() * acc;
        }
        db.par_iter_mut().enumerate().with_min_len(256).for_each(|(mm, d)| {
            let mut acc = detuning[mm] * b[mm];
            for j in 0..n {
                acc += coupling[mm * n + j] * c[j];
            }
            *d = -C64::i() * acc;
        });
    };

    let mut c = init.to_vec();
    let mut b = vec![C64::new(0.0, 0.0); m];
    let (mut kc, mut kb) = (vec![vec![C64::new(0.0, 0.0); n]; 4], vec![vec![C64::new(0.0, 0.0); m]; 4]);
    let (mut tc, mut tb) = (vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); m]);
    let norm_of = |c: &[C64], b: &[C64]| {
        c.iter().map(|x| x.norm_sqr()).sum::<f64>() + b.iter().zip(&w).map(|(x, w)| w * x.norm_sqr()).sum::<f64>()
    };
    let mut run = OracleRun { times: vec![0.0], atoms: vec![c.clone()], field: Vec::new(), norm: vec![norm_of(&c, &b)] };

    for step in 0..steps {
        for s in 0..4 {
            let f = [0.0, 0.5, 0.5, 1.0][s];
            if s == 0 {
                tc.copy_from_slice(&c);
                tb.copy_from_slice(&b);
            } else {
                for (t, (x, k)) in tc.iter_mut().zip(c.iter().zip(&kc[s - 1])) {
                    *t = x + k * (f * dt);
                }
                tb.par_iter_mut().zip(b.par_iter().zip(kb[s - 1].par_iter())).with_min_len(256).for_each(
                    |(t, (x, k))| {
                        *t = x + k * (f * dt);
                    },
                );
            }
            let (dc, db) = (&mut kc[s], &mut kb[s]);
            rhs(&tc, &tb, dc, db);
        }
        for (j, x) in c.iter_mut().enumerate() {
            *x += (kc[0][j] + 2.0 * kc[1][j] + 2.0 * kc[2][j] + kc[3][j]) * (dt / 6.0);
        }
        b.par_iter_mut().enumerate().with_min_len(256).for_each(|(mm, x)| {
            *x += (kb[0][mm] + 2.0 * kb[1][mm] + 2.0 * kb[2][mm] + kb[3][mm]) * (dt / 6.0);
        });
        if (step + 1) % record == 0 {
            let t = (step + 1) as f64 * dt;
            if c.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            run.times.push(t);
            run.atoms.push(c.clone());
            run.norm.push(norm_of(&c, &b));
        }
    }
    let t = steps as f64 * dt;
    run.field = b.iter().zip(&detuning).map(|(x, d)| x * C64::from_polar(1.0, d * t)).collect();
    Ok(run)
}

/// Brute-force one-excitation evolution on the k-grid.
pub fn schrodinger_one_excitation(
    net: &NetworkSpec,
    grid: &KGrid,
    init: &[C64],
    t_end: f64,
    dt: f64,
) -> Result<OracleRun> {
    if init.len() != net.len() {
        return Err(Error::Dimension { expected: net.len(), got: init.len() });
    }
    check(dt > 0.0 && t_end > 0.0, "dt", "dt and t_end must be positive")?;
    let wa = net.omega_a()?;
    check(
        dt * grid.half_width(wa) <= 0.1 + 1e-12,
        "dt",
        format!("dt·max|k − ωa| = {} exceeds 0.1", dt * grid.half_width(wa)),
    )?;
    grid.check_aliasing(t_end)?;
    let steps = (t_end / dt).round().max(1.0) as usize;
    integrate(net, grid, init, steps, t_end / steps as f64, 1)
}

/// max_j max_t |p_j^dde − p_j^oracle| / max_t p_j^dde with atom 1 excited,
/// on the DDE time grid.
pub fn compare_oracle_dde(net: &NetworkSpec, grid: &KGrid, t_end: f64, dt: f64) -> Result<f64> {
    Ok(compare_oracle_dde_detail(net, grid, t_end, dt)?.0)
}

/// The error together with both runs.
pub fn compare_oracle_dde_detail(
    net: &NetworkSpec,
    grid: &KGrid,
    t_end: f64,
    dt: f64,
) -> Result<(f64, crate::one_excitation::OneExcitationRun, OracleRun)> {
    let n = net.len();
    let mut init = vec![C64::new(0.0, 0.0); n];
    init[0] = C64::new(1.0, 0.0);
    let dde = simulate_one_excitation(net, &init, t_end, dt)?;
    let h = dde.trajectory.dt();
    // oracle step divides the DDE step so both share the time grid
    let wa = net.omega_a()?;
    let q = (h * grid.half_width(wa) / 0.1).ceil().max(1.0) as usize;
    grid.check_aliasing(t_end)?;
    let steps = (dde.trajectory.len() - 1) * q;
    let oracle = integrate(net, grid, &init, steps, h / q as f64, q)?;
    let mut worst = 0.0f64;
    for j in 0..n {
        let a = dde.population(j);
        let b = oracle.population(j);
        let scale = a.iter().cloned().fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(dev / scale);
    }
    Ok((worst, dde, oracle))
}
