//! Two excitations: pair amplitudes c_jl and the one-photon sector c_j•(t, k).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::dde::{integrate_dde, integrate_dde_forced, snapped_step, AmplitudeTrajectory};
use crate::error::{check, Error, Result};
use crate::network::{
    build_one_excitation_system, build_two_excitation_pair_system_with, coupling_unchecked, pair_index, pair_list,
    NetworkSpec, PairKernel,
};
use crate::oracle::KGrid;

/// Pair amplitudes at one time, lexicographic (j, l), j < l.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub pairs: Vec<C64>,
    pub time: f64,
}

impl PairState {
    /// Only pair (j, l) excited (0-based indices).
    pub fn single(n: usize, j: usize, l: usize) -> Self {
        let mut pairs = vec![C64::new(0.0, 0.0); n * (n - 1) / 2];
        pairs[pair_index(n, j, l)] = C64::new(1.0, 0.0);
        PairState { pairs, time: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct PairRun {
    pub n_atoms: usize,
    pub trajectory: AmplitudeTrajectory,
}

impl PairRun {
    pub fn state(&self, i: usize) -> PairState {
        PairState { pairs: self.trajectory.state(i).to_vec(), time: self.trajectory.times[i] }
    }

    /// |c_jl(t)|² on the stored grid (0-based atom indices).
    pub fn population(&self, j: usize, l: usize) -> Vec<f64> {
        self.trajectory.component(pair_index(self.n_atoms, j, l)).map(|c| c.norm_sqr()).collect()
    }
}

pub fn simulate_pair_amplitudes(net: &NetworkSpec, init: &PairState, t_end: f64, dt: f64) -> Result<PairRun> {
    simulate_pair_amplitudes_with(net, init, t_end, dt, PairKernel::Symmetric)
}

pub fn simulate_pair_amplitudes_with(
    net: &NetworkSpec,
    init: &PairState,
    t_end: f64,
    dt: f64,
    kernel: PairKernel,
) -> Result<PairRun> {
    let norm: f64 = init.pairs.iter().map(|c| c.norm_sqr()).sum();
    check(norm <= 1.0 + 1e-12, "init", format!("norm² {norm} exceeds 1"))?;
    let sys = build_two_excitation_pair_system_with(net, kernel)?;
    let trajectory = integrate_dde(&sys, &init.pairs, t_end, dt)?;
    Ok(PairRun { n_atoms: net.len(), trajectory })
}

/// Vertex probabilities p_j(t) = ∫|c_j•(t,k)|² dk/2π and the final field.
#[derive(Debug, Clone)]
pub struct SinglePhotonField {
    pub kgrid: KGrid,
    pub times: Vec<f64>,
    /// vertex_probability[i][j] at times[i].
    pub vertex_probability: Vec<Vec<f64>>,
    /// amplitudes[j][m] = c_j•(t_end, k_m).
    pub amplitudes: Vec<Vec<C64>>,
}

/// Default grid: 2048 points over ωa ± 20 ȳ, ȳ the largest emission rate.
pub fn default_kgrid(net: &NetworkSpec) -> Result<KGrid> {
    let wa = net.omega_a()?;
    let half = 20.0 * net.max_emission_rate().max(1e-3);
    KGrid::band(wa, half.min(wa), 2048)
}

const K_BLOCK: usize = 32;

pub fn simulate_single_photon_component(
    net: &NetworkSpec,
    pair: &PairRun,
    kgrid: &KGrid,
    t_end: f64,
    dt: f64,
) -> Result<SinglePhotonField> {
    let n = net.len();
    check(pair.n_atoms == n, "pair", "pair run belongs to a different network")?;
    if pair.trajectory.t_end() < t_end - 1e-9 {
        return Err(Error::OutOfRange { t: t_end, start: 0.0, end: pair.trajectory.t_end() });
    }
    kgrid.check_aliasing(t_end)?;
    let sys = build_one_excitation_system(net)?;
    let atoms = &net.atoms;
    let w = kgrid.weights();

    // the pair amplitudes are shared by every k: tabulate them at the half steps
    let h = snapped_step(&sys, dt);
    let half = 0.5 * h;
    let n_half = (t_end / half).ceil() as usize + 2;
    let np = pair.trajectory.dim;
    let mut table = vec![C64::new(0.0, 0.0); n_half * np];
    for (i, row) in table.chunks_mut(np).enumerate() {
        pair.trajectory.interpolate_into((i as f64 * half).min(pair.trajectory.t_end()), row)?;
    }
    let pair_at = |t: f64| {
        let i = ((t / half).round() as usize).min(n_half - 1);
        &table[i * np..(i + 1) * np]
    };
    let wa = net.omega_a()?;

    let run_k = |m: usize| -> Result<AmplitudeTrajectory> {
        let k = kgrid.k[m];
        // g_l(k, t) = G_l e^{i(k−ωa)t}
        let g0: Vec<C64> = atoms.iter().map(|a| coupling_unchecked(a, k, 0.0)).collect();
        let forcing = |t: f64, out: &mut [C64]| {
            let c = pair_at(t);
            let ph = C64::from_polar(1.0, (k - wa) * t);
            for (j, o) in out.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (l, gl) in g0.iter().enumerate() {
                    if l != j {
                        acc += c[pair_index(n, j, l)] * gl;
                    }
                }
                *o += -C64::i() * ph * acc;
            }
        };
        integrate_dde_forced(&sys, &vec![C64::new(0.0, 0.0); n], t_end, dt, forcing)
    };

    let blocks: Vec<Result<(Vec<f64>, Vec<Vec<C64>>, Vec<f64>)>> = (0..kgrid.len())
        .collect::<Vec<_>>()
        .par_chunks(K_BLOCK)
        .map(|ms| {
            let mut probs: Vec<f64> = Vec::new();
            let mut finals = Vec::with_capacity(ms.len());
            let mut times = Vec::new();
            for &m in ms {
                let tr = run_k(m)?;
                if probs.is_empty() {
                    probs = vec![0.0; tr.len() * n];
                    times = tr.times.clone();
                }
                for (p, c) in probs.iter_mut().zip(&tr.states) {
                    *p += w[m] * c.norm_sqr();
                }
                finals.push(tr.state(tr.len() - 1).to_vec());
            }
            Ok((probs, finals, times))
        })
        .collect();

    let mut probs: Vec<f64> = Vec::new();
    let mut times = Vec::new();
    let mut amplitudes = vec![Vec::with_capacity(kgrid.len()); n];
    for b in blocks {
        let (p, finals, t) = b?;
        if probs.is_empty() {
            probs = p;
            times = t;
        } else {
            for (a, b) in probs.iter_mut().zip(&p) {
                *a += b;
            }
        }
        for f in finals {
            for (j, c) in f.into_iter().enumerate() {
                amplitudes[j].push(c);
            }
        }
    }
    let vertex_probability = probs.chunks(n).map(|c| c.to_vec()).collect();
    Ok(SinglePhotonField { kgrid: kgrid.clone(), times, vertex_probability, amplitudes })
}

/// Delay-free generators valid before the first round trip: (pair, photon).
pub fn large_delay_generator(net: &NetworkSpec, t_end: f64) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    large_delay_generator_with(net, t_end, PairKernel::Symmetric)
}

pub fn large_delay_generator_with(
    net: &NetworkSpec,
    t_end: f64,
    kernel: PairKernel,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    if !net.positions_equal() {
        return Err(Error::PositionsNotEqual);
    }
    let tau = net.atoms[0].round_trip();
    if t_end >= tau {
        return Err(Error::DelayActive { t_end, tau });
    }
    let pair = build_two_excitation_pair_system_with(net, kernel)?;
    let photon = build_one_excitation_system(net)?;
    Ok((pair.instantaneous, photon.instantaneous))
}

/// Pair labels in storage order, 1-based.
pub fn pair_labels(n: usize) -> Vec<(usize, usize)> {
    pair_list(n).into_iter().map(|(j, l)| (j + 1, l + 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{AtomSpec, DelaySystem};
    use std::f64::consts::PI;

    fn fig3(g: [f64; 3]) -> NetworkSpec {
        let wa = 50.0;
        let z = 40.0 * PI / wa;
        NetworkSpec::new(g.iter().map(|&x| AtomSpec::nonchiral(z, x, wa)).collect(), 0.0).unwrap()
    }

    #[test]
    fn fig3b_pairs_13_and_23_coincide_before_tau() {
        let net = fig3([0.2, 0.2, 1.0]);
        let tau = net.atoms[0].round_trip();
        let run = simulate_pair_amplitudes(&net, &PairState::single(3, 0, 1), 0.99 * tau, 0.01).unwrap();
        let (p13, p23) = (run.population(0, 2), run.population(1, 2));
        let dev = p13.iter().zip(&p23).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-12, "{dev}");
        assert!(p13.iter().cloned().fold(0.0, f64::max) > 1e-3);
    }

    #[test]
    fn as_printed_kernel_breaks_the_symmetry() {
        let net = fig3([0.2, 0.2, 1.0]);
        let tau = net.atoms[0].round_trip();
        let run =
            simulate_pair_amplitudes_with(&net, &PairState::single(3, 0, 1), 0.99 * tau, 0.01, PairKernel::AsPrinted)
                .unwrap();
        let (p13, p23) = (run.population(0, 2), run.population(1, 2));
        let dev = p13.iter().zip(&p23).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev > 1e-3, "{dev}");
    }

    #[test]
    fn swapping_identical_atoms_permutes_pairs() {
        // atoms 1 and 2 identical: c13(init (13)) ↔ c23(init (23))
        let net = fig3([0.4, 0.4, 0.7]);
        let tau = net.atoms[0].round_trip();
        let a = simulate_pair_amplitudes(&net, &PairState::single(3, 0, 2), 2.5 * tau, 0.01).unwrap();
        let b = simulate_pair_amplitudes(&net, &PairState::single(3, 1, 2), 2.5 * tau, 0.01).unwrap();
        for i in 0..a.trajectory.len() {
            let (x, y) = (a.trajectory.state(i), b.trajectory.state(i));
            assert!((x[1] - y[2]).norm() < 1e-12);
            assert!((x[2] - y[1]).norm() < 1e-12);
            assert!((x[0] - y[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn large_delay_generator_matches_full_run_before_tau() {
        let net = fig3([0.2, 1.0, 1.0]);
        let tau = net.atoms[0].round_trip();
        let (gp, _) = large_delay_generator(&net, 0.9 * tau).unwrap();
        let full = simulate_pair_amplitudes(&net, &PairState::single(3, 0, 1), 0.9 * tau, 0.01).unwrap();
        let h = full.trajectory.dt();
        let plain =
            integrate_dde(&DelaySystem::new(gp, vec![]), &PairState::single(3, 0, 1).pairs, 0.9 * tau, h).unwrap();
        assert_eq!(plain.len(), full.trajectory.len());
        for i in 0..plain.len() {
            for (a, b) in plain.state(i).iter().zip(full.trajectory.state(i)) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        assert!(large_delay_generator(&net, tau).is_err());
    }

    #[test]
    fn symmetric_pair_generator_commutes_with_swap() {
        let net = fig3([0.3, 0.3, 0.8]);
        let (gp, _) = large_delay_generator(&net, 1.0).unwrap();
        // swap atoms 1 ↔ 2: (12)→(12), (13)→(23), (23)→(13)
        let mut p = DMatrix::<C64>::zeros(3, 3);
        p[(0, 0)] = C64::new(1.0, 0.0);
        p[(1, 2)] = C64::new(1.0, 0.0);
        p[(2, 1)] = C64::new(1.0, 0.0);
        assert!((&p * &gp - &gp * &p).norm() < 1e-14);
    }

    #[test]
    fn zero_pairs_leave_field_empty() {
        let net = fig3([0.2, 1.0, 1.0]);
        let init = PairState { pairs: vec![C64::new(0.0, 0.0); 3], time: 0.0 };
        let pair = simulate_pair_amplitudes(&net, &init, 2.0, 0.01).unwrap();
        let grid = KGrid::band(50.0, 5.0, 256).unwrap();
        let f = simulate_single_photon_component(&net, &pair, &grid, 2.0, 0.01).unwrap();
        assert!(f.vertex_probability.iter().flatten().all(|&p| p == 0.0));
    }

    /// Two distant atoms decay independently until light crosses between
    /// them: P(atom 1 up, atom 2 down) = e^{−2Γ₁t}(1 − e^{−2Γ₂t}). The band
    /// cuts the Lorentzian tails, so the error shrinks like 1/Δ.
    #[test]
    fn independent_decay_before_first_delay() {
        let wa = 50.0;
        let atoms = vec![AtomSpec::new(30.0, 0.3, 0.2, wa), AtomSpec::new(45.0, 0.25, 0.35, wa)];
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let t_end = 10.0;
        let pair = simulate_pair_amplitudes(&net, &PairState::single(2, 0, 1), t_end, 0.01).unwrap();
        let (g1, g2) = (net.atoms[0].emission_rate(), net.atoms[1].emission_rate());
        let worst = |half: f64, m: usize| {
            let grid = KGrid::band(wa, half, m).unwrap();
            let f = simulate_single_photon_component(&net, &pair, &grid, t_end, 0.01).unwrap();
            let mut worst = 0.0f64;
            for (i, &t) in f.times.iter().enumerate().step_by(50) {
                let p1 = (-2.0 * g1 * t).exp() * (1.0 - (-2.0 * g2 * t).exp());
                let p2 = (-2.0 * g2 * t).exp() * (1.0 - (-2.0 * g1 * t).exp());
                let c12 = pair.trajectory.interpolate(t).unwrap()[0].norm_sqr();
                let (q1, q2) = (f.vertex_probability[i][0], f.vertex_probability[i][1]);
                assert!(c12 + q1 + q2 <= 1.0 + 1e-9);
                worst = worst.max((q1 - p1).abs()).max((q2 - p2).abs());
            }
            worst
        };
        let (coarse, fine) = (worst(3.0, 1024), worst(12.0, 4096));
        assert!(fine < 1e-2, "{fine}");
        assert!(fine < 0.5 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn aliasing_guard() {
        let net = fig3([0.2, 1.0, 1.0]);
        let pair = simulate_pair_amplitudes(&net, &PairState::single(3, 0, 1), 100.0, 0.05).unwrap();
        let coarse = KGrid::band(50.0, 5.0, 256).unwrap();
        assert!(matches!(
            simulate_single_photon_component(&net, &pair, &coarse, 100.0, 0.05),
            Err(Error::Aliasing(_))
        ));
    }

    fn theorem2() -> NetworkSpec {
        let wa = 50.0;
        let atoms = vec![AtomSpec::nonchiral(PI / wa, 0.02, wa), AtomSpec::nonchiral(2.0 * PI / wa, 0.02, wa)];
        NetworkSpec::new(atoms, 0.0).unwrap()
    }

    #[test]
    fn theorem2_pair_is_stationary_and_photons_stay_out() {
        let net = theorem2();
        let tau = net.atoms[1].round_trip();
        let run = simulate_pair_amplitudes(&net, &PairState::single(2, 0, 1), 10.0 * tau, tau / 200.0).unwrap();
        let p = run.population(0, 1);
        let floor = p.iter().cloned().fold(1.0, f64::min);
        assert!(floor > 0.99, "{floor}");
        let h = run.trajectory.dt();
        let worst = p
            .windows(2)
            .zip(&run.trajectory.times)
            .filter(|(_, &t)| t > tau)
            .map(|(w, _)| ((w[1] - w[0]) / h).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");

        let grid = default_kgrid(&net).unwrap();
        let f = simulate_single_photon_component(&net, &run, &grid, 10.0 * tau, tau / 200.0).unwrap();
        let last = f.vertex_probability.last().unwrap();
        assert!(last.iter().all(|&q| q < 1e-3), "{last:?}");
    }

    #[test]
    fn fig3a_third_atom_absorbs_before_tau() {
        let net = fig3([0.2, 1.0, 1.0]);
        let tau = net.atoms[0].round_trip();
        let run = simulate_pair_amplitudes(&net, &PairState::single(3, 0, 1), 0.99 * tau, 0.01).unwrap();
        // atom 2 is the strong emitter, so (1,3) gains far more than (2,3)
        let peak = |j, l| run.population(j, l).iter().cloned().fold(0.0, f64::max);
        assert!(peak(0, 2) > 0.1);
        assert!(peak(1, 2) > 1e-4 && peak(1, 2) < peak(0, 2));
        assert_eq!(run.population(0, 2)[0], 0.0);
    }
}
