//! One excitation shared between the atoms and the waveguide.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::dde::{integrate_dde, AmplitudeTrajectory};
use crate::error::{check, Error, Result};
use crate::laplace::{richardson_to_zero, talbot, TALBOT_NODES};
use crate::network::{build_one_excitation_system, NetworkSpec};

#[derive(Debug, Clone)]
pub struct OneExcitationRun {
    pub network: NetworkSpec,
    pub trajectory: AmplitudeTrajectory,
    pub photon_probability: Vec<f64>,
}

impl OneExcitationRun {
    pub fn population(&self, j: usize) -> Vec<f64> {
        self.trajectory.component(j).map(|c| c.norm_sqr()).collect()
    }

    pub fn times(&self) -> &[f64] {
        &self.trajectory.times
    }

    /// Mean of |c_j|² over the last `window` of the run.
    pub fn plateau(&self, j: usize, window: f64) -> f64 {
        let t_end = self.trajectory.t_end();
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &t) in self.trajectory.times.iter().enumerate() {
            if t >= t_end - window {
                sum += self.trajectory.state(i)[j].norm_sqr();
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }
}

pub fn simulate_one_excitation(net: &NetworkSpec, init: &[C64], t_end: f64, dt: f64) -> Result<OneExcitationRun> {
    let norm: f64 = init.iter().map(|c| c.norm_sqr()).sum();
    check(norm <= 1.0 + 1e-12, "init", format!("norm² {norm} exceeds 1"))?;
    let sys = build_one_excitation_system(net)?;
    let trajectory = integrate_dde(&sys, init, t_end, dt)?;
    let photon_probability = (0..trajectory.len())
        .map(|i| 1.0 - trajectory.state(i).iter().map(|c| c.norm_sqr()).sum::<f64>())
        .collect();
    Ok(OneExcitationRun { network: net.clone(), trajectory, photon_probability })
}

/// Closed-form amplitudes on the first segment for the configuration with
/// γ_1 = (N−1)g, γ_j = g (nonchiral, coincident), atom 1 initially excited.
pub fn segment_one_analytic(n: usize, g: f64, t: f64) -> (f64, f64) {
    let nf = n as f64;
    let e = (-nf * (nf - 1.0) * g * g * t).exp();
    (1.0 / nf + (nf - 1.0) / nf * e, -1.0 / nf + e / nf)
}

/// M(s) = sI − A0 − e^{iωaτ} B0 e^{−sτ}.
pub fn characteristic_matrix(s: C64, a0: &DMatrix<C64>, b0: &DMatrix<C64>, tau: f64, omega_a: f64) -> DMatrix<C64> {
    let n = a0.nrows();
    let k = C64::from_polar(1.0, omega_a * tau) * (-s * tau).exp();
    DMatrix::identity(n, n) * s - a0 - b0 * k
}

/// X(s) = M(s)⁻¹ x0.
pub fn laplace_solution(
    s: C64,
    a0: &DMatrix<C64>,
    b0: &DMatrix<C64>,
    tau: f64,
    omega_a: f64,
    x0: &DVector<C64>,
) -> Result<DVector<C64>> {
    characteristic_matrix(s, a0, b0, tau, omega_a)
        .lu()
        .solve(x0)
        .ok_or_else(|| Error::Singular(format!("{s}")))
}

/// C_j(s) for x0 = e_1 written as a cofactor ratio, (−1)^{1+j} minor_{1j}/det.
pub fn cofactor_ratio(m: &DMatrix<C64>, j: usize) -> Result<C64> {
    let det = m.determinant();
    if det.norm() < 1e-300 {
        return Err(Error::Singular("det M = 0".into()));
    }
    let minor = m.clone().remove_row(0).remove_column(j);
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    let cof = if minor.nrows() == 0 { C64::new(1.0, 0.0) } else { minor.determinant() };
    Ok(cof * sign / det)
}

/// Inverse transform of the characteristic-matrix solution.
///
/// X(s) is expanded in powers of e^{−sτ}; the n-th term is a rational
/// function shifted by nτ, so each is inverted by Talbot at t − nτ. This is
/// exact term by term and avoids the retarded root chain that defeats a
/// single contour.
pub fn inverse_laplace(
    a0: &DMatrix<C64>,
    b0: &DMatrix<C64>,
    tau: f64,
    omega_a: f64,
    x0: &DVector<C64>,
    t: f64,
) -> Result<DVector<C64>> {
    let n = a0.nrows();
    let kb = b0 * C64::from_polar(1.0, omega_a * tau);
    let mut out: DVector<C64> = DVector::zeros(n);
    let segments = if tau > 0.0 { (t / tau).floor() as usize } else { 0 };
    for m in 0..=segments {
        let shift = t - m as f64 * tau;
        if shift <= 0.0 {
            continue;
        }
        for j in 0..n {
            let term = |s: C64| -> C64 {
                let lu = (DMatrix::identity(n, n) * s - a0).lu();
                let mut v = lu.solve(x0).unwrap_or_else(|| DVector::from_element(n, C64::new(f64::NAN, 0.0)));
                for _ in 0..m {
                    v = lu
                        .solve(&(&kb * v))
                        .unwrap_or_else(|| DVector::from_element(n, C64::new(f64::NAN, 0.0)));
                }
                v[j]
            };
            out[j] += talbot(term, shift, TALBOT_NODES);
        }
    }
    if out.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::Singular("resolvent on the Talbot contour".into()));
    }
    Ok(out)
}

/// The matrix printed alongside the real/imaginary split,
/// G = [[−cos ωaτ, sin ωaτ], [−sin ωaτ, −cos ωaτ]].
pub fn g_matrix(tau: f64, omega_a: f64) -> nalgebra::Matrix2<f64> {
    let (s, c) = (omega_a * tau).sin_cos();
    nalgebra::Matrix2::new(-c, s, -s, -c)
}

/// Real 2N-dimensional form of x' = A0 x + e^{iωaτ} B0 x(t−τ), ordered
/// (Re c1, Im c1, Re c2, …). The delayed block is B0 ⊗ R(ωaτ) = −B0 ⊗ G.
pub fn real_form_matrices(
    a0: &DMatrix<C64>,
    b0: &DMatrix<C64>,
    tau: f64,
    omega_a: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = C64::from_polar(1.0, omega_a * tau);
    let realify = |m: &DMatrix<C64>| {
        let n = m.nrows();
        let mut r = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                r[(2 * i, 2 * j)] = z.re;
                r[(2 * i, 2 * j + 1)] = -z.im;
                r[(2 * i + 1, 2 * j)] = z.im;
                r[(2 * i + 1, 2 * j + 1)] = z.re;
            }
        }
        r
    };
    let _ = tau;
    (realify(a0), realify(&(b0 * k)))
}

#[derive(Debug, Clone)]
pub struct FinalValueReport {
    pub residual: f64,
    pub rank_a0: usize,
    pub rank_b0: usize,
    pub ladder: Vec<(f64, f64)>,
}

pub fn numerical_rank(m: &DMatrix<C64>) -> usize {
    let sv = m.clone().singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

/// ‖s (sI − A0)⁻¹ B0 x0‖ as s → 0⁺.
pub fn final_value_consensus_check(
    a0: &DMatrix<C64>,
    b0: &DMatrix<C64>,
    x0: &DVector<C64>,
) -> Result<FinalValueReport> {
    let n = a0.nrows();
    let b0x = b0 * x0;
    let (residual, ladder) = if b0x.norm() == 0.0 {
        (0.0, Vec::new())
    } else {
        richardson_to_zero(|s| {
            let m = DMatrix::identity(n, n) * C64::new(s, 0.0) - a0;
            let v = m.lu().solve(&b0x).ok_or_else(|| Error::Singular(format!("{s}")))?;
            Ok(s * v.norm())
        })?
    };
    Ok(FinalValueReport { residual: residual.abs(), rank_a0: numerical_rank(a0), rank_b0: numerical_rank(b0), ladder })
}

/// Jumps of the m-th derivative detected on a uniform series.
#[derive(Debug, Clone, PartialEq)]
pub struct Kink {
    pub index: usize,
    pub time: f64,
    pub order: usize,
    pub size: f64,
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Second-order one-sided m-th derivative at sample `i0` from m + 2 samples
/// `stride` apart, heading forward (dir = 1) or backward (dir = −1).
fn one_sided(y: &[f64], i0: usize, m: usize, dir: isize, stride: usize, h: f64) -> f64 {
    // forward: h^{-m}(Δ^m − (m/2)Δ^{m+1}); backward mirrors it with ∇
    let at = |k: usize| y[(i0 as isize + dir * (k * stride) as isize) as usize];
    let diff = |order: usize| -> f64 {
        (0..=order)
            .map(|k| {
                let s = if (order - k) % 2 == 0 { 1.0 } else { -1.0 };
                s * binom(order, k) * at(k)
            })
            .sum()
    };
    let sgn = if dir > 0 || m % 2 == 0 { 1.0 } else { -1.0 };
    sgn * (diff(m) - 0.5 * m as f64 * diff(m + 1)) / (h * stride as f64).powi(m as i32)
}

/// |right − left| estimate of the m-th derivative at sample i.
pub fn derivative_mismatch(y: &[f64], i: usize, m: usize, stride: usize, h: f64) -> f64 {
    (one_sided(y, i, m, 1, stride, h) - one_sided(y, i, m, -1, stride, h)).abs()
}

/// Finds points where a derivative of order 1..=max_order jumps.
///
/// Left and right one-sided estimates of the m-th derivative differ by the
/// jump size J at a genuine order-m discontinuity, whatever the step. Smooth
/// stretches give O(h²) and higher-order jumps O(h^{q−m}), so a candidate
/// must stand `factor` times above the median mismatch, dominate its
/// neighbourhood, and keep its size when the stride doubles.
pub fn derivative_jumps(times: &[f64], y: &[f64], max_order: usize, factor: f64) -> Vec<Kink> {
    let n = y.len();
    let reach = 2 * (max_order + 1);
    if n < 2 * reach + 3 {
        return Vec::new();
    }
    let h = times[1] - times[0];
    let mut found: Vec<Kink> = Vec::new();
    for m in 1..=max_order {
        let w = 2 * (m + 1);
        let mut stat = vec![0.0; n];
        for (i, s) in stat.iter_mut().enumerate().take(n - w).skip(w) {
            *s = derivative_mismatch(y, i, m, 1, h);
        }
        let mut sorted: Vec<f64> = stat[w..n - w].to_vec();
        sorted.sort_by(f64::total_cmp);
        let thresh = factor * sorted[sorted.len() / 2].max(f64::MIN_POSITIVE);
        for i in w..n - w {
            let s = stat[i];
            let lo = i.saturating_sub(reach).max(w);
            let hi = (i + reach).min(n - w - 1);
            if s <= thresh || stat[lo..=hi].iter().any(|&v| v > s) {
                continue;
            }
            // the largest mismatch can sit next to the jump, where one stencil
            // straddles it; at the jump itself both one-sided estimates agree
            // with their unstraddled neighbours
            let consistency = |j: usize| {
                let f = |k| one_sided(y, k, m, 1, 1, h);
                let b = |k| one_sided(y, k, m, -1, 1, h);
                ((f(j) - f(j + 1)).abs() + (b(j) - b(j - 1)).abs()) / stat[j]
            };
            let i = (lo..=hi)
                .filter(|&j| stat[j] > thresh && j > w && j + 1 < n - w)
                .min_by(|&a, &b| consistency(a).total_cmp(&consistency(b)))
                .unwrap_or(i);
            let s = stat[i];
            if found.iter().any(|k| k.index.abs_diff(i) <= reach) {
                continue;
            }
            // window maxima: a jump sitting between samples scales with the
            // stride just like a higher-order jump does
            let (lo2, hi2) = (i.saturating_sub(2).max(w), (i + 2).min(n - w - 1));
            let coarse = (lo2..=hi2).map(|j| derivative_mismatch(y, j, m, 2, h)).fold(0.0, f64::max);
            let fine = stat[i - 1..=i + 1].iter().cloned().fold(0.0, f64::max);
            if !(0.5..1.6).contains(&(coarse / fine)) {
                continue;
            }
            found.push(Kink { index: i, time: times[i], order: m, size: s });
        }
    }
    found.sort_by_key(|k| k.index);
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_single_delay_matrices, AtomSpec};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn theorem_one_net(g: f64) -> NetworkSpec {
        let wa = 50.0;
        let z = 40.0 * PI / wa;
        let mut atoms = vec![AtomSpec::nonchiral(z, 3.0 * g, wa)];
        atoms.extend((0..3).map(|_| AtomSpec::nonchiral(z, g, wa)));
        NetworkSpec::new(atoms, 0.0).unwrap()
    }

    fn e1(n: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[0] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn segment_formula_limits() {
        assert_eq!(segment_one_analytic(4, 0.2, 0.0), (1.0, 0.0));
        let (c1, cj) = segment_one_analytic(4, 0.2, 1e4);
        assert_abs_diff_eq!(c1, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(cj, -0.25, epsilon = 1e-15);
    }

    /// Independent oracle: A0 = −γγᵀ, so x(t) = e1 − γ γ₁ (1 − e^{−|γ|²t})/|γ|².
    #[test]
    fn segment_formula_matches_projector_solution() {
        let g = 0.2;
        let gam = [3.0 * g, g, g, g];
        let norm2: f64 = gam.iter().map(|x| x * x).sum();
        for t in [0.3, 1.0, 4.0] {
            let f = 1.0 - (-norm2 * t).exp();
            let c1 = 1.0 - gam[0] * gam[0] * f / norm2;
            let cj = -gam[1] * gam[0] * f / norm2;
            let (a, b) = segment_one_analytic(4, g, t);
            assert_abs_diff_eq!(a, c1, epsilon = 1e-14);
            assert_abs_diff_eq!(b, cj, epsilon = 1e-14);
        }
    }

    #[test]
    fn dde_matches_segment_formula() {
        let g = 0.2;
        let net = theorem_one_net(g);
        let tau = net.atoms[0].round_trip();
        let run = simulate_one_excitation(&net, &e1(4), 0.999 * tau, 0.01).unwrap();
        let mut err: f64 = 0.0;
        for (i, &t) in run.times().iter().enumerate() {
            if t >= tau {
                continue;
            }
            let (c1, cj) = segment_one_analytic(4, g, t);
            let s = run.trajectory.state(i);
            err = err.max((s[0] - c1).norm());
            for c in &s[1..] {
                err = err.max((c - cj).norm());
            }
        }
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_couplings_freeze() {
        let net = NetworkSpec::new(vec![AtomSpec::nonchiral(1.0, 0.0, 3.0)], 0.0).unwrap();
        let run = simulate_one_excitation(&net, &[C64::new(0.6, 0.8)], 3.0, 0.1).unwrap();
        for i in 0..run.trajectory.len() {
            assert_eq!(run.trajectory.state(i)[0], C64::new(0.6, 0.8));
        }
    }

    #[test]
    fn rejects_overnormalized_init() {
        let net = NetworkSpec::new(vec![AtomSpec::nonchiral(1.0, 0.1, 3.0)], 0.0).unwrap();
        assert!(simulate_one_excitation(&net, &[C64::new(1.1, 0.0)], 1.0, 0.1).is_err());
    }

    #[test]
    fn characteristic_matrix_limits() {
        let net = theorem_one_net(0.2);
        let (a0, b0, tau) = build_single_delay_matrices(&net).unwrap();
        let s = C64::new(1e6, 0.0);
        let m = characteristic_matrix(s, &a0, &b0, tau, 50.0);
        assert_abs_diff_eq!((cofactor_ratio(&m, 0).unwrap() * s).re, 1.0, epsilon = 1e-5);
        let m0 = characteristic_matrix(C64::new(0.7, 0.2), &a0, &b0, 0.0, 50.0);
        let direct = DMatrix::identity(4, 4) * C64::new(0.7, 0.2) - &a0 - &b0;
        assert!((m0 - direct).norm() < 1e-15);
    }

    #[test]
    fn cofactors_agree_with_solve() {
        let net = theorem_one_net(0.2);
        let (a0, b0, tau) = build_single_delay_matrices(&net).unwrap();
        let s = C64::new(0.3, 1.7);
        let x0 = DVector::from_vec(e1(4));
        let v = laplace_solution(s, &a0, &b0, tau, 50.0, &x0).unwrap();
        let m = characteristic_matrix(s, &a0, &b0, tau, 50.0);
        for j in 0..4 {
            // column 1 of M⁻¹: cofactor of entry (j, 1) over det
            let minor = m.clone().remove_row(j).remove_column(0);
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let want = minor.determinant() * sign / m.determinant();
            assert!((v[j] - want).norm() < 1e-12);
        }
        // the row-1 cofactor helper gives row 1 of M⁻¹
        let inv = m.clone().try_inverse().unwrap();
        for j in 0..4 {
            assert!((cofactor_ratio(&m, j).unwrap() - inv[(j, 0)]).norm() < 1e-12 || j > 0);
        }
    }

    #[test]
    fn inverse_laplace_matches_dde_over_three_segments() {
        let net = theorem_one_net(0.2);
        let (a0, b0, tau) = build_single_delay_matrices(&net).unwrap();
        let run = simulate_one_excitation(&net, &e1(4), 3.0 * tau, 0.005).unwrap();
        let x0 = DVector::from_vec(e1(4));
        for frac in [0.3, 0.9, 1.4, 2.2, 2.8] {
            let t = frac * tau;
            let v = inverse_laplace(&a0, &b0, tau, 50.0, &x0, t).unwrap();
            let d = run.trajectory.interpolate(t).unwrap();
            for j in 0..4 {
                assert!((v[j] - d[j]).norm() < 1e-6, "t={t} j={j} {} vs {}", v[j], d[j]);
            }
        }
    }

    #[test]
    fn g_matrix_examples() {
        let g = g_matrix(2.0 * PI, 1.0);
        assert_abs_diff_eq!(g[(0, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(1, 1)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(0, 1)], 0.0, epsilon = 1e-15);
        let g = g_matrix(PI / 2.0, 1.0);
        assert_abs_diff_eq!(g[(0, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(1, 0)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn real_form_reproduces_complex_trajectory() {
        use crate::network::DelaySystem;
        let wa = 50.0;
        let z = 0.937;
        let atoms = vec![AtomSpec::new(z, 0.4, 0.25, wa), AtomSpec::new(z, 0.15, 0.5, wa)];
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let (a0, b0, tau) = build_single_delay_matrices(&net).unwrap();
        let (ar, br) = real_form_matrices(&a0, &b0, tau, wa);
        // −B0 ⊗ G is the same block
        let g = g_matrix(tau, wa);
        for i in 0..2 {
            for j in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        assert_abs_diff_eq!(br[(2 * i + a, 2 * j + b)], -b0[(i, j)].re * g[(a, b)], epsilon = 1e-14);
                    }
                }
            }
        }
        let x0 = [C64::new(0.6, 0.2), C64::new(-0.3, 0.5)];
        let run = simulate_one_excitation(&net, &x0, 3.0 * tau, 0.01).unwrap();
        let mut sys = DelaySystem::new(ar.map(|v| C64::new(v, 0.0)), (0..4).map(|i| i.to_string()).collect());
        for r in 0..4 {
            for c in 0..4 {
                sys.add(tau, r, c, C64::new(br[(r, c)], 0.0));
            }
        }
        let sys = sys.finish();
        let xr: Vec<C64> = x0.iter().flat_map(|c| [C64::new(c.re, 0.0), C64::new(c.im, 0.0)]).collect();
        let tr = integrate_dde(&sys, &xr, 3.0 * tau, 0.01).unwrap();
        assert_eq!(tr.len(), run.trajectory.len());
        for i in 0..tr.len() {
            let (r, c) = (tr.state(i), run.trajectory.state(i));
            for j in 0..2 {
                assert_abs_diff_eq!(r[2 * j].re, c[j].re, epsilon = 1e-10);
                assert_abs_diff_eq!(r[2 * j + 1].re, c[j].im, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn final_value_check_theorem_one() {
        let net = theorem_one_net(0.2);
        let (a0, b0, _) = build_single_delay_matrices(&net).unwrap();
        let rep = final_value_consensus_check(&a0, &b0, &DVector::from_vec(e1(4))).unwrap();
        assert!(rep.residual < 1e-10, "{}", rep.residual);
        assert_eq!((rep.rank_a0, rep.rank_b0), (1, 1));
        let z = DMatrix::zeros(4, 4);
        let rep = final_value_consensus_check(&a0, &z, &DVector::from_vec(e1(4))).unwrap();
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn trapped_single_atom_plateau_is_positive() {
        let wa = 50.0;
        let net = NetworkSpec::new(vec![AtomSpec::nonchiral(PI / wa * 20.0, 0.5, wa)], 0.0).unwrap();
        let tau = net.atoms[0].round_trip();
        let run = simulate_one_excitation(&net, &e1(1), 12.0 * tau, 0.01).unwrap();
        // x' = −γ²(x − x(t−τ)): the plateau amplitude is 1/(1 + γ²τ)
        let want = (1.0 / (1.0 + 0.25 * tau)).powi(2);
        let p = run.plateau(0, tau);
        assert!((p - want).abs() < 2e-3 * want, "{p} vs {want}");
    }

    #[test]
    fn kink_detector_on_synthetic_series() {
        // |t − 1| has a first-derivative jump, (t − 2)³₊ a third-derivative jump
        let h = 0.01;
        let times: Vec<f64> = (0..400).map(|i| i as f64 * h).collect();
        let y: Vec<f64> = times
            .iter()
            .map(|&t| (t * 0.7).sin() + 0.3 * (t - 1.0).abs() + if t > 2.0 { (t - 2.0).powi(3) } else { 0.0 })
            .collect();
        let k = derivative_jumps(&times, &y, 4, 50.0);
        let at: Vec<(usize, f64)> = k.iter().map(|k| (k.order, k.time)).collect();
        assert_eq!(at.len(), 2, "{at:?}");
        assert_eq!(at[0].0, 1);
        assert_abs_diff_eq!(at[0].1, 1.0, epsilon = 1e-9);
        assert_eq!(at[1].0, 3);
        assert_abs_diff_eq!(at[1].1, 2.0, epsilon = 1e-9);
    }
}
