//! Atom/waveguide geometry and the delay-kernel coefficients it induces.
//!
//! Units: c = 1, so positions and delays share a unit. The mirror sits at
//! z = 0 and every atom at z_j > 0.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};

/// Relative tolerance under which two delays count as the same delay.
pub const DELAY_MERGE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub position: f64,
    pub gamma_right: f64,
    pub gamma_left: f64,
    pub omega_a: f64,
    #[serde(default)]
    pub gamma_env: f64,
}

impl AtomSpec {
    pub fn new(position: f64, gamma_right: f64, gamma_left: f64, omega_a: f64) -> Self {
        AtomSpec { position, gamma_right, gamma_left, omega_a, gamma_env: 0.0 }
    }

    pub fn nonchiral(position: f64, gamma: f64, omega_a: f64) -> Self {
        Self::new(position, gamma, gamma, omega_a)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.position.is_finite() && self.position > 0.0, "position", format!("{} must be > 0", self.position))?;
        for (name, v) in [
            ("gamma_right", self.gamma_right),
            ("gamma_left", self.gamma_left),
            ("gamma_env", self.gamma_env),
        ] {
            check(v.is_finite() && v >= 0.0, name, format!("{v} must be finite and >= 0"))?;
        }
        check(self.omega_a.is_finite() && self.omega_a > 0.0, "omega_a", format!("{} must be > 0", self.omega_a))
    }

    /// Total emission rate into the waveguide, (γ_R² + γ_L²)/2.
    pub fn emission_rate(&self) -> f64 {
        0.5 * (self.gamma_right.powi(2) + self.gamma_left.powi(2))
    }

    /// Round trip to the mirror and back.
    pub fn round_trip(&self) -> f64 {
        2.0 * self.position
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub waveguide_loss: f64,
}

impl NetworkSpec {
    /// Positions must be non-decreasing. Coincident atoms are allowed; their
    /// zero-delay exchange is folded into the instantaneous matrix.
    pub fn new(atoms: Vec<AtomSpec>, waveguide_loss: f64) -> Result<Self> {
        check(!atoms.is_empty(), "atoms", "at least one atom is required")?;
        check(
            waveguide_loss.is_finite() && waveguide_loss >= 0.0,
            "waveguide_loss",
            format!("{waveguide_loss} must be finite and >= 0"),
        )?;
        for a in &atoms {
            a.validate()?;
        }
        for (i, w) in atoms.windows(2).enumerate() {
            if w[1].position < w[0].position {
                return Err(Error::UnsortedPositions {
                    index: i + 1,
                    position: w[1].position,
                    previous: w[0].position,
                });
            }
        }
        Ok(NetworkSpec { atoms, waveguide_loss })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The common resonant frequency.
    pub fn omega_a(&self) -> Result<f64> {
        let w0 = self.atoms[0].omega_a;
        for a in &self.atoms[1..] {
            if (a.omega_a - w0).abs() > 1e-12 * w0.abs() {
                return Err(Error::UnequalFrequencies(w0, a.omega_a));
            }
        }
        Ok(w0)
    }

    pub fn max_emission_rate(&self) -> f64 {
        self.atoms.iter().map(AtomSpec::emission_rate).fold(0.0, f64::max)
    }

    pub fn positions_equal(&self) -> bool {
        let z0 = self.atoms[0].position;
        self.atoms.iter().all(|a| (a.position - z0).abs() <= DELAY_MERGE_RTOL * z0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTerm {
    pub delay: f64,
    pub matrix: DMatrix<C64>,
}

/// Linear complex DDE  x'(t) = A x(t) + Σ_d B_d x(t − d).
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem {
    pub dim: usize,
    pub instantaneous: DMatrix<C64>,
    pub delayed_terms: Vec<DelayTerm>,
    pub labels: Vec<String>,
}

impl DelaySystem {
    pub fn new(instantaneous: DMatrix<C64>, labels: Vec<String>) -> Self {
        let dim = instantaneous.nrows();
        DelaySystem { dim, instantaneous, delayed_terms: Vec::new(), labels }
    }

    /// Adds `coef` at (row, col) for the given delay. Zero delays land in the
    /// instantaneous matrix; near-equal delays share one matrix.
    pub fn add(&mut self, delay: f64, row: usize, col: usize, coef: C64) {
        if coef == C64::new(0.0, 0.0) {
            return;
        }
        if delay.abs() <= f64::EPSILON {
            self.instantaneous[(row, col)] += coef;
            return;
        }
        let hit = self
            .delayed_terms
            .iter_mut()
            .find(|t| (t.delay - delay).abs() <= DELAY_MERGE_RTOL * t.delay.max(delay));
        match hit {
            Some(t) => t.matrix[(row, col)] += coef,
            None => {
                let mut m = DMatrix::zeros(self.dim, self.dim);
                m[(row, col)] = coef;
                self.delayed_terms.push(DelayTerm { delay, matrix: m });
            }
        }
    }

    /// Drops cancelled terms and orders the rest by delay.
    pub fn finish(mut self) -> Self {
        self.delayed_terms.retain(|t| t.matrix.iter().any(|c| c.norm() > 0.0));
        self.delayed_terms.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        self
    }

    pub fn min_delay(&self) -> Option<f64> {
        self.delayed_terms.first().map(|t| t.delay)
    }

    pub fn max_delay(&self) -> Option<f64> {
        self.delayed_terms.last().map(|t| t.delay)
    }

    /// The delay-free generator seen before the shortest delay has elapsed.
    pub fn undelayed(&self) -> DelaySystem {
        DelaySystem::new(self.instantaneous.clone(), self.labels.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub y_gamma: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    pub gamma_eff: f64,
}

/// g_j(k, t) with the global factor i kept.
pub fn coupling_coefficient(atom: &AtomSpec, k: f64, t: f64) -> Result<C64> {
    check(k.is_finite() && k >= 0.0, "k", format!("{k} must be finite and >= 0"))?;
    check(t.is_finite() && t >= 0.0, "t", format!("{t} must be finite and >= 0"))?;
    Ok(coupling_unchecked(atom, k, t))
}

#[inline]
pub(crate) fn coupling_unchecked(atom: &AtomSpec, k: f64, t: f64) -> C64 {
    let rot = (k - atom.omega_a) * t;
    let i = C64::i();
    i * atom.gamma_right * C64::from_polar(1.0, rot - k * atom.position)
        - i * atom.gamma_left * C64::from_polar(1.0, rot + k * atom.position)
}

/// One propagation channel from atom `src` to atom `dst`: (delay, coefficient).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Channel {
    pub delay: f64,
    pub coef: C64,
}

/// Direct (non-reflected) transfer src -> dst, dst != src. Coincident atoms
/// are ordered by index, which reproduces the single-delay matrix form.
pub(crate) fn direct_channel(atoms: &[AtomSpec], dst: usize, src: usize, wa: f64) -> Channel {
    let (a, b) = (&atoms[dst], &atoms[src]);
    let d = (a.position - b.position).abs();
    let phase = C64::from_polar(1.0, wa * d);
    let coef = if src < dst {
        -a.gamma_right * b.gamma_right * phase
    } else {
        -a.gamma_left * b.gamma_left * phase
    };
    Channel { delay: d, coef }
}

/// Mirror-reflected transfer src -> dst (src == dst allowed).
pub(crate) fn mirror_channel(atoms: &[AtomSpec], dst: usize, src: usize, wa: f64) -> Channel {
    let (a, b) = (&atoms[dst], &atoms[src]);
    let d = a.position + b.position;
    Channel { delay: d, coef: a.gamma_right * b.gamma_left * C64::from_polar(1.0, wa * d) }
}

fn decay_diag(a: &AtomSpec) -> C64 {
    C64::new(-a.emission_rate(), 0.0)
}

pub fn build_one_excitation_system(net: &NetworkSpec) -> Result<DelaySystem> {
    let wa = net.omega_a()?;
    let n = net.len();
    let labels = (1..=n).map(|j| format!("c{j}")).collect();
    let mut sys = DelaySystem::new(DMatrix::zeros(n, n), labels);
    for j in 0..n {
        sys.instantaneous[(j, j)] += decay_diag(&net.atoms[j]);
        for p in 0..n {
            if p != j {
                let ch = direct_channel(&net.atoms, j, p, wa);
                sys.add(ch.delay, j, p, ch.coef);
            }
            let ch = mirror_channel(&net.atoms, j, p, wa);
            sys.add(ch.delay, j, p, ch.coef);
        }
    }
    Ok(sys.finish())
}

/// (A0, B0, τ) for atoms sharing one position.
pub fn build_single_delay_matrices(net: &NetworkSpec) -> Result<(DMatrix<C64>, DMatrix<C64>, f64)> {
    if !net.positions_equal() {
        return Err(Error::PositionsNotEqual);
    }
    net.omega_a()?;
    let n = net.len();
    let mut a0 = DMatrix::zeros(n, n);
    let mut b0 = DMatrix::zeros(n, n);
    for j in 0..n {
        let aj = &net.atoms[j];
        for p in 0..n {
            let ap = &net.atoms[p];
            a0[(j, p)] = match p.cmp(&j) {
                std::cmp::Ordering::Equal => decay_diag(aj),
                std::cmp::Ordering::Greater => C64::new(-aj.gamma_left * ap.gamma_left, 0.0),
                std::cmp::Ordering::Less => C64::new(-aj.gamma_right * ap.gamma_right, 0.0),
            };
            b0[(j, p)] = C64::new(aj.gamma_right * ap.gamma_left, 0.0);
        }
    }
    Ok((a0, b0, net.atoms[0].round_trip()))
}

/// Which reading of the pair-amplitude delay equation to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKernel {
    /// Every excitation moves with the full one-excitation kernel to any atom
    /// that is not already excited; c_jl is symmetric.
    #[default]
    Symmetric,
    /// The printed sums: ordered exchange ranges, mirror terms fed by c_jl.
    AsPrinted,
}

/// Index of pair (j, l), j < l, in lexicographic order.
pub fn pair_index(n: usize, j: usize, l: usize) -> usize {
    let (j, l) = if j < l { (j, l) } else { (l, j) };
    debug_assert!(l < n && j != l);
    j * n - j * (j + 1) / 2 + (l - j - 1)
}

pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for j in 0..n {
        for l in j + 1..n {
            v.push((j, l));
        }
    }
    v
}

pub fn build_two_excitation_pair_system(net: &NetworkSpec) -> Result<DelaySystem> {
    build_two_excitation_pair_system_with(net, PairKernel::Symmetric)
}

pub fn build_two_excitation_pair_system_with(net: &NetworkSpec, kernel: PairKernel) -> Result<DelaySystem> {
    let wa = net.omega_a()?;
    let n = net.len();
    check(n >= 2, "atoms", "pair amplitudes need at least two atoms")?;
    let pairs = pair_list(n);
    let labels = pairs.iter().map(|(j, l)| format!("c{}{}", j + 1, l + 1)).collect();
    let dim = pairs.len();
    let mut sys = DelaySystem::new(DMatrix::zeros(dim, dim), labels);
    let atoms = &net.atoms;
    for (row, &(j, l)) in pairs.iter().enumerate() {
        sys.instantaneous[(row, row)] += decay_diag(&atoms[j]) + decay_diag(&atoms[l]);
        for a in [j, l] {
            let ch = mirror_channel(atoms, a, a, wa);
            sys.add(ch.delay, row, row, ch.coef);
        }
        match kernel {
            PairKernel::Symmetric => {
                // excitation on `moving` hops to `dst`; `stay` keeps its excitation
                for (dst, stay) in [(l, j), (j, l)] {
                    for src in (0..n).filter(|&b| b != j && b != l) {
                        let col = pair_index(n, stay, src);
                        for ch in [direct_channel(atoms, dst, src, wa), mirror_channel(atoms, dst, src, wa)] {
                            sys.add(ch.delay, row, col, ch.coef);
                        }
                    }
                }
            }
            PairKernel::AsPrinted => {
                for lp in (j + 1)..l {
                    let ch = direct_channel(atoms, l, lp, wa);
                    sys.add(ch.delay, row, pair_index(n, j, lp), ch.coef);
                }
                for lp in (l + 1)..n {
                    let ch = direct_channel(atoms, l, lp, wa);
                    sys.add(ch.delay, row, pair_index(n, j, lp), ch.coef);
                }
                for jp in 0..j {
                    let ch = direct_channel(atoms, j, jp, wa);
                    sys.add(ch.delay, row, pair_index(n, jp, l), ch.coef);
                }
                for jp in (j + 1)..l {
                    let ch = direct_channel(atoms, j, jp, wa);
                    sys.add(ch.delay, row, pair_index(n, jp, l), ch.coef);
                }
                for lp in (0..n).filter(|&b| b != l) {
                    let ch = mirror_channel(atoms, l, lp, wa);
                    sys.add(ch.delay, row, row, ch.coef);
                }
                for jp in (0..n).filter(|&b| b != j) {
                    let ch = mirror_channel(atoms, j, jp, wa);
                    sys.add(ch.delay, row, row, ch.coef);
                }
            }
        }
    }
    Ok(sys.finish())
}

pub fn effective_rates(atom: &AtomSpec, waveguide_loss: f64, delta: f64) -> Result<DerivedRates> {
    atom.validate()?;
    check(waveguide_loss.is_finite() && waveguide_loss >= 0.0, "waveguide_loss", "must be >= 0")?;
    let theta = 2.0 * atom.omega_a * atom.position;
    let (gr, gl) = (atom.gamma_right, atom.gamma_left);
    // written as a sum of two non-negative parts so round-off cannot go below 0
    let y_gamma = 0.5 * (gr - gl).powi(2) + gr * gl * (1.0 - theta.cos());
    Ok(DerivedRates {
        y_gamma,
        y: delta + gl * gr * theta.sin(),
        gamma_eff: y_gamma + waveguide_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn coupling_nonchiral_node_and_antinode() {
        let z = 1.3;
        let a = AtomSpec::nonchiral(z, 0.7, 50.0);
        let g = coupling_coefficient(&a, PI / z, 0.0).unwrap();
        assert!(g.norm() < 1e-12);

        let a = AtomSpec::nonchiral(PI / 100.0, 1.0, 50.0);
        for t in [0.0, 0.3, 7.0] {
            let g = coupling_coefficient(&a, 50.0, t).unwrap();
            assert_abs_diff_eq!(g.norm(), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn coupling_chiral_by_hand() {
        // kz = π/3, k = ωa, t = 0:  i·0.3·e^{-iπ/3} − i·0.1·e^{iπ/3}
        let (cs, sn) = (0.5, 3f64.sqrt() / 2.0);
        let want = c(0.0, 0.3) * c(cs, -sn) - c(0.0, 0.1) * c(cs, sn);
        let a = AtomSpec::new(PI / 150.0, 0.3, 0.1, 50.0);
        let got = coupling_coefficient(&a, 50.0, 0.0).unwrap();
        assert_abs_diff_eq!((got - want).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(got.re, 0.4 * sn, epsilon = 1e-14);
        assert_abs_diff_eq!(got.im, 0.2 * cs, epsilon = 1e-14);
    }

    #[test]
    fn coupling_rejects_negative_k() {
        let a = AtomSpec::nonchiral(1.0, 1.0, 1.0);
        assert!(coupling_coefficient(&a, -1.0, 0.0).is_err());
        assert!(coupling_coefficient(&a, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn single_atom_trapped_kernel() {
        let wa = 50.0;
        let z = 3.0 * PI / wa;
        let net = NetworkSpec::new(vec![AtomSpec::nonchiral(z, 0.4, wa)], 0.0).unwrap();
        let sys = build_one_excitation_system(&net).unwrap();
        assert_abs_diff_eq!(sys.instantaneous[(0, 0)].re, -0.16, epsilon = 1e-15);
        assert_eq!(sys.delayed_terms.len(), 1);
        assert_abs_diff_eq!(sys.delayed_terms[0].delay, 2.0 * z, epsilon = 1e-15);
        let b = sys.delayed_terms[0].matrix[(0, 0)];
        assert_abs_diff_eq!(b.re, 0.16, epsilon = 1e-12);
        assert_abs_diff_eq!(b.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn two_atoms_coincident_single_delay() {
        let wa = 50.0;
        let z = 40.0 * PI / wa;
        let atoms = vec![AtomSpec::new(z, 0.3, 0.2, wa), AtomSpec::new(z, 0.5, 0.1, wa)];
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let (a0, b0, tau) = build_single_delay_matrices(&net).unwrap();
        assert_abs_diff_eq!(tau, 2.0 * z);
        // hand values
        assert_abs_diff_eq!(a0[(0, 0)].re, -(0.09 + 0.04) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a0[(1, 1)].re, -(0.25 + 0.01) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a0[(0, 1)].re, -0.2 * 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(a0[(1, 0)].re, -0.3 * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b0[(0, 1)].re, 0.3 * 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(b0[(1, 0)].re, 0.5 * 0.2, epsilon = 1e-15);

        let sys = build_one_excitation_system(&net).unwrap();
        assert_eq!(sys.delayed_terms.len(), 1);
        let phase = C64::from_polar(1.0, wa * tau);
        assert!((&sys.instantaneous - &a0).norm() < 1e-15);
        assert!((&sys.delayed_terms[0].matrix - b0 * phase).norm() < 1e-14);
    }

    #[test]
    fn theorem_one_shape_has_a0_equal_minus_b0() {
        let wa = 50.0;
        let z = 40.0 * PI / wa;
        let g = 0.2;
        let mut atoms = vec![AtomSpec::nonchiral(z, 3.0 * g, wa)];
        atoms.extend((0..3).map(|_| AtomSpec::nonchiral(z, g, wa)));
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let (a0, b0, _) = build_single_delay_matrices(&net).unwrap();
        assert!((a0 + &b0).norm() < 1e-15);
        let sv = b0.map(|x| x.re).singular_values();
        assert!(sv[0] > 0.1 && sv.iter().skip(1).all(|s| *s < 1e-12));
    }

    #[test]
    fn distinct_positions_give_three_delay_families() {
        let wa = 50.0;
        let (z1, z2) = (1.0, 1.7);
        let atoms = vec![AtomSpec::new(z1, 0.3, 0.2, wa), AtomSpec::new(z2, 0.5, 0.1, wa)];
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let sys = build_one_excitation_system(&net).unwrap();
        let delays: Vec<f64> = sys.delayed_terms.iter().map(|t| t.delay).collect();
        let want = [z2 - z1, 2.0 * z1, z1 + z2, 2.0 * z2];
        assert_eq!(delays.len(), 4);
        for (d, w) in delays.iter().zip(want) {
            assert_abs_diff_eq!(*d, w, epsilon = 1e-14);
        }
        let e = |d: f64| C64::from_polar(1.0, wa * d);
        let right = &sys.delayed_terms[0].matrix;
        assert!((right[(1, 0)] + 0.5 * 0.3 * e(z2 - z1)).norm() < 1e-14);
        assert!((right[(0, 1)] + 0.2 * 0.1 * e(z2 - z1)).norm() < 1e-14);
        let cross = &sys.delayed_terms[2].matrix;
        assert!((cross[(0, 1)] - 0.3 * 0.1 * e(z1 + z2)).norm() < 1e-14);
        assert!((cross[(1, 0)] - 0.5 * 0.2 * e(z1 + z2)).norm() < 1e-14);
    }

    #[test]
    fn zero_couplings_give_zero_system() {
        let net = NetworkSpec::new(vec![AtomSpec::new(1.0, 0.0, 0.0, 5.0), AtomSpec::new(2.0, 0.0, 0.0, 5.0)], 0.0)
            .unwrap();
        let sys = build_one_excitation_system(&net).unwrap();
        assert!(sys.instantaneous.iter().all(|x| x.norm() == 0.0));
        assert!(sys.delayed_terms.is_empty());
        let pair = build_two_excitation_pair_system(&net).unwrap();
        assert!(pair.instantaneous.iter().all(|x| x.norm() == 0.0));
        assert!(pair.delayed_terms.is_empty());
    }

    #[test]
    fn rejects_bad_networks() {
        assert!(NetworkSpec::new(vec![], 0.0).is_err());
        let a = AtomSpec::nonchiral(2.0, 0.1, 1.0);
        let b = AtomSpec::nonchiral(1.0, 0.1, 1.0);
        assert!(matches!(NetworkSpec::new(vec![a, b], 0.0), Err(Error::UnsortedPositions { .. })));
        let c = AtomSpec::nonchiral(3.0, 0.1, 2.0);
        let net = NetworkSpec::new(vec![a, c], 0.0).unwrap();
        assert!(matches!(build_one_excitation_system(&net), Err(Error::UnequalFrequencies(..))));
        let net = NetworkSpec::new(vec![b, a], 0.0).unwrap();
        assert!(matches!(build_single_delay_matrices(&net), Err(Error::PositionsNotEqual)));
        assert!(NetworkSpec::new(vec![AtomSpec::nonchiral(0.0, 0.1, 1.0)], 0.0).is_err());
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let n = 4;
        for (i, (j, l)) in pair_list(n).into_iter().enumerate() {
            assert_eq!(pair_index(n, j, l), i);
            assert_eq!(pair_index(n, l, j), i);
        }
    }

    #[test]
    fn pair_system_two_atoms_trapped_has_constant_solution() {
        // ωa z = nπ: all phases are 1 and the delayed weights cancel the decay
        let wa = 50.0;
        let atoms = vec![AtomSpec::nonchiral(PI / wa, 0.3, wa), AtomSpec::nonchiral(2.0 * PI / wa, 0.5, wa)];
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let sys = build_two_excitation_pair_system(&net).unwrap();
        let mut total = sys.instantaneous[(0, 0)];
        for t in &sys.delayed_terms {
            total += t.matrix[(0, 0)];
        }
        assert!(total.norm() < 1e-12);
    }

    #[test]
    fn pair_system_as_printed_keeps_extra_mirror_terms() {
        let wa = 50.0;
        let atoms = vec![AtomSpec::nonchiral(PI / wa, 0.3, wa), AtomSpec::nonchiral(2.0 * PI / wa, 0.5, wa)];
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let sys = build_two_excitation_pair_system_with(&net, PairKernel::AsPrinted).unwrap();
        let mut total = sys.instantaneous[(0, 0)];
        for t in &sys.delayed_terms {
            total += t.matrix[(0, 0)];
        }
        // the two cross-mirror sums feed c_12 itself with phase e^{iωa(z1+z2)} = −1
        assert_abs_diff_eq!(total.re, -2.0 * 0.3 * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn large_delay_pair_generator_by_hand() {
        // three coincident atoms; only the instantaneous part matters before τ
        let wa = 50.0;
        let z = 40.0 * PI / wa;
        let g = [0.2, 1.0, 1.0];
        let atoms: Vec<_> = g.iter().map(|&x| AtomSpec::nonchiral(z, x, wa)).collect();
        let net = NetworkSpec::new(atoms, 0.0).unwrap();
        let sys = build_two_excitation_pair_system(&net).unwrap();
        let a = &sys.instantaneous;
        // rows/cols: (12), (13), (23)
        let want = [
            [-(g[0] * g[0] + g[1] * g[1]), -g[1] * g[2], -g[0] * g[2]],
            [-g[2] * g[1], -(g[0] * g[0] + g[2] * g[2]), -g[0] * g[1]],
            [-g[2] * g[0], -g[1] * g[0], -(g[1] * g[1] + g[2] * g[2])],
        ];
        for r in 0..3 {
            for cidx in 0..3 {
                assert_abs_diff_eq!(a[(r, cidx)].re, want[r][cidx], epsilon = 1e-14);
                assert_abs_diff_eq!(a[(r, cidx)].im, 0.0, epsilon = 1e-14);
            }
        }
        assert!(sys.delayed_terms.iter().all(|t| (t.delay - 2.0 * z).abs() < 1e-12));
    }

    #[test]
    fn effective_rates_examples() {
        let wa = 50.0;
        let r = effective_rates(&AtomSpec::nonchiral(PI / wa, 0.3, wa), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.y_gamma, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.gamma_eff, 0.0, epsilon = 1e-15);
        let r = effective_rates(&AtomSpec::nonchiral(PI / (2.0 * wa), 0.3, wa), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(r.y_gamma, 2.0 * 0.09, epsilon = 1e-15);
        let r = effective_rates(&AtomSpec::new(PI / wa, 0.4, 0.2, wa), 0.01, 0.0).unwrap();
        assert_abs_diff_eq!(r.y_gamma, 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(r.gamma_eff, 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(r.y, 0.0, epsilon = 1e-14);
    }
}
