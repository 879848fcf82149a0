//! Single driven atom with the waveguide traced out: Lindblad flow, Bloch
//! equations and the steady states with and without measurement feedback.
//!
//! Basis order is (e, g), so ⟨σ⁺⟩ = ρ_ge, ⟨σ⁻⟩ = ρ_eg, ⟨σᶻ⟩ = ρ_ee − ρ_gg.
//! Environmental decay γ₀ only enters the Bloch flow, through Y' = Y + iγ₀.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{check, Error, Result};
use crate::laplace::richardson_to_zero;
use crate::network::{effective_rates, AtomSpec};

const I: C64 = C64::new(0.0, 1.0);

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub sp: C64,
    pub sm: C64,
    pub sz: C64,
}

impl BlochVector {
    pub fn ground() -> Self {
        Self::from_z(-1.0)
    }

    pub fn excited() -> Self {
        Self::from_z(1.0)
    }

    /// No coherence, ⟨σᶻ⟩ = z0.
    pub fn from_z(z0: f64) -> Self {
        BlochVector { sp: C64::new(0.0, 0.0), sm: C64::new(0.0, 0.0), sz: re(z0) }
    }

    pub fn x(&self) -> C64 {
        self.sp + self.sm
    }

    pub fn as_vector(&self) -> Vector3<C64> {
        Vector3::new(self.sp, self.sm, self.sz)
    }

    pub fn from_vector(v: &Vector3<C64>) -> Self {
        BlochVector { sp: v[0], sm: v[1], sz: v[2] }
    }

    pub fn norm(&self) -> f64 {
        (self.sp.norm_sqr() + self.sm.norm_sqr() + self.sz.norm_sqr()).sqrt()
    }

    /// sz² + 4|sp|², at most 1 inside the Bloch ball.
    pub fn purity_measure(&self) -> f64 {
        self.sz.re * self.sz.re + 4.0 * self.sp.norm_sqr()
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        (self.sm - self.sp.conj()).norm() <= tol
            && self.sz.re.abs() <= 1.0 + tol
            && self.sz.im.abs() <= tol
            && self.purity_measure() <= 1.0 + tol
    }

    pub fn from_density(rho: &Matrix2<C64>) -> Self {
        BlochVector { sp: rho[(1, 0)], sm: rho[(0, 1)], sz: rho[(0, 0)] - rho[(1, 1)] }
    }

    /// Trace-one density matrix with these expectations.
    pub fn to_density(&self) -> Matrix2<C64> {
        let half = C64::new(0.5, 0.0);
        Matrix2::new(half * (C64::new(1.0, 0.0) + self.sz), self.sm, self.sp, half * (C64::new(1.0, 0.0) - self.sz))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub rabi: f64,
    #[serde(rename = "detuning_Y")]
    pub detuning_y: f64,
    pub gamma_eff: f64,
    #[serde(default)]
    pub gamma_env: f64,
}

impl DriveParams {
    pub fn new(rabi: f64, detuning_y: f64, gamma_eff: f64) -> Self {
        DriveParams { rabi, detuning_y, gamma_eff, gamma_env: 0.0 }
    }

    /// Y and Γ_eff from the atom's couplings, mirror distance and loss.
    pub fn from_atom(atom: &AtomSpec, waveguide_loss: f64, delta: f64, rabi: f64) -> Result<Self> {
        let r = effective_rates(atom, waveguide_loss, delta)?;
        Ok(DriveParams { rabi, detuning_y: r.y, gamma_eff: r.gamma_eff, gamma_env: atom.gamma_env })
    }

    pub fn validate(&self) -> Result<()> {
        check(self.rabi.is_finite() && self.rabi >= 0.0, "rabi", "must be finite and >= 0")?;
        check(self.detuning_y.is_finite(), "detuning_Y", "must be finite")?;
        check(self.gamma_eff.is_finite() && self.gamma_eff >= 0.0, "gamma_eff", "must be finite and >= 0")?;
        check(self.gamma_env.is_finite() && self.gamma_env >= 0.0, "gamma_env", "must be finite and >= 0")
    }

    /// Y' = Y + iγ₀.
    pub fn y_prime(&self) -> C64 {
        C64::new(self.detuning_y, self.gamma_env)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackParams {
    pub g_f: f64,
    pub eta: f64,
    pub meas_strength: f64,
    pub gamma_1r: f64,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self::off()
    }
}

impl FeedbackParams {
    pub fn new(g_f: f64, gamma_1r: f64) -> Self {
        FeedbackParams { g_f, eta: 1.0, meas_strength: 1.0, gamma_1r }
    }

    pub fn off() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.g_f.is_finite() && self.g_f >= 0.0, "g_f", "must be finite and >= 0")?;
        check(self.gamma_1r.is_finite() && self.gamma_1r >= 0.0, "gamma_1R", "must be finite and >= 0")?;
        check(self.eta > 0.0 && self.eta <= 1.0, "eta", "must lie in (0, 1]")?;
        check(self.meas_strength > 0.0 && self.meas_strength <= 1.0, "meas_strength", "must lie in (0, 1]")?;
        // only the η = γ = 1 system is modelled
        check(self.eta == 1.0 && self.meas_strength == 1.0, "eta", "only eta = meas_strength = 1 is supported")
    }
}

fn sigma_minus() -> Matrix2<C64> {
    // |g⟩⟨e| in (e, g) order
    Matrix2::new(re(0.0), re(0.0), re(1.0), re(0.0))
}

fn hamiltonian(p: &DriveParams) -> Matrix2<C64> {
    let sm = sigma_minus();
    let sp = sm.adjoint();
    let n = sp * sm;
    n * re(-p.detuning_y) + (sp + sm) * re(0.5 * p.rabi)
}

fn lindblad_rhs(rho: &Matrix2<C64>, h: &Matrix2<C64>, gamma: f64) -> Matrix2<C64> {
    let sm = sigma_minus();
    let sp = sm.adjoint();
    let n = sp * sm;
    let comm = h * rho - rho * h;
    -comm * I + (sm * rho * sp - (n * rho + rho * n) * re(0.5)) * re(gamma)
}

pub fn check_density(rho: &Matrix2<C64>, tol: f64) -> Result<()> {
    let herm = (rho - rho.adjoint()).norm();
    let tr = rho.trace();
    if herm > tol || (tr - re(1.0)).norm() > tol {
        return Err(Error::NotDensity(format!("hermiticity {herm:.2e}, trace {tr}")));
    }
    // 2×2 Hermitian: eigenvalues (tr ± √(tr² − 4 det))/2
    let det = (rho[(0, 0)] * rho[(1, 1)] - rho[(0, 1)] * rho[(1, 0)]).re;
    let disc = (tr.re * tr.re - 4.0 * det).max(0.0).sqrt();
    let lo = 0.5 * (tr.re - disc);
    if lo < -tol {
        return Err(Error::NotDensity(format!("eigenvalue {lo:.3e}")));
    }
    Ok(())
}

/// One RK4 step of ρ̇ = −i[H_eff, ρ] + Γ_eff D[σ⁻]ρ.
pub fn lindblad_step(rho: &Matrix2<C64>, params: &DriveParams, dt: f64) -> Result<Matrix2<C64>> {
    params.validate()?;
    check(params.gamma_env == 0.0, "gamma_env", "environmental decay is handled by the Bloch flow only")?;
    check(dt > 0.0 && dt.is_finite(), "dt", "must be positive")?;
    check_density(rho, 1e-9)?;
    let h = hamiltonian(params);
    let g = params.gamma_eff;
    let k1 = lindblad_rhs(rho, &h, g);
    let k2 = lindblad_rhs(&(rho + k1 * re(0.5 * dt)), &h, g);
    let k3 = lindblad_rhs(&(rho + k2 * re(0.5 * dt)), &h, g);
    let k4 = lindblad_rhs(&(rho + k3 * re(dt)), &h, g);
    Ok(rho + (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(dt / 6.0))
}

/// Lindblad trajectory sampled at every step.
pub fn integrate_lindblad(rho0: &Matrix2<C64>, params: &DriveParams, t_end: f64, dt: f64) -> Result<Vec<Matrix2<C64>>> {
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(*rho0);
    let mut rho = *rho0;
    for _ in 0..steps {
        rho = lindblad_step(&rho, params, h)?;
        out.push(rho);
    }
    Ok(out)
}

/// (A, B) with d/dt [⟨σ⁺⟩, ⟨σ⁻⟩, ⟨σᶻ⟩] = A X − B.
pub fn bloch_drift(p: &DriveParams) -> (Matrix3<C64>, Vector3<C64>) {
    let y = p.y_prime();
    let (g, w) = (p.gamma_eff, p.rabi);
    let a = Matrix3::new(
        -I * y - re(0.5 * g),
        re(0.0),
        -I * (0.5 * w),
        re(0.0),
        I * y - re(0.5 * g),
        I * (0.5 * w),
        -I * w,
        I * w,
        re(-g),
    );
    (a, Vector3::new(re(0.0), re(0.0), re(g)))
}

/// Linear drift of the feedback equations with the noise set to zero.
///
/// Besides the printed matrix this keeps ±i g_f γ_1R on the σ⁺/σ⁻ couplings;
/// they come from the i g_f γ_1R ⟨X⟩ terms of the conditional equations and
/// are needed for the drift to match the stochastic step at dW = 0.
pub fn feedback_drift(drive: &DriveParams, fb: &FeedbackParams) -> Matrix3<C64> {
    let mut a = feedback_drift_as_printed(drive, fb);
    let k = fb.g_f * fb.gamma_1r;
    a[(0, 1)] += I * k;
    a[(1, 0)] -= I * k;
    a
}

/// The drift matrix exactly as printed (no ±i g_f γ_1R couplings).
pub fn feedback_drift_as_printed(drive: &DriveParams, fb: &FeedbackParams) -> Matrix3<C64> {
    let g2 = fb.g_f * fb.g_f;
    let shifted = C64::new(drive.detuning_y - fb.g_f * fb.gamma_1r, drive.gamma_env);
    let (g, w) = (drive.gamma_eff, drive.rabi);
    Matrix3::new(
        -I * shifted - re(0.5 * g + g2),
        re(g2),
        -I * (0.5 * w),
        re(g2),
        I * shifted - re(0.5 * g + g2),
        I * (0.5 * w),
        -I * w,
        I * w,
        re(-g - 2.0 * g2),
    )
}

#[derive(Debug, Clone)]
pub struct BlochTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<BlochVector>,
}

impl BlochTrajectory {
    pub fn sigma_z(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.sz.re).collect()
    }
}

/// RK4 for Ẋ = A X − B.
pub fn integrate_linear(
    a: &Matrix3<C64>,
    b: &Vector3<C64>,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
) -> Result<BlochTrajectory> {
    check(dt > 0.0 && t_end >= 0.0, "dt", "dt must be positive and t_end non-negative")?;
    let steps = (t_end / dt).round() as usize;
    let h = if steps == 0 { dt } else { t_end / steps as f64 };
    let f = |x: &Vector3<C64>| a * x - b;
    let mut x = init.as_vector();
    let mut out = BlochTrajectory { times: vec![0.0], states: vec![*init] };
    for i in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(x + k1 * re(0.5 * h)));
        let k3 = f(&(x + k2 * re(0.5 * h)));
        let k4 = f(&(x + k3 * re(h)));
        x += (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(h / 6.0);
        if !x.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite { t: (i + 1) as f64 * h });
        }
        out.times.push((i + 1) as f64 * h);
        out.states.push(BlochVector::from_vector(&x));
    }
    Ok(out)
}

pub fn integrate_bloch(drive: &DriveParams, init: &BlochVector, t_end: f64, dt: f64) -> Result<BlochTrajectory> {
    drive.validate()?;
    let (a, b) = bloch_drift(drive);
    integrate_linear(&a, &b, init, t_end, dt)
}

/// Noise-free feedback flow.
pub fn integrate_feedback_mean(
    drive: &DriveParams,
    fb: &FeedbackParams,
    init: &BlochVector,
    t_end: f64,
    dt: f64,
) -> Result<BlochTrajectory> {
    drive.validate()?;
    fb.validate()?;
    let (_, b) = bloch_drift(drive);
    integrate_linear(&feedback_drift(drive, fb), &b, init, t_end, dt)
}

/// −(Γ² + 4Y'²)/(Γ² + 4Y'² + 2Ω²), the s → 0 limit without feedback.
pub fn steady_sigma_z(p: &DriveParams) -> Result<f64> {
    p.validate()?;
    if p.gamma_eff == 0.0 {
        return Err(Error::Trapped);
    }
    let y = p.y_prime();
    let num = re(p.gamma_eff * p.gamma_eff) + y * y * 4.0;
    let den = num + re(2.0 * p.rabi * p.rabi);
    if den.norm() < 1e-14 * (1.0 + num.norm()) {
        return Err(Error::VanishingDenominator);
    }
    let z = -num / den;
    if z.im.abs() > 1e-12 * z.re.abs().max(1e-300) {
        return Err(Error::Indeterminate(format!("steady value {z} is not real")));
    }
    Ok(z.re)
}

/// Y = 0 with environmental decay: (4γ₀² − Γ'²)/(2Ω² − 4γ₀² + Γ'²).
pub fn steady_sigma_z_decay(p: &DriveParams) -> Result<f64> {
    p.validate()?;
    check(p.detuning_y == 0.0, "detuning_Y", "the decay formula needs Y = 0")?;
    let (g0, g, w) = (p.gamma_env, p.gamma_eff, p.rabi);
    let num = 4.0 * g0 * g0 - g * g;
    let den = 2.0 * w * w - 4.0 * g0 * g0 + g * g;
    if den.abs() < 1e-12 * (1.0 + num.abs()) {
        return Err(Error::VanishingDenominator);
    }
    Ok(num / den)
}

/// Closed-form s → 0 limit of s Z(s) under feedback, from the drift above:
/// z∞ = −Γ / [(Γ + 2g²) + Ω²(Γ/2)/D₀],
/// D₀ = (Γ/2 + g²)² − u² − g⁴ − g²γ_1R², u = i(Y − gγ_1R) − γ₀.
pub fn steady_sigma_z_feedback_closed(drive: &DriveParams, fb: &FeedbackParams) -> Result<f64> {
    drive.validate()?;
    fb.validate()?;
    if drive.gamma_eff == 0.0 {
        return Err(Error::Trapped);
    }
    let (g, w, gf) = (drive.gamma_eff, drive.rabi, fb.g_f);
    let g2 = gf * gf;
    let u = C64::new(-drive.gamma_env, drive.detuning_y - gf * fb.gamma_1r);
    let c = 0.5 * g + g2;
    let d0 = re(c * c - g2 * g2 - g2 * fb.gamma_1r * fb.gamma_1r) - u * u;
    let den = if w == 0.0 {
        re(g + 2.0 * g2)
    } else {
        if d0.norm() < 1e-300 {
            return Err(Error::VanishingDenominator);
        }
        re(g + 2.0 * g2) + re(w * w * 0.5 * g) / d0
    };
    if den.norm() < 1e-300 {
        return Err(Error::VanishingDenominator);
    }
    let z = re(-g) / den;
    if z.im.abs() > 1e-9 * z.re.abs().max(1e-300) {
        return Err(Error::Indeterminate(format!("steady value {z} is not real")));
    }
    Ok(z.re)
}

/// lim s→0 s e₃ᵀ(sI − A)⁻¹(X₀ − B/s), extrapolated on a decade ladder.
pub fn final_value_sigma_z(a: &Matrix3<C64>, b: &Vector3<C64>, init: &BlochVector) -> Result<f64> {
    let x0 = init.as_vector();
    let g = |s: f64| -> Result<f64> {
        let m = Matrix3::identity() * re(s) - a;
        let rhs = x0 * re(s) - b;
        let sol = m.lu().solve(&rhs).ok_or_else(|| Error::Singular(format!("{s}")))?;
        Ok(sol[2].re)
    };
    Ok(richardson_to_zero(g)?.0)
}

/// Steady ⟨σᶻ⟩ under feedback; the closed form must agree with the
/// extrapolated final value to 1e-8.
pub fn steady_sigma_z_feedback(drive: &DriveParams, fb: &FeedbackParams) -> Result<f64> {
    let closed = steady_sigma_z_feedback_closed(drive, fb)?;
    let (_, b) = bloch_drift(drive);
    let numeric = final_value_sigma_z(&feedback_drift(drive, fb), &b, &BlochVector::ground())?;
    if (closed - numeric).abs() > 1e-8 * closed.abs().max(1.0) {
        return Err(Error::LimitMismatch { closed, numeric });
    }
    Ok(closed)
}

/// The printed steady value, with its extra 2g²Ω² in the numerator.
pub fn steady_sigma_z_feedback_as_printed(drive: &DriveParams, fb: &FeedbackParams) -> Result<f64> {
    if drive.gamma_eff == 0.0 {
        return Err(Error::Trapped);
    }
    let (g, w, gf) = (drive.gamma_eff, drive.rabi, fb.g_f);
    let g2 = gf * gf;
    let u = C64::new(-drive.gamma_env, drive.detuning_y - gf * fb.gamma_1r);
    let inner = re(0.5 * g * (2.0 * g2 + 0.5 * g)) - u * u;
    let z = re(-g) / (re(g + 2.0 * g2) + re(w * w * (2.0 * g2 + 0.5 * g)) / inner);
    Ok(z.re)
}

/// Large-feedback approximation: −Γ/[(Γ + 2g²) + 2Ω²/(Γ + 4g²γ²/(4g² + Γ))].
pub fn steady_sigma_z_feedback_approx(drive: &DriveParams, fb: &FeedbackParams) -> f64 {
    let (g, w) = (drive.gamma_eff, drive.rabi);
    let g2 = fb.g_f * fb.g_f;
    let gam2 = fb.gamma_1r * fb.gamma_1r;
    -g / ((g + 2.0 * g2) + 2.0 * w * w / (g + 4.0 * g2 * gam2 / (4.0 * g2 + g)))
}
