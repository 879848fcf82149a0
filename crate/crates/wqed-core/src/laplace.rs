//! Fixed Talbot inversion and s → 0 limits by Richardson extrapolation.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const TALBOT_NODES: usize = 32;

/// f(t) from F(s) on the fixed Talbot contour s(θ) = rθ(cot θ + i), r = 2M/(5t).
///
/// The full contour θ ∈ (−π, π) is used so complex-valued f is allowed.
pub fn talbot<F>(f: F, t: f64, nodes: usize) -> C64
where
    F: Fn(C64) -> C64,
{
    assert!(t > 0.0, "Talbot inversion needs t > 0");
    let m = nodes as f64;
    let r = 2.0 * m / (5.0 * t);
    let mut acc = f(C64::new(r, 0.0)) * (r * t).exp();
    for k in 1..nodes {
        let th = k as f64 * std::f64::consts::PI / m;
        let cot = th.cos() / th.sin();
        let sigma = th + (th * cot - 1.0) * cot;
        for sgn in [1.0, -1.0] {
            let s = C64::new(r * th * cot, sgn * r * th);
            let w = C64::new(1.0, sgn * sigma);
            acc += (s * t).exp() * f(s) * w;
        }
    }
    acc * (r / (2.0 * m))
}

/// lim_{s→0+} g(s) from a decade ladder s = 10^-2 … 10^-8, assuming g is
/// smooth in s near 0. Returns the estimate and the ladder.
pub fn richardson_to_zero<G>(g: G) -> Result<(f64, Vec<(f64, f64)>)>
where
    G: Fn(f64) -> Result<f64>,
{
    let ladder: Vec<f64> = (2..=8).map(|e| 10f64.powi(-e)).collect();
    let vals = ladder.iter().map(|&s| g(s)).collect::<Result<Vec<f64>>>()?;
    let pairs: Vec<(f64, f64)> = ladder.iter().copied().zip(vals.iter().copied()).collect();
    // one Richardson sweep per order, ratio 10 between rungs
    let mut table = vals.clone();
    let mut best = *table.last().unwrap();
    let mut best_gap = f64::INFINITY;
    for order in 1..=3 {
        let f = 10f64.powi(order);
        let next: Vec<f64> = table.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        if next.len() < 2 {
            break;
        }
        let gap = (next[next.len() - 1] - next[next.len() - 2]).abs();
        if gap < best_gap {
            best_gap = gap;
            best = *next.last().unwrap();
        }
        table = next;
    }
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    if !best.is_finite() || best_gap > 1e-6 * scale.max(1.0) {
        return Err(Error::Indeterminate(format!("ladder {pairs:?}")));
    }
    Ok((best, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn talbot_exponential_and_oscillation() {
        for t in [0.1, 1.0, 5.0] {
            let v = talbot(|s| 1.0 / (s + 1.0), t, TALBOT_NODES);
            assert_abs_diff_eq!(v.re, (-t).exp(), epsilon = 1e-10);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-10);
            // complex-valued e^{iωt}
            let v = talbot(|s| 1.0 / (s - C64::new(0.0, 2.0)), t, TALBOT_NODES);
            assert_abs_diff_eq!(v.re, (2.0 * t).cos(), epsilon = 1e-8);
            assert_abs_diff_eq!(v.im, (2.0 * t).sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn richardson_linear_and_constant() {
        let (v, _) = richardson_to_zero(|s| Ok(3.0 + 2.0 * s - s * s)).unwrap();
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-12);
        let (v, _) = richardson_to_zero(|s| Ok(s / (s + 0.48))).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        assert!(richardson_to_zero(|s| Ok(1.0 / s)).is_err());
    }
}
