//! Random-graph bookkeeping: vertices are excited atoms, edges are excited pairs.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::pair_list;
use crate::one_excitation::OneExcitationRun;
use crate::two_excitation::{PairRun, SinglePhotonField};

/// Default absolute tolerance on populations for "consensus reached".
pub const CONSENSUS_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    #[serde(rename = "t")]
    pub time: f64,
    #[serde(rename = "vertices")]
    pub vertex_probs: Vec<f64>,
    /// (j, l, p_jl) with 1-based atoms; empty with one excitation.
    #[serde(rename = "edges")]
    pub edge_probs: Vec<(usize, usize, f64)>,
    /// 1 − Σp_j − Σp_jl, clipped at 0.
    pub complement: f64,
}

impl GraphSnapshot {
    fn new(time: f64, vertex_probs: Vec<f64>, edge_probs: Vec<(usize, usize, f64)>) -> Self {
        let total: f64 = vertex_probs.iter().sum::<f64>() + edge_probs.iter().map(|e| e.2).sum::<f64>();
        GraphSnapshot { time, vertex_probs, edge_probs, complement: (1.0 - total).max(0.0) }
    }

    /// Probabilities in range, complement consistent.
    pub fn is_valid(&self) -> bool {
        let ok = |p: f64| (-1e-9..=1.0 + 1e-9).contains(&p);
        let total: f64 = self.vertex_probs.iter().sum::<f64>() + self.edge_probs.iter().map(|e| e.2).sum::<f64>();
        self.vertex_probs.iter().all(|&p| ok(p)) && self.edge_probs.iter().all(|e| ok(e.2)) && total <= 1.0 + 1e-9
    }
}

/// p_j = |c_j(t)|².
pub fn snapshot_one_excitation(run: &OneExcitationRun, t: f64) -> Result<GraphSnapshot> {
    let c = run.trajectory.interpolate(t)?;
    Ok(GraphSnapshot::new(t, c.iter().map(|x| x.norm_sqr()).collect(), Vec::new()))
}

/// p_jl = |c_jl(t)|², p_j = ∫|c_j•(t,k)|² dk/2π; t must be a stored field time.
pub fn snapshot_two_excitation(pair: &PairRun, field: &SinglePhotonField, t: f64) -> Result<GraphSnapshot> {
    let h = if field.times.len() > 1 { field.times[1] - field.times[0] } else { 1.0 };
    let i = field
        .times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-9 * h.max(1.0))
        .ok_or(Error::OutOfRange { t, start: field.times[0], end: *field.times.last().unwrap() })?;
    let n = pair.n_atoms;
    if field.vertex_probability[i].len() != n {
        return Err(Error::Dimension { expected: n, got: field.vertex_probability[i].len() });
    }
    let c = pair.trajectory.interpolate(t)?;
    let edges = pair_list(n).into_iter().zip(&c).map(|((j, l), a)| (j + 1, l + 1, a.norm_sqr())).collect();
    Ok(GraphSnapshot::new(t, field.vertex_probability[i].clone(), edges))
}

/// Largest pairwise gap, max − min.
pub fn consensus_metric(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// max_{j,p} |c_j − c_p|.
pub fn amplitude_consensus_metric(amps: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in amps.iter().enumerate() {
        for b in &amps[i + 1..] {
            worst = worst.max((a - b).norm());
        }
    }
    worst
}

pub fn reached_consensus(values: &[f64], tol: f64) -> bool {
    consensus_metric(values) <= tol
}
