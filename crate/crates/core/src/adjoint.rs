//! Backward solver for the advance adjoint system of delayed dynamics.
//!
//! Each arc `p_k` vanishes on `[(T - h_k) v 0, T]` for `k >= 1` (enforced
//! exactly, never integrated) and obeys `-dp_k/ds = q_k(s + h_k)` below the
//! cutoff, where `q_k(u) = p(u) . df/dx_k[u] - lambda dl0/dx_k[u]` evaluated
//! along the reference process and `q_k(u) = 0` beyond the horizon. The sum
//! `p = sum_k p_k` is integrated backward by the method of steps: advance
//! evaluations always read segments already computed; only the undelayed
//! term needs a Heun predictor.

use crate::dynamics::PiecewiseControl;
use crate::error::{Error, Result};
use crate::problem::ProblemSpec;
use crate::trajectory::BVTrajectory;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct AdjointSystem {
    pub lambda: f64,
    pub nodes: Vec<f64>,
    /// `arcs[k][i]` is `p_k` at node `i`.
    pub arcs: Vec<Vec<Vec<f64>>>,
    /// `p[i] = sum_k arcs[k][i]`.
    pub p: Vec<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
}

impl AdjointSystem {
    pub fn p_at(&self, t: f64) -> Vec<f64> {
        interp(&self.nodes, &self.p, t)
    }

    pub fn sup_norm(&self) -> f64 {
        self.p
            .iter()
            .map(|v| v.iter().map(|&c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn p_initial(&self) -> &[f64] {
        &self.p[0]
    }

    pub fn p_terminal(&self) -> &[f64] {
        self.p.last().unwrap()
    }

    /// Scale `(lambda, p)` by a positive factor; residual homogeneity checks
    /// use this.
    pub fn scaled(&self, c: f64) -> AdjointSystem {
        let mut out = self.clone();
        out.lambda *= c;
        for arc in &mut out.arcs {
            for v in arc {
                for x in v {
                    *x *= c;
                }
            }
        }
        for v in &mut out.p {
            for x in v {
                *x *= c;
            }
        }
        out
    }
}

fn interp(nodes: &[f64], values: &[Vec<f64>], t: f64) -> Vec<f64> {
    let n = values[0].len();
    if t <= nodes[0] {
        return values[0].clone();
    }
    if t >= *nodes.last().unwrap() {
        return values.last().unwrap().clone();
    }
    let i = nodes.partition_point(|&x| x <= t) - 1;
    let lam = (t - nodes[i]) / (nodes[i + 1] - nodes[i]);
    (0..n).map(|j| (1.0 - lam) * values[i][j] + lam * values[i + 1][j]).collect()
}

/// `q_k(u) = p(u) . df/dx_k[u] - lambda dl0/dx_k[u]` along the reference
/// process, zero beyond the horizon.
fn advance_term(
    spec: &ProblemSpec,
    traj: &BVTrajectory,
    alpha: &PiecewiseControl,
    lambda: f64,
    k: usize,
    u: f64,
    p_u: &[f64],
) -> Result<Vec<f64>> {
    let ttol = 1e-12 * spec.horizon.max(1.0);
    if u > spec.horizon + ttol {
        return Ok(vec![0.0; spec.n]);
    }
    let u = u.min(spec.horizon);
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(spec.delay_count() + 1);
    for j in 0..=spec.delay_count() {
        states.push(traj.eval(u - spec.delays[j])?);
    }
    let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
    let a = alpha.eval(u);
    let df = spec.grad_drift(k, u, &refs, a)?;
    let mut out = vec![0.0; spec.n];
    for j in 0..spec.n {
        for i in 0..spec.n {
            out[j] += p_u[i] * df[i][j];
        }
    }
    if lambda != 0.0 {
        let dl0 = spec.grad_l0(k, u, &refs, a)?;
        for j in 0..spec.n {
            out[j] -= lambda * dl0[j];
        }
    }
    Ok(out)
}

/// Integrate the adjoint arcs backward from a terminal condition on `p`.
pub fn solve_adjoint(
    spec: &ProblemSpec,
    traj: &BVTrajectory,
    alpha: &PiecewiseControl,
    lambda: f64,
    p_terminal: &[f64],
) -> Result<AdjointSystem> {
    if lambda < 0.0 {
        return Err(Error::Domain(format!("cost multiplier lambda = {lambda} must be nonnegative")));
    }
    if p_terminal.len() != spec.n {
        return Err(Error::config("terminal adjoint value has wrong dimension"));
    }
    let nodes = traj.nodes.clone();
    let nn = nodes.len();
    let n = spec.n;
    let kk = spec.delay_count();
    let ttol = 1e-12 * spec.horizon.max(1.0);
    let cutoffs: Vec<f64> = spec.delays.iter().map(|&h| (spec.horizon - h).max(0.0)).collect();

    let mut arcs = vec![vec![vec![0.0; n]; nn]; kk + 1];
    let mut p = vec![vec![0.0; n]; nn];
    arcs[0][nn - 1] = p_terminal.to_vec();
    p[nn - 1] = p_terminal.to_vec();

    for i in (1..nn).rev() {
        let s1 = nodes[i];
        let s0 = nodes[i - 1];
        let h = s1 - s0;

        // slope of p_k at s is q_k(s + h_k), zero in the tail region
        let mut k1 = vec![vec![0.0; n]; kk + 1];
        for k in 0..=kk {
            if s1 <= cutoffs[k] + ttol {
                let u = s1 + spec.delays[k];
                let p_u = interp(&nodes, &p, u);
                k1[k] = advance_term(spec, traj, alpha, lambda, k, u, &p_u)?;
            }
        }
        // Euler predictor for the sum at s0, needed by the k = 0 corrector
        let mut p_pred = vec![0.0; n];
        for k in 0..=kk {
            for j in 0..n {
                let v = arcs[k][i][j] + h * k1[k][j];
                p_pred[j] += if k >= 1 && s0 >= cutoffs[k] - ttol { 0.0 } else { v };
            }
        }

        for k in 0..=kk {
            if k >= 1 && s0 >= cutoffs[k] - ttol {
                // zero tail holds exactly by construction
                continue;
            }
            let u0 = s0 + spec.delays[k];
            let p_u0 = if k == 0 { p_pred.clone() } else { interp(&nodes, &p, u0) };
            let k2 = if s0 <= cutoffs[k] + ttol {
                advance_term(spec, traj, alpha, lambda, k, u0, &p_u0)?
            } else {
                vec![0.0; n]
            };
            for j in 0..n {
                arcs[k][i - 1][j] = arcs[k][i][j] + 0.5 * h * (k1[k][j] + k2[j]);
            }
        }
        for j in 0..n {
            p[i - 1][j] = (0..=kk).map(|k| arcs[k][i - 1][j]).sum();
        }
    }

    Ok(AdjointSystem { lambda, nodes, arcs, p, eta: None })
}
