//! Problem data: horizon, delays, dynamics and cost expressions, cone,
//! control set, target. Variable bindings per role:
//!
//! - `f`, `l0`: `t`, `x0` (current state), `x1..xN` (delayed states), `a`
//! - `G`, `l1`: `t`, `a`
//! - `Phi`: `x0` = x(0), `x1` = x(T)
//! - `Psi`: `x0` = x(T)
//! - `zeta`, control-set bounds, `growth`, `lipschitz`: `t`

use crate::error::{Error, Result};
use crate::expr::{EvalEnv, Expression};
use crate::measure::Cone;
use crate::target::{InitialSet, TargetSet};

#[derive(Debug, Clone)]
pub enum ControlSet {
    Box { lo: Vec<Expression>, hi: Vec<Expression> },
    List { points: Vec<Vec<f64>> },
}

impl ControlSet {
    pub fn dim_ok(&self, q: usize) -> bool {
        match self {
            ControlSet::Box { lo, hi } => lo.len() == q && hi.len() == q,
            ControlSet::List { points } => points.iter().all(|p| p.len() == q),
        }
    }

    pub fn bounds_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            ControlSet::Box { lo, hi } => {
                let env = EvalEnv::time_only(t);
                let lo: Result<Vec<f64>> = lo.iter().map(|e| e.eval(&env)).collect();
                let hi: Result<Vec<f64>> = hi.iter().map(|e| e.eval(&env)).collect();
                let (lo, hi) = (lo?, hi?);
                for (l, h) in lo.iter().zip(&hi) {
                    if l > h {
                        return Err(Error::eval(t, "control box has lo > hi"));
                    }
                }
                Ok((lo, hi))
            }
            ControlSet::List { .. } => Err(Error::config("control set is a finite list, not a box")),
        }
    }

    pub fn contains(&self, t: f64, a: &[f64], tol: f64) -> Result<bool> {
        match self {
            ControlSet::Box { .. } => {
                let (lo, hi) = self.bounds_at(t)?;
                Ok(a.iter()
                    .zip(lo.iter().zip(&hi))
                    .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol))
            }
            ControlSet::List { points } => Ok(points
                .iter()
                .any(|p| p.iter().zip(a).all(|(&x, &y)| (x - y).abs() <= tol))),
        }
    }

    /// Deterministic sample of the admissible set at time `t`: for boxes, a
    /// lattice with the stated points per dimension including both bounds;
    /// for lists, every point.
    pub fn sample(&self, t: f64, per_dim: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            ControlSet::List { points } => Ok(points.clone()),
            ControlSet::Box { lo, .. } => {
                let q = lo.len();
                if q == 0 {
                    return Ok(vec![Vec::new()]);
                }
                let (lo, hi) = self.bounds_at(t)?;
                let per_dim = per_dim.max(2);
                let mut out = Vec::with_capacity(per_dim.pow(q as u32));
                let mut idx = vec![0usize; q];
                loop {
                    let point: Vec<f64> = (0..q)
                        .map(|d| {
                            if hi[d] == lo[d] {
                                lo[d]
                            } else {
                                lo[d] + (hi[d] - lo[d]) * idx[d] as f64 / (per_dim - 1) as f64
                            }
                        })
                        .collect();
                    out.push(point);
                    let mut d = 0;
                    loop {
                        idx[d] += 1;
                        if idx[d] < per_dim {
                            break;
                        }
                        idx[d] = 0;
                        d += 1;
                        if d == q {
                            return Ok(out);
                        }
                    }
                }
            }
        }
    }
}

/// Analytic partial derivatives, when the scenario supplies them.
#[derive(Debug, Clone)]
pub struct Gradients {
    /// `df[k][i][j]` = d f_i / d x_k[j]; same variable bindings as `f`.
    pub df: Option<Vec<Vec<Vec<Expression>>>>,
    /// `dl0[k][j]` = d l0 / d x_k[j].
    pub dl0: Option<Vec<Vec<Expression>>>,
    /// Gradient of `Phi` over `R^{2n}`; bindings as `Phi`.
    pub dphi: Option<Vec<Expression>>,
    /// `dpsi[r][j]` = d Psi_r / d x[j]; bindings as `Psi`.
    pub dpsi: Option<Vec<Vec<Expression>>>,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub horizon: f64,
    /// `0 = h_0 < h_1 < ... < h_N`; values above the horizon are allowed
    /// (those delayed reads always hit the history).
    pub delays: Vec<f64>,
    pub drift: Vec<Expression>,
    pub fast: Vec<Vec<Expression>>,
    pub running_cost: Expression,
    pub impulse_cost: Vec<Expression>,
    pub endpoint_cost: Expression,
    pub boundary_map: Option<Vec<Expression>>,
    pub history: Vec<Expression>,
    pub cone: Cone,
    pub control_set: ControlSet,
    pub target: TargetSet,
    pub initial_set: Option<InitialSet>,
    pub gradients: Option<Gradients>,
    pub growth: Option<Expression>,
    pub lipschitz: Option<Expression>,
}

impl ProblemSpec {
    pub fn delay_count(&self) -> usize {
        self.delays.len() - 1
    }

    pub fn max_delay(&self) -> f64 {
        *self.delays.last().unwrap()
    }

    pub fn eval_drift(&self, t: f64, states: &[&[f64]], a: &[f64]) -> Result<Vec<f64>> {
        let env = EvalEnv { t, states, control: a, direction: &[] };
        self.drift.iter().map(|e| e.eval(&env)).collect()
    }

    /// `G(t, a)` as an n x m matrix.
    pub fn eval_fast(&self, t: f64, a: &[f64]) -> Result<Vec<Vec<f64>>> {
        let env = EvalEnv { t, states: &[], control: a, direction: &[] };
        self.fast
            .iter()
            .map(|row| row.iter().map(|e| e.eval(&env)).collect())
            .collect()
    }

    pub fn eval_l0(&self, t: f64, states: &[&[f64]], a: &[f64]) -> Result<f64> {
        let env = EvalEnv { t, states, control: a, direction: &[] };
        self.running_cost.eval(&env)
    }

    pub fn eval_l1(&self, t: f64, a: &[f64]) -> Result<Vec<f64>> {
        let env = EvalEnv { t, states: &[], control: a, direction: &[] };
        self.impulse_cost.iter().map(|e| e.eval(&env)).collect()
    }

    pub fn eval_phi(&self, x0: &[f64], x_terminal: &[f64]) -> Result<f64> {
        let states = [x0, x_terminal];
        let env = EvalEnv { t: 0.0, states: &states, control: &[], direction: &[] };
        self.endpoint_cost.eval(&env)
    }

    pub fn eval_psi(&self, x_terminal: &[f64]) -> Result<Vec<f64>> {
        let psi = self
            .boundary_map
            .as_ref()
            .ok_or_else(|| Error::config("scenario has no boundary map Psi"))?;
        let states = [x_terminal];
        let env = EvalEnv { t: 0.0, states: &states, control: &[], direction: &[] };
        psi.iter().map(|e| e.eval(&env)).collect()
    }

    pub fn eval_history(&self, t: f64) -> Result<Vec<f64>> {
        let env = EvalEnv::time_only(t);
        self.history.iter().map(|e| e.eval(&env)).collect()
    }

    pub fn drift_smooth(&self) -> bool {
        self.drift.iter().all(|e| e.is_smooth()) && self.running_cost.is_smooth()
    }

    /// Gradient of `Phi` at the endpoint pair, analytic when supplied,
    /// central finite differences otherwise.
    pub fn grad_phi(&self, x0: &[f64], x_terminal: &[f64]) -> Result<Vec<f64>> {
        if let Some(dphi) = self.gradients.as_ref().and_then(|g| g.dphi.as_ref()) {
            let states = [x0, x_terminal];
            let env = EvalEnv { t: 0.0, states: &states, control: &[], direction: &[] };
            return dphi.iter().map(|e| e.eval(&env)).collect();
        }
        let n = self.n;
        let mut grad = vec![0.0; 2 * n];
        let mut a = x0.to_vec();
        let mut b = x_terminal.to_vec();
        for j in 0..2 * n {
            let (vecref, idx) = if j < n { (&mut a, j) } else { (&mut b, j - n) };
            let base = vecref[idx];
            let h = fd_step(base);
            vecref[idx] = base + h;
            let up = self.eval_phi(&a, &b);
            let (vecref, _) = if j < n { (&mut a, j) } else { (&mut b, j - n) };
            vecref[idx] = base - h;
            let down = self.eval_phi(&a, &b);
            let (vecref, _) = if j < n { (&mut a, j) } else { (&mut b, j - n) };
            vecref[idx] = base;
            grad[j] = (up? - down?) / (2.0 * h);
        }
        Ok(grad)
    }

    pub fn grad_psi(&self, x_terminal: &[f64]) -> Result<Vec<Vec<f64>>> {
        let psi = self
            .boundary_map
            .as_ref()
            .ok_or_else(|| Error::config("scenario has no boundary map Psi"))?;
        if let Some(dpsi) = self.gradients.as_ref().and_then(|g| g.dpsi.as_ref()) {
            let states = [x_terminal];
            let env = EvalEnv { t: 0.0, states: &states, control: &[], direction: &[] };
            return dpsi
                .iter()
                .map(|row| row.iter().map(|e| e.eval(&env)).collect())
                .collect();
        }
        let n = self.n;
        let mut rows = vec![vec![0.0; n]; psi.len()];
        let mut x = x_terminal.to_vec();
        for j in 0..n {
            let base = x[j];
            let h = fd_step(base);
            x[j] = base + h;
            let up = self.eval_psi(&x)?;
            x[j] = base - h;
            let down = self.eval_psi(&x)?;
            x[j] = base;
            for r in 0..psi.len() {
                rows[r][j] = (up[r] - down[r]) / (2.0 * h);
            }
        }
        Ok(rows)
    }

    /// `d f / d x_k` as an n x n matrix at `(t, {x_j}, a)`.
    pub fn grad_drift(&self, k: usize, t: f64, states: &[&[f64]], a: &[f64]) -> Result<Vec<Vec<f64>>> {
        if let Some(df) = self.gradients.as_ref().and_then(|g| g.df.as_ref()) {
            let env = EvalEnv { t, states, control: a, direction: &[] };
            return df[k]
                .iter()
                .map(|row| row.iter().map(|e| e.eval(&env)).collect())
                .collect();
        }
        if !self.drift_smooth() {
            return Err(Error::config(
                "drift or running cost uses a nonsmooth primitive and no analytic gradients were supplied",
            ));
        }
        let n = self.n;
        let mut out = vec![vec![0.0; n]; n];
        let mut bumped: Vec<Vec<f64>> = states.iter().map(|s| s.to_vec()).collect();
        for j in 0..n {
            let base = bumped[k][j];
            let h = fd_step(base);
            bumped[k][j] = base + h;
            let refs: Vec<&[f64]> = bumped.iter().map(|s| s.as_slice()).collect();
            let up = self.eval_drift(t, &refs, a)?;
            bumped[k][j] = base - h;
            let refs: Vec<&[f64]> = bumped.iter().map(|s| s.as_slice()).collect();
            let down = self.eval_drift(t, &refs, a)?;
            bumped[k][j] = base;
            for i in 0..n {
                out[i][j] = (up[i] - down[i]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    /// `d l0 / d x_k` at `(t, {x_j}, a)`.
    pub fn grad_l0(&self, k: usize, t: f64, states: &[&[f64]], a: &[f64]) -> Result<Vec<f64>> {
        if let Some(dl0) = self.gradients.as_ref().and_then(|g| g.dl0.as_ref()) {
            let env = EvalEnv { t, states, control: a, direction: &[] };
            return dl0[k].iter().map(|e| e.eval(&env)).collect();
        }
        if !self.drift_smooth() {
            return Err(Error::config(
                "drift or running cost uses a nonsmooth primitive and no analytic gradients were supplied",
            ));
        }
        let n = self.n;
        let mut out = vec![0.0; n];
        let mut bumped: Vec<Vec<f64>> = states.iter().map(|s| s.to_vec()).collect();
        for j in 0..n {
            let base = bumped[k][j];
            let h = fd_step(base);
            bumped[k][j] = base + h;
            let refs: Vec<&[f64]> = bumped.iter().map(|s| s.as_slice()).collect();
            let up = self.eval_l0(t, &refs, a)?;
            bumped[k][j] = base - h;
            let refs: Vec<&[f64]> = bumped.iter().map(|s| s.as_slice()).collect();
            let down = self.eval_l0(t, &refs, a)?;
            bumped[k][j] = base;
            out[j] = (up - down) / (2.0 * h);
        }
        Ok(out)
    }
}

/// Central-difference step: `1e-6 * (1 + |state|)`.
pub fn fd_step(value: f64) -> f64 {
    1e-6 * (1.0 + value.abs())
}
