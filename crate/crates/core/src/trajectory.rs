//! Bounded-variation trajectories on `[0, T]` with a pre-history on
//! `[-h, 0)`. Node times are the base grid plus inserted atom times; each node
//! stores a left and a right limit. Evaluation is right-continuous, except at
//! exactly `t = 0`, which returns the pre-jump initial value.

use crate::error::{Error, Result};
use crate::expr::{EvalEnv, Expression};
use crate::measure::{Atom, Density, VectorMeasure};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct BVTrajectory {
    pub nodes: Vec<f64>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub history: Vec<Expression>,
    pub initial: Vec<f64>,
    pub dim: usize,
    pub horizon: f64,
    /// Base-grid cell count the trajectory was produced on.
    pub grid_cells: usize,
}

impl BVTrajectory {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn terminal(&self) -> &[f64] {
        self.right.last().unwrap()
    }

    pub fn is_jump_node(&self, i: usize) -> bool {
        self.left[i] != self.right[i]
    }

    fn time_tol(&self) -> f64 {
        1e-12 * self.horizon.max(1.0)
    }

    /// Index of the node at time `t`, if `t` hits one exactly (to tolerance).
    pub fn node_at(&self, t: f64) -> Option<usize> {
        let i = self.nodes.partition_point(|&x| x < t - self.time_tol());
        if i < self.nodes.len() && (self.nodes[i] - t).abs() <= self.time_tol() {
            Some(i)
        } else {
            None
        }
    }

    /// Right-continuous evaluation; `t < 0` reads the history, `t = 0`
    /// returns the pre-jump initial value.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.eval_side(t, Side::Right)
    }

    pub fn eval_side(&self, t: f64, side: Side) -> Result<Vec<f64>> {
        if t < -self.time_tol() {
            let env = EvalEnv::time_only(t);
            return self.history.iter().map(|e| e.eval(&env)).collect();
        }
        if t.abs() <= self.time_tol() {
            return Ok(self.initial.clone());
        }
        if t > self.horizon + self.time_tol() {
            return Err(Error::Domain(format!("trajectory evaluated at t = {t} beyond T = {}", self.horizon)));
        }
        if let Some(i) = self.node_at(t) {
            return Ok(match side {
                Side::Right => self.right[i].clone(),
                Side::Left => self.left[i].clone(),
            });
        }
        // strictly between nodes: linear interpolation from the right value
        // of the lower node to the left value of the upper node
        let i = self.nodes.partition_point(|&x| x < t) - 1;
        let (t0, t1) = (self.nodes[i], self.nodes[i + 1]);
        let lam = (t - t0) / (t1 - t0);
        Ok((0..self.dim)
            .map(|j| (1.0 - lam) * self.right[i][j] + lam * self.left[i + 1][j])
            .collect())
    }

    /// Delayed lookup `x(t - h)` with the history, initial-value, and
    /// interpolation conventions of the solver.
    pub fn delayed_eval(&self, t: f64, delay: f64) -> Result<Vec<f64>> {
        self.eval(t - delay)
    }

    /// Sup over nodes of the Euclidean norm of the pointwise difference.
    /// Nodes of `self` are used; `other` is interpolated.
    pub fn sup_distance(&self, other: &BVTrajectory) -> Result<f64> {
        let mut sup = 0.0f64;
        for (i, &t) in self.nodes.iter().enumerate() {
            let o = other.eval(t)?;
            let d: f64 = self.right[i]
                .iter()
                .zip(&o)
                .map(|(&a, &b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(d);
        }
        Ok(sup)
    }

    /// The differential `dx` as a vector measure on the trajectory's base
    /// grid: one atom per jump node, plus the per-cell mean slope of the
    /// continuous part as a piecewise-constant density.
    pub fn differential(&self) -> Result<VectorMeasure> {
        let cells = self.grid_cells;
        let delta = self.horizon / cells as f64;
        let mut atoms = Vec::new();
        for i in 0..self.node_count() {
            if self.is_jump_node(i) {
                let w: Vec<f64> = self.right[i].iter().zip(&self.left[i]).map(|(r, l)| r - l).collect();
                atoms.push(Atom { t: self.nodes[i], w });
            }
        }
        let mut values = Vec::with_capacity(cells);
        for c in 0..cells {
            let a = c as f64 * delta;
            let b = (c + 1) as f64 * delta;
            let xa = self.eval_side(if c == 0 { 0.0 } else { a }, Side::Right)?;
            let xa = if c == 0 { self.right[0].clone() } else { xa };
            let xb = self.eval_side(b, Side::Left)?;
            let mut jump_sum = vec![0.0; self.dim];
            for (i, &tau) in self.nodes.iter().enumerate() {
                if tau > a + self.time_tol() && tau < b - self.time_tol() && self.is_jump_node(i) {
                    for j in 0..self.dim {
                        jump_sum[j] += self.right[i][j] - self.left[i][j];
                    }
                }
            }
            values.push(
                (0..self.dim)
                    .map(|j| (xb[j] - xa[j] - jump_sum[j]) / delta)
                    .collect(),
            );
        }
        VectorMeasure::new(self.dim, self.horizon, atoms, Density { cells, values }, None)
    }

    /// CSV export: `t, left_1..left_n, right_1..right_n`, one row per node.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "t")?;
        for j in 1..=self.dim {
            write!(out, ",left_{j}")?;
        }
        for j in 1..=self.dim {
            write!(out, ",right_{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.node_count() {
            write!(out, "{}", self.nodes[i])?;
            for j in 0..self.dim {
                write!(out, ",{}", self.left[i][j])?;
            }
            for j in 0..self.dim {
                write!(out, ",{}", self.right[i][j])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// History sampled at grid resolution on `[-h, 0)`.
    pub fn write_history_csv<W: Write>(&self, out: &mut W, max_delay: f64) -> Result<()> {
        write!(out, "t")?;
        for j in 1..=self.dim {
            write!(out, ",x_{j}")?;
        }
        writeln!(out)?;
        if max_delay <= 0.0 {
            return Ok(());
        }
        let delta = self.horizon / self.grid_cells as f64;
        let steps = (max_delay / delta).round() as usize;
        for k in 0..steps {
            let t = -max_delay + k as f64 * delta;
            let v = self.eval(t)?;
            write!(out, "{t}")?;
            for j in 0..self.dim {
                write!(out, ",{}", v[j])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;

    fn step_trajectory() -> BVTrajectory {
        // jump of +2 at t = 0.5 on a 2-cell grid
        BVTrajectory {
            nodes: vec![0.0, 0.5, 1.0],
            left: vec![vec![0.0], vec![0.0], vec![2.0]],
            right: vec![vec![0.0], vec![2.0], vec![2.0]],
            history: vec![Expression::parse("1 + t").unwrap()],
            initial: vec![0.0],
            dim: 1,
            horizon: 1.0,
            grid_cells: 2,
        }
    }

    #[test]
    fn history_initial_and_interior_reads() {
        let traj = step_trajectory();
        assert!((traj.eval(-0.3).unwrap()[0] - 0.7).abs() < 1e-15);
        assert_eq!(traj.eval(0.0).unwrap(), vec![0.0]);
        assert_eq!(traj.eval(0.5).unwrap(), vec![2.0]);
        assert_eq!(traj.eval_side(0.5, Side::Left).unwrap(), vec![0.0]);
        // interpolation after the jump starts from the right value
        assert_eq!(traj.eval(0.75).unwrap(), vec![2.0]);
        assert_eq!(traj.eval(0.25).unwrap(), vec![0.0]);
    }

    #[test]
    fn differential_captures_jump_and_slope() {
        let traj = step_trajectory();
        let d = traj.differential().unwrap();
        assert_eq!(d.atoms.len(), 1);
        assert_eq!(d.atoms[0].w, vec![2.0]);
        assert!(d.density.values.iter().all(|row| row[0].abs() < 1e-12));
        // cumulative of dx at T reproduces x(T) - xi
        assert!((d.cumulative(1.0).unwrap()[0] - 2.0).abs() < 1e-12);
    }
}
