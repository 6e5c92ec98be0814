//! Signed vector measures on `[0, T]`: finitely many atoms plus a
//! piecewise-constant density on a uniform partition.
//!
//! This family is closed under every operation in the crate (total variation,
//! Radon-Nikodym direction, integration, cumulative distribution,
//! mollification, graph completion) and is canonical: duplicate atoms are
//! merged and zero atoms dropped at construction, so equality of values is
//! equality of representations. Singular-continuous parts are not
//! representable and not needed.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Absolute tolerance for cone membership and canonicalization.
pub const CONE_TOL: f64 = 1e-12;

fn time_tol(horizon: f64) -> f64 {
    1e-12 * horizon.max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub cells: usize,
    pub values: Vec<Vec<f64>>,
}

/// Closed convex cone in `R^m`, given by a membership catalog. Every kind
/// exposes a finite generator set, which is what the support-function checks
/// of the certifier consume: for a cone, `sigma_K(v) <= 0` iff `v·g <= 0` for
/// all generators `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Cone {
    NonnegativeOrthant,
    HalfLine { direction: Vec<f64> },
    FinitelyGenerated { generators: Vec<Vec<f64>> },
}

impl Cone {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            Cone::NonnegativeOrthant => Ok(()),
            Cone::HalfLine { direction } => {
                if direction.len() != m {
                    return Err(Error::config(format!(
                        "cone direction has length {}, expected {m}",
                        direction.len()
                    )));
                }
                if norm(direction) == 0.0 {
                    return Err(Error::config("cone direction must be nonzero"));
                }
                Ok(())
            }
            Cone::FinitelyGenerated { generators } => {
                if generators.is_empty() {
                    return Err(Error::config("finitely generated cone needs at least one generator"));
                }
                for (i, g) in generators.iter().enumerate() {
                    if g.len() != m {
                        return Err(Error::config(format!(
                            "cone generator {i} has length {}, expected {m}",
                            g.len()
                        )));
                    }
                    if norm(g) == 0.0 {
                        return Err(Error::config(format!("cone generator {i} is zero")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Unit generators spanning the cone.
    pub fn generators(&self, m: usize) -> Vec<Vec<f64>> {
        match self {
            Cone::NonnegativeOrthant => (0..m)
                .map(|j| {
                    let mut e = vec![0.0; m];
                    e[j] = 1.0;
                    e
                })
                .collect(),
            Cone::HalfLine { direction } => vec![normalize(direction)],
            Cone::FinitelyGenerated { generators } => generators.iter().map(|g| normalize(g)).collect(),
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// Euclidean distance from `v` to the cone.
    pub fn distance(&self, v: &[f64]) -> f64 {
        match self {
            Cone::NonnegativeOrthant => v.iter().map(|&c| c.min(0.0).powi(2)).sum::<f64>().sqrt(),
            Cone::HalfLine { direction } => {
                let g = normalize(direction);
                let r = dot(v, &g).max(0.0);
                let mut d2 = 0.0;
                for j in 0..v.len() {
                    d2 += (v[j] - r * g[j]).powi(2);
                }
                d2.sqrt()
            }
            Cone::FinitelyGenerated { generators } => {
                let m = v.len();
                let cols = generators.len();
                let a = DMatrix::from_fn(m, cols, |i, j| generators[j][i]);
                let b = DVector::from_column_slice(v);
                let lambda = nnls(&a, &b);
                (&a * lambda - b).norm()
            }
        }
    }

    /// Membership in the compactified cone: `v` in the cone with every
    /// component bounded by 1 in absolute value.
    pub fn tilde_contains(&self, v: &[f64], tol: f64) -> bool {
        self.contains(v, tol) && v.iter().all(|&c| c.abs() <= 1.0 + tol)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&c| c * c).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    v.iter().map(|&c| c / n).collect()
}

/// Nonnegative least squares, Lawson-Hanson active set. Small systems only.
pub(crate) fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut passive = vec![false; n];
    let mut x = DVector::zeros(n);
    let max_outer = 3 * n + 10;
    for _ in 0..max_outer {
        let residual = b - a * &x;
        let grad = a.transpose() * &residual;
        let mut best = None;
        for j in 0..n {
            if !passive[j] && grad[j] > 1e-12 {
                if best.map_or(true, |(_, g)| grad[j] > g) {
                    best = Some((j, grad[j]));
                }
            }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(idx.iter());
            let sol = sub
                .clone()
                .svd(true, true)
                .solve(b, 1e-14)
                .unwrap_or_else(|_| DVector::zeros(idx.len()));
            if sol.iter().all(|&v| v > -1e-12) {
                x = DVector::zeros(n);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = sol[k].max(0.0);
                }
                break;
            }
            // shrink toward the feasible boundary, drop the binding variable
            let mut alpha = 1.0f64;
            let mut drop_j = None;
            for (k, &j) in idx.iter().enumerate() {
                if sol[k] <= 0.0 {
                    let step = x[j] / (x[j] - sol[k]);
                    if step < alpha {
                        alpha = step;
                        drop_j = Some(j);
                    }
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sol[k] - x[j]);
            }
            if let Some(j) = drop_j {
                passive[j] = false;
                x[j] = 0.0;
            } else {
                break;
            }
        }
    }
    x
}

/// Signed vector measure: atoms at strictly increasing times plus a
/// piecewise-constant density on a uniform partition of `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorMeasure {
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub atoms: Vec<Atom>,
    pub density: Density,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cone: Option<Cone>,
}

impl VectorMeasure {
    pub fn new(
        m: usize,
        horizon: f64,
        atoms: Vec<Atom>,
        density: Density,
        cone: Option<Cone>,
    ) -> Result<VectorMeasure> {
        if m == 0 {
            return Err(Error::config("measure dimension m must be positive"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config("measure horizon T must be positive and finite"));
        }
        if density.cells == 0 || density.values.len() != density.cells {
            return Err(Error::config(format!(
                "density must have cells >= 1 and exactly `cells` value rows (cells = {}, rows = {})",
                density.cells,
                density.values.len()
            )));
        }
        for (i, row) in density.values.iter().enumerate() {
            if row.len() != m {
                return Err(Error::config(format!("density value {i} has length {}, expected {m}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("density value {i} is not finite")));
            }
        }
        let ttol = time_tol(horizon);
        let mut sorted = atoms;
        for a in &sorted {
            if !(a.t >= -ttol && a.t <= horizon + ttol) {
                return Err(Error::config(format!("atom time {} outside [0, {horizon}]", a.t)));
            }
            if a.w.len() != m {
                return Err(Error::config(format!("atom weight has length {}, expected {m}", a.w.len())));
            }
            if a.w.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("atom weight is not finite"));
            }
        }
        sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
        // merge duplicates by weight addition, drop zero atoms
        let mut merged: Vec<Atom> = Vec::with_capacity(sorted.len());
        for a in sorted {
            let t = a.t.clamp(0.0, horizon);
            match merged.last_mut() {
                Some(last) if (last.t - t).abs() <= ttol => {
                    for j in 0..m {
                        last.w[j] += a.w[j];
                    }
                }
                _ => merged.push(Atom { t, w: a.w }),
            }
        }
        merged.retain(|a| a.w.iter().map(|v| v.abs()).sum::<f64>() > 0.0);
        if let Some(cone) = &cone {
            cone.validate(m)?;
            for a in &merged {
                if !cone.contains(&a.w, CONE_TOL * (1.0 + norm(&a.w))) {
                    return Err(Error::config(format!("atom weight at t = {} lies outside the cone", a.t)));
                }
            }
            for (i, row) in density.values.iter().enumerate() {
                if !cone.contains(row, CONE_TOL * (1.0 + norm(row))) {
                    return Err(Error::config(format!("density value in cell {i} lies outside the cone")));
                }
            }
        }
        Ok(VectorMeasure { m, horizon, atoms: merged, density, cone })
    }

    pub fn zero(m: usize, horizon: f64) -> VectorMeasure {
        VectorMeasure {
            m,
            horizon,
            atoms: Vec::new(),
            density: Density { cells: 1, values: vec![vec![0.0; m]] },
            cone: None,
        }
    }

    pub fn from_atoms(m: usize, horizon: f64, atoms: Vec<Atom>) -> Result<VectorMeasure> {
        VectorMeasure::new(m, horizon, atoms, Density { cells: 1, values: vec![vec![0.0; m]] }, None)
    }

    pub fn cell_width(&self) -> f64 {
        self.horizon / self.density.cells as f64
    }

    pub fn cell_mid(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.cell_width()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.density.values.iter().all(|row| row.iter().all(|&v| v == 0.0))
    }

    pub fn atom_at(&self, t: f64) -> Option<&Atom> {
        let ttol = time_tol(self.horizon);
        self.atoms.iter().find(|a| (a.t - t).abs() <= ttol)
    }

    /// Total variation measure `|mu|`: scalar, nonnegative, same support.
    pub fn total_variation(&self) -> VectorMeasure {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom { t: a.t, w: vec![a.w.iter().map(|v| v.abs()).sum()] })
            .collect();
        let values = self
            .density
            .values
            .iter()
            .map(|row| vec![row.iter().map(|v| v.abs()).sum()])
            .collect();
        VectorMeasure {
            m: 1,
            horizon: self.horizon,
            atoms,
            density: Density { cells: self.density.cells, values },
            cone: None,
        }
    }

    /// Total-variation mass, the `C*` norm of the measure.
    pub fn total_mass(&self) -> f64 {
        let delta = self.cell_width();
        let atom_part: f64 = self.atoms.iter().map(|a| a.w.iter().map(|v| v.abs()).sum::<f64>()).sum();
        let density_part: f64 = self
            .density
            .values
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>() * delta)
            .sum();
        atom_part + density_part
    }

    /// Radon-Nikodym direction field of the measure with respect to `|mu|`.
    pub fn radon_nikodym(&self) -> DirectionField {
        let atom_dirs = self
            .atoms
            .iter()
            .map(|a| {
                let s: f64 = a.w.iter().map(|v| v.abs()).sum();
                (a.t, a.w.iter().map(|v| v / s).collect::<Vec<f64>>())
            })
            .collect();
        let cell_dirs = self
            .density
            .values
            .iter()
            .map(|row| {
                let s: f64 = row.iter().map(|v| v.abs()).sum();
                if s > 0.0 {
                    Some(row.iter().map(|v| v / s).collect::<Vec<f64>>())
                } else {
                    None
                }
            })
            .collect();
        DirectionField { horizon: self.horizon, cells: self.density.cells, atom_dirs, cell_dirs }
    }

    /// Integral of a matrix-valued `Psi(t)` (rows x m) against the measure
    /// over the closed interval `[lo, hi]`. Atoms at both endpoints are
    /// included; densities use the cell-midpoint rule on the measure's own
    /// partition (clipped cells evaluate at the midpoint of the clipped
    /// part), which is exact whenever `Psi` is constant per cell.
    pub fn integrate<F>(&self, rows: usize, psi: F, lo: f64, hi: f64) -> Result<Vec<f64>>
    where
        F: Fn(f64) -> Result<Vec<Vec<f64>>>,
    {
        let ttol = time_tol(self.horizon);
        if lo < -ttol || hi > self.horizon + ttol || lo > hi + ttol {
            return Err(Error::Domain(format!(
                "integration interval [{lo}, {hi}] not inside [0, {}]",
                self.horizon
            )));
        }
        let mut out = vec![0.0; rows];
        for a in &self.atoms {
            if a.t >= lo - ttol && a.t <= hi + ttol {
                let mat = psi(a.t)?;
                accumulate(&mut out, &mat, &a.w, 1.0, self.m)?;
            }
        }
        let delta = self.cell_width();
        for (i, row) in self.density.values.iter().enumerate() {
            let c_lo = (i as f64) * delta;
            let c_hi = c_lo + delta;
            let s_lo = c_lo.max(lo);
            let s_hi = c_hi.min(hi);
            if s_hi - s_lo <= ttol {
                continue;
            }
            let mid = 0.5 * (s_lo + s_hi);
            let mat = psi(mid)?;
            accumulate(&mut out, &mat, row, s_hi - s_lo, self.m)?;
        }
        Ok(out)
    }

    /// Scalar integral of a test function against one component of the measure.
    pub fn integrate_component(&self, test: &dyn Fn(f64) -> f64, j: usize) -> f64 {
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += test(a.t) * a.w[j];
        }
        let delta = self.cell_width();
        for (i, row) in self.density.values.iter().enumerate() {
            acc += test(self.cell_mid(i)) * row[j] * delta;
        }
        acc
    }

    /// `z(t) = integral over [0, t]`, right-continuous on `(0, T)`; includes
    /// an atom at time 0 and an atom exactly at `t`.
    pub fn cumulative(&self, t: f64) -> Result<Vec<f64>> {
        self.cumulative_side(t, true)
    }

    /// Left limit `z(t-)`: atoms strictly before `t` only.
    pub fn cumulative_left(&self, t: f64) -> Result<Vec<f64>> {
        self.cumulative_side(t, false)
    }

    fn cumulative_side(&self, t: f64, include_at_t: bool) -> Result<Vec<f64>> {
        let ttol = time_tol(self.horizon);
        if t < -ttol || t > self.horizon + ttol {
            return Err(Error::Domain(format!("cumulative time {t} outside [0, {}]", self.horizon)));
        }
        let t = t.clamp(0.0, self.horizon);
        let mut out = vec![0.0; self.m];
        for a in &self.atoms {
            let inside = if include_at_t { a.t <= t + ttol } else { a.t < t - ttol };
            if inside {
                for j in 0..self.m {
                    out[j] += a.w[j];
                }
            }
        }
        let delta = self.cell_width();
        for (i, row) in self.density.values.iter().enumerate() {
            let c_lo = (i as f64) * delta;
            if c_lo >= t {
                break;
            }
            let span = (t - c_lo).min(delta);
            for j in 0..self.m {
                out[j] += row[j] * span;
            }
        }
        Ok(out)
    }
}

fn accumulate(out: &mut [f64], mat: &[Vec<f64>], weight: &[f64], scale: f64, m: usize) -> Result<()> {
    if mat.len() != out.len() {
        return Err(Error::config(format!("Psi returned {} rows, expected {}", mat.len(), out.len())));
    }
    for (i, row) in mat.iter().enumerate() {
        if row.len() != m {
            return Err(Error::config(format!("Psi row has {} columns, expected {m}", row.len())));
        }
        let mut acc = 0.0;
        for j in 0..m {
            acc += row[j] * weight[j];
        }
        out[i] += acc * scale;
    }
    Ok(())
}

/// Direction field `omega = d mu / d |mu|`, defined on the support of `|mu|`.
#[derive(Debug, Clone)]
pub struct DirectionField {
    horizon: f64,
    cells: usize,
    atom_dirs: Vec<(f64, Vec<f64>)>,
    cell_dirs: Vec<Option<Vec<f64>>>,
}

impl DirectionField {
    pub fn at(&self, t: f64) -> Result<&[f64]> {
        let ttol = time_tol(self.horizon);
        if let Some((_, dir)) = self.atom_dirs.iter().find(|(tau, _)| (tau - t).abs() <= ttol) {
            return Ok(dir);
        }
        let delta = self.horizon / self.cells as f64;
        let idx = ((t / delta).floor() as usize).min(self.cells - 1);
        match &self.cell_dirs[idx] {
            Some(dir) => Ok(dir),
            None => Err(Error::UndefinedDirection(t)),
        }
    }

    pub fn atom_direction(&self, t: f64) -> Option<&[f64]> {
        let ttol = time_tol(self.horizon);
        self.atom_dirs.iter().find(|(tau, _)| (tau - t).abs() <= ttol).map(|(_, d)| d.as_slice())
    }

    pub fn cell_direction(&self, i: usize) -> Option<&[f64]> {
        self.cell_dirs[i].as_deref()
    }
}

/// Default test family for the weak-* gap: monomials `t^0..t^4` plus the
/// trigonometric pairs `cos(k pi t / (2T))`, `sin(k pi t / (2T))`, k = 1..4.
pub fn default_test_family(horizon: f64) -> Vec<Box<dyn Fn(f64) -> f64>> {
    let mut tests: Vec<Box<dyn Fn(f64) -> f64>> = Vec::new();
    for k in 0..=4u32 {
        tests.push(Box::new(move |t: f64| t.powi(k as i32)));
    }
    for k in 1..=4u32 {
        let freq = k as f64 * std::f64::consts::PI / (2.0 * horizon);
        tests.push(Box::new(move |t: f64| (freq * t).cos()));
        tests.push(Box::new(move |t: f64| (freq * t).sin()));
    }
    tests
}

/// Finite-test-family surrogate for the weak-* distance: the maximum over
/// tests and components of the difference of test integrals. A pseudometric;
/// zero iff all test integrals agree.
pub fn weakstar_gap(
    mu1: &VectorMeasure,
    mu2: &VectorMeasure,
    tests: &[Box<dyn Fn(f64) -> f64>],
) -> Result<f64> {
    if mu1.m != mu2.m {
        return Err(Error::config("weakstar_gap requires measures of equal dimension"));
    }
    if (mu1.horizon - mu2.horizon).abs() > time_tol(mu1.horizon) {
        return Err(Error::config("weakstar_gap requires measures on the same horizon"));
    }
    let mut gap = 0.0f64;
    for test in tests {
        for j in 0..mu1.m {
            let d = (mu1.integrate_component(test, j) - mu2.integrate_component(test, j)).abs();
            gap = gap.max(d);
        }
    }
    Ok(gap)
}
