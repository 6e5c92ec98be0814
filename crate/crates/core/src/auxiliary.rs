//! Graph completion: the compactified fast dynamics and the bijection
//! between impulsive controls `(mu, alpha)` and auxiliary controls
//! `(nu, alpha, omega)`, where `nu` is scalar and nonnegative, `omega` is the
//! Radon-Nikodym direction of `mu`, and the drive becomes
//! `g_frak(t, a, w) = G(t,a) w / (1 + sum_i |(G w)_i|)`, bounded by 1 in the
//! L1 sense by construction.

use crate::dynamics::{DriveMeasure, PiecewiseControl, Simulator};
use crate::error::{Error, Result};
use crate::measure::{Atom, Density, VectorMeasure};
use crate::problem::ProblemSpec;
use crate::trajectory::BVTrajectory;

/// Auxiliary control: scalar nonnegative measure, ordinary control, and a
/// direction field valued in the compactified cone.
#[derive(Debug, Clone)]
pub struct AuxiliaryControl {
    pub nu: VectorMeasure,
    pub alpha: PiecewiseControl,
    pub omega: PiecewiseControl,
}

fn denominator(g: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut acc = 1.0;
    for row in g {
        acc += row.iter().zip(w).map(|(&a, &b)| a * b).sum::<f64>().abs();
    }
    acc
}

/// Compactified fast dynamics `g_frak(t, a, w)` in R^n.
pub fn g_frak(spec: &ProblemSpec, t: f64, a: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let g = spec.eval_fast(t, a)?;
    let den = denominator(&g, w);
    Ok(g.iter()
        .map(|row| row.iter().zip(w).map(|(&gij, &wj)| gij * wj).sum::<f64>() / den)
        .collect())
}

/// Compactified direction `h_frak(t, a, w)` in R^m.
pub fn h_frak(spec: &ProblemSpec, t: f64, a: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    let g = spec.eval_fast(t, a)?;
    let den = denominator(&g, w);
    Ok(w.iter().map(|&wj| wj / den).collect())
}

/// Convert an impulsive control to its auxiliary form. Atoms use the exact
/// atom-time control value; density cells evaluate `G` and `alpha` at the
/// cell midpoint, consistent with the piecewise-constant storage.
pub fn to_auxiliary(spec: &ProblemSpec, control: &ImpulsiveControlRef) -> Result<AuxiliaryControl> {
    let mu = control.mu;
    let m = mu.m;
    let mut nu_atoms = Vec::with_capacity(mu.atoms.len());
    let mut omega_atoms = Vec::with_capacity(mu.atoms.len());
    for atom in &mu.atoms {
        let sigma: f64 = atom.w.iter().map(|v| v.abs()).sum();
        let omega: Vec<f64> = atom.w.iter().map(|v| v / sigma).collect();
        let g = spec.eval_fast(atom.t, control.alpha.at_atom(atom.t))?;
        let weight = denominator(&g, &omega) * sigma;
        nu_atoms.push(Atom { t: atom.t, w: vec![weight] });
        omega_atoms.push((atom.t, omega));
    }
    let mut nu_values = Vec::with_capacity(mu.density.cells);
    let mut omega_values = Vec::with_capacity(mu.density.cells);
    for (i, row) in mu.density.values.iter().enumerate() {
        let sigma: f64 = row.iter().map(|v| v.abs()).sum();
        if sigma > 0.0 {
            let omega: Vec<f64> = row.iter().map(|v| v / sigma).collect();
            let mid = mu.cell_mid(i);
            let g = spec.eval_fast(mid, control.alpha.eval(mid))?;
            nu_values.push(vec![denominator(&g, &omega) * sigma]);
            omega_values.push(omega);
        } else {
            nu_values.push(vec![0.0]);
            omega_values.push(vec![0.0; m]);
        }
    }
    let nu = VectorMeasure::new(
        1,
        mu.horizon,
        nu_atoms,
        Density { cells: mu.density.cells, values: nu_values },
        None,
    )?;
    let omega = PiecewiseControl {
        cells: mu.density.cells,
        values: omega_values,
        atom_values: omega_atoms,
        horizon: mu.horizon,
    };
    Ok(AuxiliaryControl { nu, alpha: control.alpha.clone(), omega })
}

/// Invert the auxiliary form. Fails when the direction field is missing or
/// degenerate somewhere the scalar measure puts mass.
pub fn from_auxiliary(spec: &ProblemSpec, aux: &AuxiliaryControl) -> Result<crate::dynamics::ImpulsiveControl> {
    let nu = &aux.nu;
    if nu.m != 1 {
        return Err(Error::config("auxiliary measure must be scalar"));
    }
    if nu.atoms.iter().any(|a| a.w[0] < 0.0) || nu.density.values.iter().any(|v| v[0] < 0.0) {
        return Err(Error::config("auxiliary measure must be nonnegative"));
    }
    let m = spec.m;
    let mut atoms = Vec::with_capacity(nu.atoms.len());
    for atom in &nu.atoms {
        let ttol = 1e-12 * nu.horizon.max(1.0);
        let omega = aux
            .omega
            .atom_values
            .iter()
            .find(|(t, _)| (t - atom.t).abs() <= ttol)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| {
                Error::config(format!("malformed auxiliary control: no direction at atom t = {}", atom.t))
            })?;
        check_direction(spec, &omega, atom.t)?;
        let g = spec.eval_fast(atom.t, aux.alpha.at_atom(atom.t))?;
        let den = denominator(&g, &omega);
        atoms.push(Atom { t: atom.t, w: omega.iter().map(|&o| o * atom.w[0] / den).collect() });
    }
    let mut values = Vec::with_capacity(nu.density.cells);
    for (i, row) in nu.density.values.iter().enumerate() {
        if row[0] > 0.0 {
            let mid = nu.cell_mid(i);
            let omega = aux.omega.values.get(i).cloned().unwrap_or_default();
            if omega.len() != m || omega.iter().map(|v| v.abs()).sum::<f64>() == 0.0 {
                return Err(Error::config(format!(
                    "malformed auxiliary control: no direction where nu puts mass (cell {i})"
                )));
            }
            check_direction(spec, &omega, mid)?;
            let g = spec.eval_fast(mid, aux.alpha.eval(mid))?;
            let den = denominator(&g, &omega);
            values.push(omega.iter().map(|&o| o * row[0] / den).collect());
        } else {
            values.push(vec![0.0; m]);
        }
    }
    let mu = VectorMeasure::new(m, nu.horizon, atoms, Density { cells: nu.density.cells, values }, None)?;
    Ok(crate::dynamics::ImpulsiveControl { mu, alpha: aux.alpha.clone() })
}

fn check_direction(spec: &ProblemSpec, omega: &[f64], t: f64) -> Result<()> {
    if !spec.cone.tilde_contains(omega, 1e-9) {
        return Err(Error::config(format!(
            "direction at t = {t} lies outside the compactified cone"
        )));
    }
    Ok(())
}

/// Borrowed view used by `to_auxiliary` so callers can pass the pieces of an
/// `ImpulsiveControl` without cloning the measure.
pub struct ImpulsiveControlRef<'a> {
    pub mu: &'a VectorMeasure,
    pub alpha: &'a PiecewiseControl,
}

impl<'a> From<&'a crate::dynamics::ImpulsiveControl> for ImpulsiveControlRef<'a> {
    fn from(c: &'a crate::dynamics::ImpulsiveControl) -> Self {
        ImpulsiveControlRef { mu: &c.mu, alpha: &c.alpha }
    }
}

fn drive_from_auxiliary(spec: &ProblemSpec, aux: &AuxiliaryControl) -> Result<DriveMeasure> {
    let nu = &aux.nu;
    let mut atom_times = Vec::with_capacity(nu.atoms.len());
    let mut atom_jumps = Vec::with_capacity(nu.atoms.len());
    for atom in &nu.atoms {
        let ttol = 1e-12 * nu.horizon.max(1.0);
        let omega = aux
            .omega
            .atom_values
            .iter()
            .find(|(t, _)| (t - atom.t).abs() <= ttol)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| {
                Error::config(format!("malformed auxiliary control: no direction at atom t = {}", atom.t))
            })?;
        let g = g_frak(spec, atom.t, aux.alpha.at_atom(atom.t), omega)?;
        atom_times.push(atom.t);
        atom_jumps.push(g.iter().map(|&v| v * atom.w[0]).collect());
    }
    let delta = nu.cell_width();
    let mut cell_bounds = Vec::with_capacity(nu.density.cells + 1);
    for i in 0..=nu.density.cells {
        cell_bounds.push((i as f64 * delta).min(nu.horizon));
    }
    let mut cell_rates = Vec::with_capacity(nu.density.cells);
    for (i, row) in nu.density.values.iter().enumerate() {
        if row[0] > 0.0 {
            let mid = nu.cell_mid(i);
            let g = g_frak(spec, mid, aux.alpha.eval(mid), &aux.omega.values[i])?;
            cell_rates.push(g.iter().map(|&v| v * row[0]).collect());
        } else {
            cell_rates.push(vec![0.0; spec.n]);
        }
    }
    Ok(DriveMeasure { dim: spec.n, horizon: nu.horizon, atom_times, atom_jumps, cell_bounds, cell_rates })
}

/// Solve the auxiliary impulsive system; same solver as `simulate`, with the
/// compactified drive replacing `G mu`.
pub fn simulate_auxiliary(
    spec: &ProblemSpec,
    aux: &AuxiliaryControl,
    xi: &[f64],
    grid_cells: usize,
) -> Result<BVTrajectory> {
    let sim = Simulator::new(spec)?;
    let drive = drive_from_auxiliary(spec, aux)?;
    sim.simulate_drive(&drive, &aux.alpha, xi, grid_cells)
}

/// Integral of `g_frak` against `nu` over `[lo, hi]`, used to check the
/// change-of-variables identity against `integrate(G, mu)`.
pub fn integrate_g_frak(spec: &ProblemSpec, aux: &AuxiliaryControl, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let drive = drive_from_auxiliary(spec, aux)?;
    let both = drive.cumulative_at(&[lo, hi]);
    let from = if lo == 0.0 { vec![0.0; spec.n] } else { both[0].0.clone() };
    Ok(both[1].1.iter().zip(&from).map(|(&b, &a)| b - a).collect())
}
