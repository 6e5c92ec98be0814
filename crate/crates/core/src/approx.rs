//! Strict-sense approximation: mollify atoms into shrinking density blocks,
//! compare the resulting absolutely continuous trajectories against the
//! impulsive one, and compute the delayed-Filippov perturbation bound.

use crate::dynamics::{DriveMeasure, ImpulsiveControl, PiecewiseControl, Simulator};
use crate::error::{Error, Result};
use crate::measure::{default_test_family, weakstar_gap, Density, VectorMeasure};
use crate::problem::ProblemSpec;
use crate::trajectory::BVTrajectory;
use serde::Serialize;

/// Per-width convergence diagnostics for a strict-sense approximating
/// sequence. `sup_errors` are taken over the continuity sample set (grid
/// nodes excluding atom times of the base trajectory).
#[derive(Debug, Clone, Serialize)]
pub struct ApproximationReport {
    pub widths: Vec<f64>,
    pub measure_gaps: Vec<f64>,
    pub differential_gaps: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub endpoint_errors: Vec<f64>,
    pub verdict: String,
}

#[derive(Debug, Clone, Copy)]
pub struct ApproxOptions {
    /// Simulator tolerance used by the convergence verdict; the final
    /// endpoint error must fall below 10x this value.
    pub sim_tol: f64,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions { sim_tol: 1e-4 }
    }
}

/// Spread every atom of the control's measure into a density block of the
/// given width: right-sided `[tau, tau + width)`, flipped to left-sided when
/// clipped by the horizon. Total vector mass is preserved exactly and the
/// ordinary control is extended as its atom-time value on the block.
pub fn mollify(control: &ImpulsiveControl, width: f64) -> Result<ImpulsiveControl> {
    let mu = &control.mu;
    if control.mu.atoms.is_empty() {
        return Ok(control.clone());
    }
    if !(width > 0.0) {
        return Err(Error::config("mollification width must be positive"));
    }
    for pair in mu.atoms.windows(2) {
        if pair[1].t - pair[0].t <= width {
            return Err(Error::config(format!(
                "mollification width {width} overlaps atoms at t = {} and t = {}",
                pair[0].t, pair[1].t
            )));
        }
    }

    // refine the partition so each block spans at least 8 cells
    let old_cells = mu.density.cells;
    let factor = ((mu.horizon / (old_cells as f64 * width / 8.0)).ceil() as usize).max(1);
    let cells = old_cells * factor;
    let delta = mu.horizon / cells as f64;
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(cells);
    for i in 0..cells {
        values.push(mu.density.values[i / factor].clone());
    }

    let mut alpha_values: Vec<Vec<f64>> = Vec::with_capacity(cells);
    for i in 0..cells {
        alpha_values.push(control.alpha.eval((i as f64 + 0.5) * delta).to_vec());
    }

    for atom in &mu.atoms {
        let (lo, hi) = if atom.t + width <= mu.horizon {
            (atom.t, atom.t + width)
        } else {
            if atom.t - width < 0.0 {
                return Err(Error::config(format!(
                    "mollification width {width} does not fit beside the atom at t = {}",
                    atom.t
                )));
            }
            (atom.t - width, atom.t)
        };
        let a_at_atom = control.alpha.at_atom(atom.t).to_vec();
        let first = (lo / delta).floor() as usize;
        let last = ((hi / delta).ceil() as usize).min(cells);
        for cell in first..last {
            let c_lo = cell as f64 * delta;
            let c_hi = c_lo + delta;
            let overlap = (hi.min(c_hi) - lo.max(c_lo)).max(0.0);
            if overlap > 0.0 {
                for j in 0..mu.m {
                    values[cell][j] += atom.w[j] * overlap / (width * delta);
                }
                alpha_values[cell] = a_at_atom.clone();
            }
        }
    }

    let mollified = VectorMeasure::new(mu.m, mu.horizon, Vec::new(), Density { cells, values }, mu.cone.clone())?;
    Ok(ImpulsiveControl {
        mu: mollified,
        alpha: PiecewiseControl {
            cells,
            values: alpha_values,
            atom_values: Vec::new(),
            horizon: control.alpha.horizon,
        },
    })
}

/// Compare an arbitrary sequence of controls against a base process and
/// assemble the convergence report. Widths are labels for the report; the
/// verdict requires the errors to decrease monotonically beyond the first
/// entry and the final endpoint error to fall below `10 * sim_tol`.
pub fn sequence_report(
    spec: &ProblemSpec,
    base_control: &ImpulsiveControl,
    xi: &[f64],
    entries: &[(f64, ImpulsiveControl, Vec<f64>)],
    grid_cells: usize,
    opts: ApproxOptions,
) -> Result<ApproximationReport> {
    let sim = Simulator::new(spec)?;
    let base = sim.simulate(base_control, xi, grid_cells)?;
    let tests = default_test_family(spec.horizon);
    let base_diff = base.differential()?;

    // continuity sample set: base grid nodes that are not atom times
    let sample_nodes: Vec<f64> = base
        .nodes
        .iter()
        .enumerate()
        .filter(|(i, _)| !base.is_jump_node(*i))
        .map(|(_, &t)| t)
        .collect();

    let mut widths = Vec::new();
    let mut measure_gaps = Vec::new();
    let mut differential_gaps = Vec::new();
    let mut sup_errors = Vec::new();
    let mut endpoint_errors = Vec::new();

    for (width, control, xi_i) in entries {
        let traj = sim.simulate(control, xi_i, grid_cells)?;
        widths.push(*width);
        measure_gaps.push(weakstar_gap(&control.mu, &base_control.mu, &tests)?);
        differential_gaps.push(weakstar_gap(&traj.differential()?, &base_diff, &tests)?);
        let mut sup = 0.0f64;
        for &t in &sample_nodes {
            let a = traj.eval(t)?;
            let b = base.eval(t)?;
            let d: f64 = a.iter().zip(&b).map(|(&x, &y)| (x - y).powi(2)).sum::<f64>().sqrt();
            sup = sup.max(d);
        }
        sup_errors.push(sup);
        let d: f64 = traj
            .terminal()
            .iter()
            .zip(base.terminal())
            .map(|(&x, &y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        endpoint_errors.push(d);
    }

    let monotone = |xs: &[f64]| xs.windows(2).skip(1).all(|w| w[1] <= w[0] + 1e-12);
    let converging = monotone(&endpoint_errors)
        && monotone(&sup_errors)
        && endpoint_errors.last().map_or(true, |&e| e <= 10.0 * opts.sim_tol)
        && sup_errors.last().map_or(true, |&e| e <= 10.0 * opts.sim_tol);
    Ok(ApproximationReport {
        widths,
        measure_gaps,
        differential_gaps,
        sup_errors,
        endpoint_errors,
        verdict: if converging { "converging".to_string() } else { "non-converging".to_string() },
    })
}

/// Mollify the control at each width, simulate, and report convergence.
pub fn density_sequence(
    spec: &ProblemSpec,
    control: &ImpulsiveControl,
    xi: &[f64],
    widths: &[f64],
    grid_cells: usize,
    opts: ApproxOptions,
) -> Result<ApproximationReport> {
    if widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("mollification widths must be strictly decreasing"));
    }
    let mut entries = Vec::with_capacity(widths.len());
    for &w in widths {
        entries.push((w, mollify(control, w)?, xi.to_vec()));
    }
    sequence_report(spec, control, xi, &entries, grid_cells, opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct FilippovBound {
    pub bound: f64,
    pub initial_gap: f64,
    pub beta_l1: f64,
    pub lipschitz_l1: f64,
    pub warning: Option<String>,
}

/// Delayed-Filippov estimate: the shifted trajectories (trajectory minus its
/// drive cumulative) of the base and perturbed inputs differ in sup norm by
/// at most `exp((N+1) * int L) * (|xi_i - xi_0| + int beta_i)`, where `beta`
/// is the drift mismatch along the base trajectory. `int beta` uses an
/// upper-biased quadrature so the certified bound can only grow.
pub fn filippov_bound(
    spec: &ProblemSpec,
    base_control: &ImpulsiveControl,
    base_traj: &BVTrajectory,
    perturbed_control: &ImpulsiveControl,
    xi_perturbed: &[f64],
) -> Result<FilippovBound> {
    let n_delays = spec.delay_count();
    let base_drive = DriveMeasure::from_impulsive(spec, base_control)?;
    let pert_drive = DriveMeasure::from_impulsive(spec, perturbed_control)?;

    let (lip_l1, warning) = match &spec.lipschitz {
        Some(l) => (crate::dynamics::upper_integral(l, spec.horizon)?, None),
        None => match probe_lipschitz(spec) {
            Ok(l) => (l * spec.horizon, None),
            Err(_) => (
                f64::INFINITY,
                Some("Lipschitz probe failed; bound is infinite".to_string()),
            ),
        },
    };

    // beta(t) = |f(t, {xbar(t-h_k)}, abar(t))
    //           - f(t, {xbar(t-h_k) - drive0(t-h_k) + drive_i(t-h_k)}, a_i(t))|
    let beta_at = |t: f64| -> Result<f64> {
        let mut base_states: Vec<Vec<f64>> = Vec::with_capacity(n_delays + 1);
        let mut pert_states: Vec<Vec<f64>> = Vec::with_capacity(n_delays + 1);
        for k in 0..=n_delays {
            let s = t - spec.delays[k];
            let x = base_traj.eval(s)?;
            if s >= 0.0 {
                let d0 = &base_drive.cumulative_at(&[s])[0].1;
                let di = &pert_drive.cumulative_at(&[s])[0].1;
                pert_states.push(
                    x.iter().zip(d0.iter().zip(di)).map(|(&v, (&a, &b))| v - a + b).collect(),
                );
            } else {
                pert_states.push(x.clone());
            }
            base_states.push(x);
        }
        let refs0: Vec<&[f64]> = base_states.iter().map(|s| s.as_slice()).collect();
        let refs1: Vec<&[f64]> = pert_states.iter().map(|s| s.as_slice()).collect();
        let f0 = spec.eval_drift(t, &refs0, base_control.alpha.eval(t))?;
        let f1 = spec.eval_drift(t, &refs1, perturbed_control.alpha.eval(t))?;
        Ok(f0.iter().zip(&f1).map(|(&a, &b)| (a - b).powi(2)).sum::<f64>().sqrt())
    };

    let cells = 256;
    let dt = spec.horizon / cells as f64;
    let mut beta_l1 = 0.0;
    let mut prev = beta_at(0.0)?;
    for i in 0..cells {
        let mid = beta_at((i as f64 + 0.5) * dt)?;
        let next = beta_at(((i + 1) as f64) * dt)?;
        beta_l1 += dt * prev.max(mid).max(next);
        prev = next;
    }

    let initial_gap: f64 = base_traj
        .initial
        .iter()
        .zip(xi_perturbed)
        .map(|(&a, &b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let np1 = (n_delays + 1) as f64;
    Ok(FilippovBound {
        bound: (np1 * lip_l1).exp() * (initial_gap + beta_l1),
        initial_gap,
        beta_l1,
        lipschitz_l1: lip_l1,
        warning,
    })
}

/// Observed sup-norm distance of the shifted trajectories, for checking the
/// bound against simulations.
pub fn shifted_distance(
    spec: &ProblemSpec,
    base_control: &ImpulsiveControl,
    base_traj: &BVTrajectory,
    perturbed_control: &ImpulsiveControl,
    perturbed_traj: &BVTrajectory,
) -> Result<f64> {
    let base_drive = DriveMeasure::from_impulsive(spec, base_control)?;
    let pert_drive = DriveMeasure::from_impulsive(spec, perturbed_control)?;
    let d0 = base_drive.cumulative_at(&base_traj.nodes);
    let mut sup = 0.0f64;
    for (i, &t) in base_traj.nodes.iter().enumerate() {
        let xp = perturbed_traj.eval(t)?;
        let di = pert_drive.cumulative_at(&[t])[0].1.clone();
        let mut acc = 0.0;
        for j in 0..spec.n {
            let z0 = base_traj.right[i][j] - d0[i].1[j];
            let zi = xp[j] - di[j];
            acc += (z0 - zi).powi(2);
        }
        sup = sup.max(acc.sqrt());
    }
    Ok(sup)
}

fn probe_lipschitz(spec: &ProblemSpec) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let dim = spec.n * (spec.delay_count() + 1);
    let mut worst = 0.0f64;
    for s in 0..256 {
        let t = spec.horizon * (s as f64 + 0.5) / 256.0;
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut y = z.clone();
        let j = rng.gen_range(0..dim);
        y[j] += rng.gen_range(0.01..0.5);
        let dist: f64 = z.iter().zip(&y).map(|(&a, &b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let zs: Vec<&[f64]> = (0..=spec.delay_count()).map(|k| &z[k * spec.n..(k + 1) * spec.n]).collect();
        let ys: Vec<&[f64]> = (0..=spec.delay_count()).map(|k| &y[k * spec.n..(k + 1) * spec.n]).collect();
        for a in spec.control_set.sample(t, 3)? {
            let fz = spec.eval_drift(t, &zs, &a)?;
            let fy = spec.eval_drift(t, &ys, &a)?;
            let df: f64 = fz.iter().zip(&fy).map(|(&p, &q)| (p - q).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(df / dist);
        }
    }
    Ok(worst)
}
