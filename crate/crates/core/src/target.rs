//! Endpoint target sets over `R^{2n}` (pairs `(x(0), x(T))`) and initial
//! sets over `R^n` for boundary mode. Each supported kind carries an exact
//! membership test, an exact limiting-normal-cone projection, and a smooth
//! penalty for the transcription.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Face-activity tolerance shared with endpoint feasibility checks.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSet {
    FixedInitialFreeTerminal { x0: Vec<f64> },
    FixedBoth { x0: Vec<f64>, x_terminal: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
}

impl TargetSet {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            TargetSet::FixedInitialFreeTerminal { x0 } => {
                if x0.len() != n {
                    return Err(Error::config(format!("target x0 has length {}, expected {n}", x0.len())));
                }
            }
            TargetSet::FixedBoth { x0, x_terminal } => {
                if x0.len() != n || x_terminal.len() != n {
                    return Err(Error::config("target endpoints must both have length n"));
                }
            }
            TargetSet::Box { lo, hi } => {
                if lo.len() != 2 * n || hi.len() != 2 * n {
                    return Err(Error::config("box target bounds must have length 2n"));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::config("box target has lo > hi"));
                }
            }
            TargetSet::Affine { matrix, offset } => {
                if matrix.len() != offset.len() || matrix.is_empty() {
                    return Err(Error::config("affine target needs one offset per matrix row"));
                }
                for row in matrix {
                    if row.len() != 2 * n {
                        return Err(Error::config("affine target rows must have length 2n"));
                    }
                }
            }
        }
        Ok(())
    }

    /// True when the initial point is pinned to a single value (exact
    /// substitution in the transcription).
    pub fn fixed_initial(&self) -> Option<&[f64]> {
        match self {
            TargetSet::FixedInitialFreeTerminal { x0 } | TargetSet::FixedBoth { x0, .. } => Some(x0),
            _ => None,
        }
    }

    /// Euclidean distance from the endpoint pair `z = (x(0), x(T))` to the set.
    pub fn distance(&self, z: &[f64]) -> f64 {
        match self {
            TargetSet::FixedInitialFreeTerminal { x0 } => {
                let n = x0.len();
                norm_diff(&z[..n], x0)
            }
            TargetSet::FixedBoth { x0, x_terminal } => {
                let n = x0.len();
                (norm_diff(&z[..n], x0).powi(2) + norm_diff(&z[n..], x_terminal).powi(2)).sqrt()
            }
            TargetSet::Box { lo, hi } => {
                let mut d2 = 0.0;
                for i in 0..z.len() {
                    let c = z[i].clamp(lo[i], hi[i]);
                    d2 += (z[i] - c).powi(2);
                }
                d2.sqrt()
            }
            TargetSet::Affine { matrix, offset } => {
                // distance to {Az = b} is the norm of the minimum-norm
                // correction, A^+ (Az - b)
                let a = to_matrix(matrix);
                let r = &a * DVector::from_column_slice(z) - DVector::from_column_slice(offset);
                let pinv = a
                    .clone()
                    .pseudo_inverse(1e-12)
                    .unwrap_or_else(|_| DMatrix::zeros(a.ncols(), a.nrows()));
                (pinv * r).norm()
            }
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.distance(z) <= tol
    }

    /// Quadratic penalty used by the transcription.
    pub fn penalty(&self, z: &[f64]) -> f64 {
        match self {
            TargetSet::Affine { matrix, offset } => {
                let a = to_matrix(matrix);
                let r = &a * DVector::from_column_slice(z) - DVector::from_column_slice(offset);
                r.norm_squared()
            }
            _ => self.distance(z).powi(2),
        }
    }

    /// Distance from `v` to the limiting normal cone `N_T(z)`; `z` must lie
    /// in the set to feasibility tolerance.
    pub fn normal_cone_residual(&self, z: &[f64], v: &[f64]) -> f64 {
        match self {
            TargetSet::FixedInitialFreeTerminal { x0 } => {
                // normal cone is R^n x {0}
                let n = x0.len();
                norm(&v[n..])
            }
            TargetSet::FixedBoth { .. } => 0.0,
            TargetSet::Box { lo, hi } => {
                let mut d2 = 0.0;
                for i in 0..z.len() {
                    let at_lo = (z[i] - lo[i]).abs() <= FEASIBILITY_TOL;
                    let at_hi = (z[i] - hi[i]).abs() <= FEASIBILITY_TOL;
                    let excess = if at_lo && at_hi {
                        0.0
                    } else if at_lo {
                        v[i].max(0.0)
                    } else if at_hi {
                        (-v[i]).max(0.0)
                    } else {
                        v[i].abs()
                    };
                    d2 += excess * excess;
                }
                d2.sqrt()
            }
            TargetSet::Affine { matrix, .. } => {
                // normal cone is the row space of the constraint matrix
                let a = to_matrix(matrix);
                let at = a.transpose();
                let vv = DVector::from_column_slice(v);
                let pinv = at.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(at.ncols(), at.nrows()));
                let coef = pinv * &vv;
                (at * coef - vv).norm()
            }
        }
    }
}

/// Initial set `C` for boundary-process mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSet {
    Point { x0: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Free,
}

impl InitialSet {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            InitialSet::Point { x0 } if x0.len() != n => {
                Err(Error::config("initial set point must have length n"))
            }
            InitialSet::Box { lo, hi } if lo.len() != n || hi.len() != n => {
                Err(Error::config("initial set bounds must have length n"))
            }
            _ => Ok(()),
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            InitialSet::Point { x0 } => norm_diff(x, x0),
            InitialSet::Box { lo, hi } => {
                let mut d2 = 0.0;
                for i in 0..x.len() {
                    d2 += (x[i] - x[i].clamp(lo[i], hi[i])).powi(2);
                }
                d2.sqrt()
            }
            InitialSet::Free => 0.0,
        }
    }

    pub fn normal_cone_residual(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            InitialSet::Point { .. } => 0.0,
            InitialSet::Box { lo, hi } => {
                let mut d2 = 0.0;
                for i in 0..x.len() {
                    let at_lo = (x[i] - lo[i]).abs() <= FEASIBILITY_TOL;
                    let at_hi = (x[i] - hi[i]).abs() <= FEASIBILITY_TOL;
                    let excess = if at_lo && at_hi {
                        0.0
                    } else if at_lo {
                        v[i].max(0.0)
                    } else if at_hi {
                        (-v[i]).max(0.0)
                    } else {
                        v[i].abs()
                    };
                    d2 += excess * excess;
                }
                d2.sqrt()
            }
            InitialSet::Free => norm(v),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|&c| c * c).sum::<f64>().sqrt()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_terminal_normal_cone() {
        let t = TargetSet::FixedInitialFreeTerminal { x0: vec![0.0] };
        // v = (p(0), -p(T) - lambda dPhi); only the terminal block counts
        assert_eq!(t.normal_cone_residual(&[0.0, 3.0], &[7.0, 0.0]), 0.0);
        assert_eq!(t.normal_cone_residual(&[0.0, 3.0], &[7.0, 2.0]), 2.0);
    }

    #[test]
    fn fixed_both_normal_cone_is_everything() {
        let t = TargetSet::FixedBoth { x0: vec![1.0], x_terminal: vec![2.0] };
        assert_eq!(t.normal_cone_residual(&[1.0, 2.0], &[5.0, -9.0]), 0.0);
        assert!(t.contains(&[1.0, 2.0], 1e-12));
        assert!(!t.contains(&[1.0, 2.1], 1e-8));
    }

    #[test]
    fn box_faces() {
        let t = TargetSet::Box { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] };
        // interior point: normal cone is {0}
        assert_eq!(t.normal_cone_residual(&[0.5, 0.5], &[0.2, 0.0]), 0.2);
        // lower face in coordinate 0: v0 <= 0 allowed
        assert_eq!(t.normal_cone_residual(&[0.0, 0.5], &[-3.0, 0.0]), 0.0);
        assert_eq!(t.normal_cone_residual(&[0.0, 0.5], &[3.0, 0.0]), 3.0);
        assert!((t.distance(&[1.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn periodic_affine_target() {
        // {x(0) = x(T)} in R^1: row (1, -1); normal cone = span{(1, -1)}
        let t = TargetSet::Affine { matrix: vec![vec![1.0, -1.0]], offset: vec![0.0] };
        assert!(t.contains(&[0.7, 0.7], 1e-10));
        assert!((t.distance(&[1.0, 0.0]) - (0.5f64).sqrt()).abs() < 1e-10);
        assert!(t.normal_cone_residual(&[0.7, 0.7], &[2.0, -2.0]) < 1e-10);
        // least-squares oracle for a generic v = (1, 1): projection onto
        // span{(1,-1)} is 0, so the residual is |v| = sqrt(2)
        let r = t.normal_cone_residual(&[0.7, 0.7], &[1.0, 1.0]);
        assert!((r - 2.0f64.sqrt()).abs() < 1e-10);
    }
}
