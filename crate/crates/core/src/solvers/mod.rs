//! Critical-point solvers: the mountain-pass saddle, the negative-energy
//! minimizer in a ball, the λ sweep, and the deflated multi-solution search.

mod ball;
mod deflation;
mod mountain_pass;
mod sweep;

pub use ball::ball_minimize;
pub use deflation::{deflated_search, DeflationOptions};
pub use mountain_pass::mountain_pass;
pub use sweep::{lambda_sweep, limit_solve, solve_both, solve_both_from, SweepRecord, TwoSolutions};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SolverConfig;
use crate::energy::{EnergyError, Problem};
use crate::grid::GridFunction;

/// `|Δu|` and `|u|` floor used when assembling Hessians.
pub(crate) const HESSIAN_FLOOR: f64 = 1e-10;
pub(crate) const ARMIJO_C1: f64 = 1e-4;
/// Converged iterates are polished by Newton to this fraction of `tol_residual`,
/// so small-amplitude solutions still resolve every term of the energy.
pub(crate) const POLISH_FACTOR: f64 = 1e-3;
const POLISH_STEPS: usize = 30;

/// Newton polish that is kept only when it lowers the residual and `keep` accepts
/// it. Polish steps are not descent steps, so they stay out of the history.
pub(crate) fn polish_if(
    pb: &Problem,
    u: GridFunction,
    tol: f64,
    keep: impl Fn(&GridFunction) -> Result<bool, SolverError>,
) -> Result<(GridFunction, usize), SolverError> {
    let before = pb.residual(&u)?;
    let (v, res, steps) = newton_polish(pb, &u, POLISH_FACTOR * tol, POLISH_STEPS, &mut Vec::new())?;
    if steps > 0 && res < before && keep(&v)? {
        Ok((v, steps))
    } else {
        Ok((u, 0))
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("path maximizer stayed at an end point for {0} consecutive iterations")]
    PathCollapse(usize),
    #[error("iterate stayed on the sphere of radius {rho} for {iterations} consecutive iterations")]
    BoundaryTrap { rho: f64, iterations: usize },
    #[error("{restarts} consecutive restarts reproduced known solutions")]
    SearchExhausted { restarts: usize, found: Vec<SolverReport> },
    #[error("{0}")]
    NotDistinct(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Saddle,
    BallMinimizer,
    Deflated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub solution: GridFunction,
    pub critical_value: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub classification: Classification,
    pub history: Vec<HistoryEntry>,
    pub converged: bool,
    /// `‖u‖_λ` of the solution.
    pub norm: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic: Option<String>,
}

pub(crate) fn to_dmatrix(n: usize, data: Vec<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &data)
}

/// Preconditioned direction `-|H|^{-1} g`, where `|H|` has the eigenvalues of the
/// energy Hessian replaced by their absolute values (floored relative to the largest).
pub(crate) fn abs_hessian_direction(pb: &Problem, u: &GridFunction, g: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = g.len();
    let h = to_dmatrix(n, pb.hessian(u, HESSIAN_FLOOR)?);
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-10 * top.max(f64::MIN_POSITIVE);
    let gv = DVector::from_column_slice(g);
    let coeffs = eig.eigenvectors.transpose() * gv;
    let scaled = DVector::from_iterator(
        n,
        coeffs
            .iter()
            .zip(eig.eigenvalues.iter())
            .map(|(c, l)| -c / l.abs().max(floor)),
    );
    Ok((eig.eigenvectors * scaled).iter().copied().collect())
}

/// Newton step `-H^{-1} g` (LU), or `None` when `H` is singular.
pub(crate) fn newton_direction(pb: &Problem, u: &GridFunction, g: &[f64]) -> Result<Option<Vec<f64>>, SolverError> {
    let n = g.len();
    let h = to_dmatrix(n, pb.hessian(u, HESSIAN_FLOOR)?);
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    Ok(h.lu().solve(&rhs).map(|d| d.iter().copied().collect()))
}

pub(crate) fn add_interior(u: &GridFunction, t: f64, d: &[f64]) -> GridFunction {
    let mut out = u.clone();
    for (v, di) in out.values[1..u.grid.cells].iter_mut().zip(d) {
        *v += t * di;
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Newton iteration on `∇I(u) = 0` with backtracking on `‖∇I‖₂`. Returns the
/// final iterate, its residual, and the number of Newton steps taken.
pub(crate) fn newton_polish(
    pb: &Problem,
    u0: &GridFunction,
    tol: f64,
    max_steps: usize,
    history: &mut Vec<HistoryEntry>,
) -> Result<(GridFunction, f64, usize), SolverError> {
    let mut u = u0.clone();
    let mut g = pb.gradient(&u)?.values;
    let mut res = max_abs(&g);
    let mut steps = 0;
    while res >= tol && steps < max_steps {
        let Some(d) = newton_direction(pb, &u, &g)? else { break };
        let merit = dot(&g, &g);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-6 {
            let cand = add_interior(&u, t, &d);
            let gc = pb.gradient(&cand)?.values;
            if dot(&gc, &gc) < (1.0 - ARMIJO_C1 * t) * merit {
                accepted = Some((cand, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, gc)) = accepted else { break };
        u = cand;
        g = gc;
        res = max_abs(&g);
        steps += 1;
        history.push(HistoryEntry {
            value: pb.energy(&u)?.total,
            residual: res,
        });
    }
    Ok((u, res, steps))
}

pub(crate) fn finish_report(
    pb: &Problem,
    u: GridFunction,
    iterations: usize,
    classification: Classification,
    history: Vec<HistoryEntry>,
    cfg: &SolverConfig,
    diagnostic: Option<String>,
) -> Result<SolverReport, SolverError> {
    let critical_value = pb.energy(&u)?.total;
    let residual_norm = pb.residual(&u)?;
    let norm = pb.norm(&u)?;
    Ok(SolverReport {
        converged: residual_norm < cfg.tol_residual,
        solution: u,
        critical_value,
        residual_norm,
        iterations,
        classification,
        history,
        norm,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::tests::small_config;

    #[test]
    fn abs_hessian_direction_descends() {
        let cfg = small_config(64);
        let pb = Problem::from_config(&cfg).unwrap();
        let u = pb.default_w0().unwrap().scaled(5.0);
        let g = pb.gradient(&u).unwrap().values;
        let d = abs_hessian_direction(&pb, &u, &g).unwrap();
        assert!(dot(&g, &d) < 0.0);
    }

    #[test]
    fn polish_converges_from_a_nearby_point() {
        let cfg = small_config(64);
        let pb = Problem::from_config(&cfg).unwrap();
        let g = pb.default_geometry().unwrap();
        let e = pb.make_e_point(&pb.default_w0().unwrap(), g.rho).unwrap();
        let r = mountain_pass(&pb, &e, &cfg.solver).unwrap();
        let bumped = r.solution.axpy(1e-3, &pb.default_w0().unwrap());
        let (u, res, _) = newton_polish(&pb, &bumped, 1e-9, 30, &mut Vec::new()).unwrap();
        assert!(res < 1e-9, "{res}");
        assert!(u.l2_distance(&r.solution) < 1e-4);
    }
}
