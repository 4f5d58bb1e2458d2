//! Deflated Newton search for several distinct critical points.
//!
//! Known solutions `u_k` (and `0`) are removed from the residual by the factor
//! `M(u) = Π (1 + 1/‖u − u_k‖²)(1 + 1/‖u + u_k‖²)`, with `L²` distances. Both signs
//! are deflated because the energy is even.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::energy::Problem;
use crate::grid::GridFunction;
use crate::spaces::dictionary_member;

use super::{
    dot, finish_report, max_abs, newton_direction, newton_polish, Classification, HistoryEntry, SolverError,
    SolverReport, ARMIJO_C1,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeflationOptions {
    /// Newton steps per start.
    pub max_newton: usize,
    /// Consecutive fruitless starts before giving up.
    pub repeat_limit: usize,
    /// Solutions closer than this in `L²` (up to sign) are the same.
    pub distinct_l2: f64,
    /// Starts tried in total.
    pub max_starts: usize,
}

impl Default for DeflationOptions {
    fn default() -> Self {
        DeflationOptions {
            max_newton: 100,
            repeat_limit: 20,
            distinct_l2: 1e-4,
            max_starts: 200,
        }
    }
}

/// `(u − v)ᵀ Mass (u − v)` and `Mass (u − v)` on interior nodes, P1 mass matrix.
fn mass_distance(u: &GridFunction, v: &GridFunction, sign: f64) -> (f64, Vec<f64>) {
    let h = u.grid.h();
    let diff: Vec<f64> = u.values.iter().zip(&v.values).map(|(a, b)| a - sign * b).collect();
    let n = diff.len();
    let mv: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 2.0 * h / 3.0 * diff[i];
            if i > 0 {
                s += h / 6.0 * diff[i - 1];
            }
            if i + 1 < n {
                s += h / 6.0 * diff[i + 1];
            }
            s
        })
        .collect();
    let d2 = dot(&diff, &mv);
    (d2, mv[1..n - 1].to_vec())
}

/// `ln M(u)` and `∇ ln M(u)` over the deflation set.
fn deflation(u: &GridFunction, known: &[GridFunction]) -> (f64, Vec<f64>) {
    let mut ln_m = 0.0;
    let mut grad = vec![0.0; u.grid.interior_count()];
    let zero = GridFunction::zeros(u.grid);
    let mut add = |v: &GridFunction, sign: f64| {
        let (d2, mv) = mass_distance(u, v, sign);
        let d2 = d2.max(1e-300);
        ln_m += (1.0 + 1.0 / d2).ln();
        let c = -2.0 / (d2 * d2 + d2);
        for (g, m) in grad.iter_mut().zip(&mv) {
            *g += c * m;
        }
    };
    add(&zero, 1.0);
    for v in known {
        add(v, 1.0);
        add(v, -1.0);
    }
    (ln_m, grad)
}

fn residual_merit(g: &[f64], ln_m: f64) -> f64 {
    ln_m + 0.5 * dot(g, g).ln()
}

/// Deflated Newton from `u0`; `None` when it fails to reach the tolerance.
fn deflated_newton(
    pb: &Problem,
    u0: &GridFunction,
    known: &[GridFunction],
    tol: f64,
    opts: &DeflationOptions,
    history: &mut Vec<HistoryEntry>,
) -> Result<Option<(GridFunction, usize)>, SolverError> {
    let mut u = u0.clone();
    let mut g = pb.gradient(&u)?.values;
    for step in 0..opts.max_newton {
        let res = max_abs(&g);
        if res < tol {
            return Ok(Some((u, step)));
        }
        let Some(delta) = newton_direction(pb, &u, &g)? else {
            return Ok(None);
        };
        let (ln_m, eta) = deflation(&u, known);
        let denom = 1.0 - dot(&eta, &delta);
        let scale = if denom.abs() > 1e-12 { 1.0 / denom } else { 1.0 };
        let d: Vec<f64> = delta.iter().map(|v| v * scale).collect();
        let merit = residual_merit(&g, ln_m);
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let cand = super::add_interior(&u, t, &d);
            let gc = pb.gradient(&cand)?.values;
            let (lm, _) = deflation(&cand, known);
            if residual_merit(&gc, lm) <= merit + (1.0 - ARMIJO_C1 * t).ln() {
                accepted = Some((cand, gc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, gc)) = accepted else {
            return Ok(None);
        };
        u = cand;
        g = gc;
        history.push(HistoryEntry {
            value: pb.energy(&u)?.total,
            residual: max_abs(&g),
        });
        if !u.values.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
    }
    Ok(if max_abs(&g) < tol {
        Some((u, opts.max_newton))
    } else {
        None
    })
}

/// Ray scales where `t ↦ I(t φ)` has a local minimum or maximum on a log grid.
fn ray_scales(pb: &Problem, phi: &GridFunction) -> Result<Vec<f64>, SolverError> {
    let ts: Vec<f64> = (0..=120).map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 120.0)).collect();
    let vals = pb.ray_energies(phi, &ts)?;
    let mut out = Vec::new();
    for j in 1..ts.len() - 1 {
        let (a, b, c) = (vals[j - 1], vals[j], vals[j + 1]);
        if (b < a && b <= c) || (b > a && b >= c) {
            out.push(ts[j]);
        }
    }
    Ok(out)
}

/// Start points: sine modes at their ray extrema, then seeded random combinations.
struct Starts<'a> {
    pb: &'a Problem,
    queue: Vec<GridFunction>,
    mode: usize,
    rng: ChaCha8Rng,
    basis: Vec<GridFunction>,
}

impl<'a> Starts<'a> {
    fn new(pb: &'a Problem, seed: u64) -> Self {
        Starts {
            pb,
            queue: Vec::new(),
            mode: 15,
            rng: ChaCha8Rng::seed_from_u64(seed),
            basis: (15..20).map(|i| dictionary_member(pb.grid, i)).collect(),
        }
    }

    fn next(&mut self) -> Result<GridFunction, SolverError> {
        loop {
            if !self.queue.is_empty() {
                return Ok(self.queue.remove(0));
            }
            if self.mode < 19 {
                let phi = dictionary_member(self.pb.grid, self.mode);
                self.mode += 1;
                for t in ray_scales(self.pb, &phi)? {
                    self.queue.push(phi.scaled(t));
                }
                continue;
            }
            let mut phi = GridFunction::zeros(self.pb.grid);
            for b in &self.basis {
                phi = phi.axpy(self.rng.gen_range(-1.0..1.0), b);
            }
            let scales = ray_scales(self.pb, &phi)?;
            if !scales.is_empty() {
                let t = scales[self.rng.gen_range(0..scales.len())];
                return Ok(phi.scaled(t));
            }
        }
    }
}

fn is_new(u: &GridFunction, known: &[GridFunction], min_l2: f64) -> bool {
    u.l2_norm() > min_l2
        && known
            .iter()
            .all(|v| u.l2_distance(v).min(u.axpy(1.0, v).l2_norm()) > min_l2)
}

/// Up to `count` distinct nontrivial critical points, sorted by critical value.
pub fn deflated_search(
    pb: &Problem,
    count: usize,
    cfg: &SolverConfig,
    opts: &DeflationOptions,
) -> Result<Vec<SolverReport>, SolverError> {
    let mut starts = Starts::new(pb, cfg.seed);
    let mut known: Vec<GridFunction> = Vec::new();
    let mut reports: Vec<SolverReport> = Vec::new();
    let mut repeats = 0;
    for _ in 0..opts.max_starts {
        if reports.len() >= count {
            break;
        }
        let start = starts.next()?;
        let mut history = Vec::new();
        let found = deflated_newton(pb, &start, &known, cfg.tol_residual, opts, &mut history)?;
        let mut fresh = false;
        if let Some((u, steps)) = found {
            // clean up without deflation so the residual refers to the energy alone
            let (u, _, polish) = newton_polish(pb, &u, 0.1 * cfg.tol_residual, 20, &mut history)?;
            if is_new(&u, &known, opts.distinct_l2) {
                let report = finish_report(pb, u.clone(), steps + polish, Classification::Deflated, history, cfg, None)?;
                if report.converged {
                    known.push(u);
                    reports.push(report);
                    fresh = true;
                }
            }
        }
        if fresh {
            repeats = 0;
        } else {
            repeats += 1;
            if repeats >= opts.repeat_limit {
                break;
            }
        }
    }
    sort_and_collapse(&mut reports);
    if reports.len() < count {
        return Err(SolverError::SearchExhausted {
            restarts: repeats,
            found: reports,
        });
    }
    Ok(reports)
}

/// Ascending by critical value; equal values within `1e-12` relative keep the first.
fn sort_and_collapse(reports: &mut Vec<SolverReport>) {
    reports.sort_by(|a, b| a.critical_value.total_cmp(&b.critical_value));
    reports.dedup_by(|b, a| {
        (a.critical_value - b.critical_value).abs() <= 1e-12 * a.critical_value.abs().max(1e-300)
            && a.solution.l2_distance(&b.solution).min(a.solution.axpy(1.0, &b.solution).l2_norm()) <= 1e-4
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn deflation_gradient_matches_differences() {
        let grid = Grid::new(0.0, 1.0, 16).unwrap();
        let u = GridFunction::from_fn(grid, true, |x| (3.0 * x).sin() * x * (1.0 - x));
        let v = GridFunction::from_fn(grid, true, |x| x * (1.0 - x));
        let known = vec![v];
        let (_, g) = deflation(&u, &known);
        for (i, gi) in g.iter().enumerate() {
            let eps = 1e-6;
            let mut e = vec![0.0; g.len()];
            e[i] = eps;
            let up = super::super::add_interior(&u, 1.0, &e);
            let dn = super::super::add_interior(&u, -1.0, &e);
            let fd = (deflation(&up, &known).0 - deflation(&dn, &known).0) / (2.0 * eps);
            assert!((fd - gi).abs() < 1e-5 * (1.0 + gi.abs()), "node {i}: {fd} vs {gi}");
        }
    }

    #[test]
    fn mass_distance_is_l2() {
        let grid = Grid::new(0.0, 2.0, 32).unwrap();
        let u = GridFunction::from_fn(grid, true, |x| x * (2.0 - x));
        let z = GridFunction::zeros(grid);
        let (d2, _) = mass_distance(&u, &z, 1.0);
        assert!((d2.sqrt() - u.l2_norm()).abs() < 1e-12);
    }
}
