//! Numerical mountain pass by deformation of a ray path.
//!
//! The path from `0` to the end point `e` is the segment `{t e : 0 ≤ t ≤ 1}`,
//! sampled at `M + 1` points. Each iteration locates the path maximizer, refines
//! it along the ray, and moves the maximizer along a preconditioned descent
//! direction; the new path is the segment through the moved point. The step is
//! accepted by an Armijo test on the new path maximum, so the recorded path
//! maximum never increases.

use crate::config::SolverConfig;
use crate::energy::Problem;
use crate::grid::GridFunction;

use super::{
    abs_hessian_direction, add_interior, dot, finish_report, max_abs, Classification, HistoryEntry, SolverError,
    SolverReport, ARMIJO_C1,
};

const COLLAPSE_LIMIT: usize = 50;
const MIN_STEP: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct RayMax {
    t: f64,
    value: f64,
}

/// `d/dt I(t w)`.
fn slope(pb: &Problem, w: &GridFunction, t: f64) -> Result<f64, SolverError> {
    let g = pb.gradient(&w.scaled(t))?.values;
    Ok(dot(&g, w.interior()))
}

/// Maximizer of `t ↦ I(t w)` on `[lo, hi]` given `I'` changes sign from + to −
/// there; `None` when the bracket does not hold.
fn refine(pb: &Problem, w: &GridFunction, mut lo: f64, mut hi: f64, tol: f64) -> Result<Option<RayMax>, SolverError> {
    let mut slo = slope(pb, w, lo)?;
    let mut shi = slope(pb, w, hi)?;
    if !(slo > 0.0 && shi < 0.0) {
        return Ok(None);
    }
    // a residual tolerance along the ray, scaled to the size of w
    let stop = 1e-3 * tol * max_abs(w.interior()).max(1e-300);
    let mut side = 0i8;
    let mut t = 0.5 * (lo + hi);
    for iter in 0..200 {
        t = if iter % 4 == 3 { 0.5 * (lo + hi) } else { lo - slo * (hi - lo) / (shi - slo) };
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }
        let st = slope(pb, w, t)?;
        if st.abs() < stop || hi - lo < 1e-14 * hi {
            break;
        }
        if st > 0.0 {
            lo = t;
            slo = st;
            if side == 1 {
                shi *= 0.5;
            }
            side = 1;
        } else {
            hi = t;
            shi = st;
            if side == -1 {
                slo *= 0.5;
            }
            side = -1;
        }
    }
    Ok(Some(RayMax {
        t,
        value: pb.energy(&w.scaled(t))?.total,
    }))
}

/// Golden-section fallback on `[lo, hi]`.
fn golden(pb: &Problem, w: &GridFunction, mut lo: f64, mut hi: f64) -> Result<RayMax, SolverError> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let f = |t: f64| -> Result<f64, SolverError> { Ok(pb.energy(&w.scaled(t))?.total) };
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    while hi - lo > 1e-10 * hi {
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b)?;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(RayMax { t, value: f(t)? })
}

/// Path values on `t_j = j / M` and the maximizing index (ties to the smallest).
fn path_max(pb: &Problem, w: &GridFunction, m: usize) -> Result<(Vec<f64>, usize), SolverError> {
    let ts: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let vals = pb.ray_energies(w, &ts)?;
    let mut best = 0;
    for (j, v) in vals.iter().enumerate() {
        if *v > vals[best] {
            best = j;
        }
    }
    Ok((vals, best))
}

/// Ray maximum of `I(t w)` near `t = 1`; falls back to the sampled path.
fn ray_max_near_one(pb: &Problem, w: &GridFunction, m: usize, tol: f64) -> Result<Option<RayMax>, SolverError> {
    if let Some(r) = refine(pb, w, 0.8, 1.25, tol)? {
        return Ok(Some(r));
    }
    let end = w.scaled(2.0);
    let (vals, j) = path_max(pb, &end, m)?;
    if j == 0 || j == m {
        return Ok(None);
    }
    let _ = vals;
    let (lo, hi) = ((j - 1) as f64 / m as f64, (j + 1) as f64 / m as f64);
    let r = match refine(pb, &end, lo, hi, tol)? {
        Some(r) => r,
        None => golden(pb, &end, lo, hi)?,
    };
    Ok(Some(RayMax { t: 2.0 * r.t, value: r.value }))
}

/// Mountain-pass critical point from the path `0 → e`.
pub fn mountain_pass(pb: &Problem, e: &GridFunction, cfg: &SolverConfig) -> Result<SolverReport, SolverError> {
    let m = cfg.path_points;
    let tol = cfg.tol_residual;
    let mut w = e.clone();
    let mut history: Vec<HistoryEntry> = Vec::new();
    let mut collapse = 0usize;
    let mut carried: Option<RayMax> = None;
    let mut ubar = e.clone();
    let mut diagnostic = None;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let (vals, j) = path_max(pb, &w, m)?;
        if j == 0 || j == m || vals[m] >= 0.0 {
            if j == 0 || j == m {
                collapse += 1;
                if collapse >= COLLAPSE_LIMIT {
                    return Err(SolverError::PathCollapse(collapse));
                }
            }
            if j == 0 {
                w = w.scaled(0.5);
            } else {
                w = w.scaled(2.0);
            }
            carried = None;
            continue;
        }
        collapse = 0;
        let (lo, hi) = ((j - 1) as f64 / m as f64, (j + 1) as f64 / m as f64);
        let rm = match carried {
            Some(c) if c.t >= lo && c.t <= hi => c,
            _ => match refine(pb, &w, lo, hi, tol)? {
                Some(r) => r,
                None => golden(pb, &w, lo, hi)?,
            },
        };
        ubar = w.scaled(rm.t);
        let g = pb.gradient(&ubar)?.values;
        let res = max_abs(&g);
        history.push(HistoryEntry {
            value: rm.value,
            residual: res,
        });
        if res < tol {
            break;
        }

        let d = abs_hessian_direction(pb, &ubar, &g)?;
        let slope0 = dot(&g, &d);
        let mut step = 1.0;
        let mut next = None;
        while step > MIN_STEP {
            let cand = add_interior(&ubar, step, &d);
            if let Some(r) = ray_max_near_one(pb, &cand, m, tol)? {
                if r.value <= rm.value + ARMIJO_C1 * step * slope0 {
                    next = Some((cand, r));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, r)) = next else {
            diagnostic = Some("line search on the path maximum failed".to_string());
            break;
        };
        // keep the maximizer at the same relative position along the new path
        let ratio = 1.0 / rm.t;
        w = cand.scaled(r.t * ratio);
        carried = Some(RayMax {
            t: 1.0 / ratio,
            value: r.value,
        });
    }

    let mut report = finish_report(pb, ubar, iterations, Classification::Saddle, history, cfg, diagnostic)?;
    if report.critical_value < 0.0 {
        report.converged = false;
        report.diagnostic = Some(format!(
            "path maximum converged to a negative critical value {}",
            report.critical_value
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::tests::small_config;

    #[test]
    fn path_maximum_never_increases() {
        let cfg = small_config(64);
        let pb = Problem::from_config(&cfg).unwrap();
        let g = pb.default_geometry().unwrap();
        let e = pb.make_e_point(&pb.default_w0().unwrap(), g.rho).unwrap();
        let r = mountain_pass(&pb, &e, &cfg.solver).unwrap();
        assert!(r.converged, "{:?}", r.diagnostic);
        assert!(r.critical_value > 0.0);
        for w in r.history.windows(2) {
            assert!(w[1].value <= w[0].value * (1.0 + 1e-12), "{} -> {}", w[0].value, w[1].value);
        }
    }

    #[test]
    fn refine_finds_the_ray_maximum() {
        let cfg = small_config(64);
        let pb = Problem::from_config(&cfg).unwrap();
        let g = pb.default_geometry().unwrap();
        let w = pb.make_e_point(&pb.default_w0().unwrap(), g.rho).unwrap();
        let ts: Vec<f64> = (0..=400).map(|j| j as f64 / 400.0).collect();
        let vals = pb.ray_energies(&w, &ts).unwrap();
        let j = (0..vals.len()).max_by(|a, b| vals[*a].total_cmp(&vals[*b])).unwrap();
        assert!(j > 0 && j < 400);
        let r = refine(&pb, &w, ts[j - 1], ts[j + 1], 1e-8).unwrap().unwrap();
        assert!(r.value >= vals[j] - 1e-12);
        assert!(slope(&pb, &w, r.t).unwrap().abs() < 1e-6);
    }
}
