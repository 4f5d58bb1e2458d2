//! Both critical points for one problem, the λ sweep, and the limit problem.

use serde::{Deserialize, Serialize};

use crate::config::SolverConfig;
use crate::energy::{GeometryConstants, Problem};
use crate::grid::GridFunction;
use crate::quadrature::GaussRule;

use super::ball::descend;
use super::{ball_minimize, mountain_pass, SolverError, SolverReport};

/// Distinctness threshold for the pair of solutions.
pub const PAIR_DISTINCT_L2: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSolutions {
    pub lambda: f64,
    pub geometry: GeometryConstants,
    /// Mountain-pass solution `u¹`.
    pub saddle: SolverReport,
    /// Negative-energy solution `u²`.
    pub minimizer: SolverReport,
    /// `‖u¹ − u²‖_{L²}`.
    pub distance: f64,
    /// `I(u²) < 0 < I(u¹)`, the distance exceeds the threshold, and both converged.
    pub ok: bool,
}

/// Mountain pass and ball minimizer from the default start points.
pub fn solve_both(pb: &Problem, cfg: &SolverConfig) -> Result<TwoSolutions, SolverError> {
    solve_both_from(pb, cfg, None)
}

/// As [`solve_both`], warm-started from a previous pair when given.
pub fn solve_both_from(
    pb: &Problem,
    cfg: &SolverConfig,
    previous: Option<&TwoSolutions>,
) -> Result<TwoSolutions, SolverError> {
    let geometry = pb.cached_geometry()?;
    let w0 = pb.default_w0()?;
    let saddle = match previous {
        Some(prev) if prev.saddle.converged => {
            let e = prev.saddle.solution.scaled(2.0);
            mountain_pass(pb, &e, cfg)?
        }
        _ => {
            let e = pb.make_e_point(&w0, geometry.rho)?;
            mountain_pass(pb, &e, cfg)?
        }
    };
    let warm = previous.map(|p| &p.minimizer.solution).filter(|u| {
        pb.energy(u).map(|e| e.total < 0.0).unwrap_or(false)
            && pb.norm(u).map(|n| n < geometry.rho).unwrap_or(false)
    });
    let minimizer = match warm {
        Some(u) => descend(pb, u.clone(), geometry.rho, cfg, None)?,
        None => ball_minimize(pb, geometry.rho, geometry.tau0, &w0, cfg)?,
    };
    Ok(pair(pb.lambda, geometry, saddle, minimizer))
}

fn pair(lambda: f64, geometry: GeometryConstants, saddle: SolverReport, minimizer: SolverReport) -> TwoSolutions {
    let distance = saddle.solution.l2_distance(&minimizer.solution);
    let ok = saddle.converged
        && minimizer.converged
        && minimizer.critical_value < 0.0
        && saddle.critical_value > 0.0
        && distance > PAIR_DISTINCT_L2;
    TwoSolutions {
        lambda,
        geometry,
        saddle,
        minimizer,
        distance,
        ok,
    }
}

/// Both solutions of the limit problem on `Ω₀`.
pub fn limit_solve(pb: &Problem, cfg: &SolverConfig) -> Result<(Problem, TwoSolutions), SolverError> {
    let lim = pb.limit_problem()?;
    let sol = solve_both(&lim, cfg)?;
    Ok((lim, sol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub result: Option<TwoSolutions>,
    /// `∫ V |u|²` for the saddle and the minimizer.
    pub potential_mass: Option<[f64; 2]>,
    /// L² distance on `Ω₀` to the limit solution of the same branch (up to sign).
    pub distance_to_limit: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// `min(‖u − v‖, ‖u + v‖)` in `L²(Ω₀)` for `v` on a grid over `Ω₀`.
pub fn distance_on_subdomain(u: &GridFunction, v: &GridFunction) -> f64 {
    let rule = GaussRule::new(4);
    let h = v.grid.h();
    let (mut minus, mut plus) = (0.0, 0.0);
    for cell in 0..v.grid.cells {
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let x = v.grid.point(cell, *t);
            let (a, b) = (u.eval(x), v.at(cell, *t));
            minus += h * w * (a - b) * (a - b);
            plus += h * w * (a + b) * (a + b);
        }
    }
    minus.min(plus).sqrt()
}

/// Warm-started solves over ascending `lambdas`, compared against the limit problem.
pub fn lambda_sweep(pb: &Problem, cfg: &SolverConfig, lambdas: &[f64]) -> Result<Vec<SweepRecord>, SolverError> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| !(w[0] < w[1])) || lambdas[0] <= 0.0 {
        return Err(SolverError::NotDistinct(
            "lambda list must be nonempty, positive and strictly ascending".into(),
        ));
    }
    let (_, limit) = limit_solve(pb, cfg)?;
    let mut records = Vec::with_capacity(lambdas.len());
    let mut previous: Option<TwoSolutions> = None;
    for &lambda in lambdas {
        let pl = pb.with_parameters(pb.alpha, pb.beta, lambda);
        match solve_both_from(&pl, cfg, previous.as_ref()) {
            Ok(sol) => {
                let potential_mass = [
                    pl.potential_mass(&sol.saddle.solution),
                    pl.potential_mass(&sol.minimizer.solution),
                ];
                let distance_to_limit = [
                    distance_on_subdomain(&sol.saddle.solution, &limit.saddle.solution),
                    distance_on_subdomain(&sol.minimizer.solution, &limit.minimizer.solution),
                ];
                records.push(SweepRecord {
                    lambda,
                    result: Some(sol.clone()),
                    potential_mass: Some(potential_mass),
                    distance_to_limit: Some(distance_to_limit),
                    error: None,
                });
                previous = Some(sol);
            }
            Err(e) => records.push(SweepRecord {
                lambda,
                result: None,
                potential_mass: None,
                distance_to_limit: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(records)
}
