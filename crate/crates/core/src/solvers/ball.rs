//! Projected descent for the negative-energy minimizer inside `B_ρ`.

use crate::config::SolverConfig;
use crate::energy::Problem;
use crate::grid::GridFunction;

use super::{
    abs_hessian_direction, add_interior, dot, finish_report, max_abs, polish_if, Classification, HistoryEntry, SolverError,
    SolverReport, ARMIJO_C1,
};

const TRAP_LIMIT: usize = 100;
const STALL_WINDOW: usize = 20;
const STALL_DECREASE: f64 = 1e-14;
const MAX_START_HALVINGS: usize = 60;

/// Minimize `I_λ` over the closed ball `‖u‖_λ ≤ ρ` starting from `τ w₀` with
/// `τ = min(τ₀, ρ/‖w₀‖_λ)/2`.
pub fn ball_minimize(
    pb: &Problem,
    rho: f64,
    tau0: f64,
    w0: &GridFunction,
    cfg: &SolverConfig,
) -> Result<SolverReport, SolverError> {
    let w_norm = pb.norm(w0)?;
    let mut tau = 0.5 * tau0.min(rho / w_norm);
    let mut diagnostic = None;
    if pb.beta == 0.0 {
        let u = w0.scaled(tau);
        let mut report = finish_report(pb, u, 0, Classification::BallMinimizer, Vec::new(), cfg, None)?;
        report.converged = false;
        report.diagnostic = Some("EmptyNegativeCone: beta = 0 leaves no negative-energy start".into());
        return Ok(report);
    }
    let mut u = w0.scaled(tau);
    let mut value = pb.energy(&u)?.total;
    let mut halvings = 0;
    while !(value < 0.0) && halvings < MAX_START_HALVINGS {
        tau *= 0.5;
        halvings += 1;
        u = w0.scaled(tau);
        value = pb.energy(&u)?.total;
    }
    if !(value < 0.0) {
        let mut report = finish_report(pb, u, 0, Classification::BallMinimizer, Vec::new(), cfg, None)?;
        report.converged = false;
        report.diagnostic = Some("EmptyNegativeCone: no negative energy along the start ray".into());
        return Ok(report);
    }
    if halvings > 0 {
        diagnostic = Some(format!("start scale halved {halvings} times to reach negative energy"));
    }
    descend(pb, u, rho, cfg, diagnostic)
}

/// Projected preconditioned descent from a negative-energy point inside the ball.
pub(crate) fn descend(
    pb: &Problem,
    mut u: GridFunction,
    rho: f64,
    cfg: &SolverConfig,
    mut diagnostic: Option<String>,
) -> Result<SolverReport, SolverError> {
    let tol = cfg.tol_residual;
    let mut value = pb.energy(&u)?.total;
    let mut history = Vec::new();
    let mut on_sphere = 0usize;
    let mut iterations = 0;
    loop {
        let g = pb.gradient(&u)?.values;
        let res = max_abs(&g);
        history.push(HistoryEntry { value, residual: res });
        if res < tol || iterations >= cfg.max_iters {
            break;
        }
        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW].value;
            if old - value < STALL_DECREASE {
                diagnostic = Some("stalled: energy decrease below 1e-14 over 20 iterations".into());
                break;
            }
        }
        iterations += 1;
        let mut d = abs_hessian_direction(pb, &u, &g)?;
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let mut cand = add_interior(&u, step, &d);
            let mut projected = false;
            let n = pb.norm(&cand)?;
            if n > rho {
                cand = cand.scaled(rho / n);
                projected = true;
            }
            let cv = pb.energy(&cand)?.total;
            if cv <= value + ARMIJO_C1 * step * slope {
                accepted = Some((cand, cv, projected));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cv, projected)) = accepted else {
            diagnostic = Some("line search failed".into());
            break;
        };
        u = cand;
        value = cv;
        on_sphere = if projected { on_sphere + 1 } else { 0 };
        if on_sphere >= TRAP_LIMIT {
            return Err(SolverError::BoundaryTrap {
                rho,
                iterations: on_sphere,
            });
        }
    }
    let (u, polished) = polish_if(pb, u, tol, |v| {
        Ok(pb.energy(v)?.total < 0.0 && pb.norm(v)? < rho)
    })?;
    let iterations = iterations + polished;
    let mut report = finish_report(pb, u, iterations, Classification::BallMinimizer, history, cfg, diagnostic)?;
    if report.converged && !(report.critical_value < 0.0 && report.norm < rho) {
        report.converged = false;
        report.diagnostic = Some(format!(
            "minimizer has value {} and norm {} (rho = {rho})",
            report.critical_value, report.norm
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::tests::small_config;

    #[test]
    fn descent_values_never_increase() {
        let cfg = small_config(64);
        let pb = Problem::from_config(&cfg).unwrap();
        let g = pb.default_geometry().unwrap();
        let r = ball_minimize(&pb, g.rho, g.tau0, &pb.default_w0().unwrap(), &cfg.solver).unwrap();
        assert!(r.converged, "{:?}", r.diagnostic);
        assert!(r.critical_value < 0.0 && r.norm < g.rho);
        for w in r.history.windows(2) {
            assert!(w[1].value <= w[0].value, "{} -> {}", w[0].value, w[1].value);
        }
    }

    #[test]
    fn zero_beta_reports_empty_cone() {
        let cfg = small_config(64);
        let pb = Problem::from_config(&cfg).unwrap().with_parameters(cfg.alpha, 0.0, cfg.lambda);
        let r = ball_minimize(&pb, 1.0, 0.1, &pb.default_w0().unwrap(), &cfg.solver).unwrap();
        assert!(!r.converged);
        assert!(r.diagnostic.unwrap().starts_with("EmptyNegativeCone"));
    }
}
