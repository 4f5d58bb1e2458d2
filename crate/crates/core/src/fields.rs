//! Exponent fields, the potential, and sampled checks of the standing hypotheses.
//!
//! Every check here is a deterministic grid scan. Bounds such as `p⁻`/`p⁺` are
//! estimates at a recorded resolution, and every failed check carries the
//! sampled point (or pair, or triple) where the inequality broke.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, EvalError, Expr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("field `{name}`: {source}")]
    Parse { name: String, source: ParseError },
    #[error("field `{name}` must depend on x only, but references y")]
    Arity { name: String },
    #[error("field `{name}` failed to evaluate at {point:?}: {source}")]
    Eval {
        name: String,
        point: Vec<f64>,
        source: EvalError,
    },
    #[error("scan resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("potential vanishes nowhere on the scan grid (tolerance {zeta_tol:e})")]
    EmptyZeroSet { zeta_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arity {
    One,
    Two,
}

/// Grid-scan estimate of `ess inf` / `ess sup`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
    pub resolution: usize,
}

/// A parsed, bounded exponent field on `Ω = [a, b]` (or `Ω × Ω`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentField {
    pub name: String,
    pub source: String,
    pub expr: Expr,
    pub arity: Arity,
    pub domain: (f64, f64),
    pub bounds: Bounds,
    constant: Option<f64>,
}

pub const DEFAULT_SCAN_RESOLUTION: usize = 257;

fn scan_points(lo: f64, hi: f64, resolution: usize) -> Vec<f64> {
    let n = resolution - 1;
    (0..resolution)
        .map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 })
        .collect()
}

impl ExponentField {
    pub fn parse(
        name: &str,
        source: &str,
        arity: Arity,
        domain: (f64, f64),
        resolution: usize,
    ) -> Result<Self, FieldError> {
        let expr = expr::parse(source).map_err(|source| FieldError::Parse {
            name: name.to_string(),
            source,
        })?;
        if arity == Arity::One && expr.uses_y() {
            return Err(FieldError::Arity {
                name: name.to_string(),
            });
        }
        let constant = if expr.free_vars().is_empty() {
            expr.eval(0.0, Some(0.0)).ok()
        } else {
            None
        };
        let mut field = ExponentField {
            name: name.to_string(),
            source: source.to_string(),
            expr,
            arity,
            domain,
            bounds: Bounds {
                min: f64::NAN,
                max: f64::NAN,
                resolution,
            },
            constant,
        };
        let (min, max) = field.infer_bounds(resolution)?;
        field.bounds = Bounds {
            min,
            max,
            resolution,
        };
        Ok(field)
    }

    /// Constant field, mostly for tests and oracles.
    pub fn constant(name: &str, value: f64, arity: Arity, domain: (f64, f64)) -> Self {
        Self::parse(name, &format!("{value:?}"), arity, domain, 2).expect("literal parses")
    }

    pub fn try_value(&self, x: f64, y: f64) -> Result<f64, FieldError> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        self.expr.eval(x, Some(y)).map_err(|source| FieldError::Eval {
            name: self.name.clone(),
            point: match self.arity {
                Arity::One => vec![x],
                Arity::Two => vec![x, y],
            },
            source,
        })
    }

    /// Value at `x` (one-variable field) or `(x, y)`.
    ///
    /// Panics on evaluation failure; fields are scanned on construction and
    /// kernels only evaluate inside the scanned region or its projection.
    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self.constant {
            Some(c) => c,
            None => self
                .try_value(x, y)
                .unwrap_or_else(|e| panic!("exponent field evaluation failed: {e}")),
        }
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.value(x, x)
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// Min and max over a uniform grid with `resolution` points per axis.
    pub fn infer_bounds(&self, resolution: usize) -> Result<(f64, f64), FieldError> {
        if resolution < 2 {
            return Err(FieldError::Resolution(resolution));
        }
        let pts = scan_points(self.domain.0, self.domain.1, resolution);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        match self.arity {
            Arity::One => {
                for &x in &pts {
                    let v = self.try_value(x, x)?;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            Arity::Two => {
                for &x in &pts {
                    for &y in &pts {
                        let v = self.try_value(x, y)?;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
        Ok((lo, hi))
    }

    pub fn min(&self) -> f64 {
        self.bounds.min
    }

    pub fn max(&self) -> f64 {
        self.bounds.max
    }

    /// Same expression on a different domain (bounds re-scanned).
    pub fn on_domain(&self, domain: (f64, f64)) -> Result<Self, FieldError> {
        Self::parse(&self.name, &self.source, self.arity, domain, self.bounds.resolution)
    }
}

/// The potential `V` with its extracted zero set.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub field: ExponentField,
    pub zero_set: Vec<(f64, f64)>,
    pub omega0: Option<(f64, f64)>,
    pub zeta_tol: f64,
}

pub const DEFAULT_ZETA_TOL: f64 = 1e-12;

impl Potential {
    /// Wraps `field` and extracts its zero set; an empty zero set is kept (and
    /// reported by the hypothesis check) rather than treated as an error.
    pub fn new(field: ExponentField, zeta_tol: f64, resolution: usize) -> Result<Self, FieldError> {
        let (zero_set, omega0) = match extract_zero_set(&field, zeta_tol, resolution) {
            Ok((j, o)) => (j, Some(o)),
            Err(FieldError::EmptyZeroSet { .. }) => (Vec::new(), None),
            Err(e) => return Err(e),
        };
        Ok(Potential {
            field,
            zero_set,
            omega0,
            zeta_tol,
        })
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        self.field.at(x)
    }
}

/// Maximal grid intervals where `V ≤ zeta_tol`, and the middle third of the
/// longest one.
pub fn extract_zero_set(
    v: &ExponentField,
    zeta_tol: f64,
    resolution: usize,
) -> Result<(Vec<(f64, f64)>, (f64, f64)), FieldError> {
    if resolution < 2 {
        return Err(FieldError::Resolution(resolution));
    }
    let pts = scan_points(v.domain.0, v.domain.1, resolution);
    let mut runs = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = pts[0];
    for &x in &pts {
        let zero = v.try_value(x, x)? <= zeta_tol;
        match (zero, start) {
            (true, None) => start = Some(x),
            (false, Some(s)) => {
                runs.push((s, last));
                start = None;
            }
            _ => {}
        }
        last = x;
    }
    if let Some(s) = start {
        runs.push((s, last));
    }
    // longest run; ties go to the leftmost
    let Some(&(ja, jb)) = runs
        .iter()
        .fold(None::<&(f64, f64)>, |best, r| match best {
            Some(b) if b.1 - b.0 >= r.1 - r.0 => Some(b),
            _ => Some(r),
        })
    else {
        return Err(FieldError::EmptyZeroSet { zeta_tol });
    };
    let third = (jb - ja) / 3.0;
    Ok((runs, (ja + third, jb - third)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisEntry {
    pub name: String,
    pub pass: bool,
    /// Sampled point, pair or triple where the inequality fails.
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    pub p: Bounds,
    pub q: Bounds,
    pub s: Bounds,
    pub k: Bounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub dimension: usize,
    pub resolution: usize,
    pub bounds: FieldBounds,
    pub log_hoelder_constant: f64,
    pub zero_set: Vec<(f64, f64)>,
    pub omega0: Option<(f64, f64)>,
    pub entries: Vec<HypothesisEntry>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&HypothesisEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn failures(&self) -> Vec<&HypothesisEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }
}

const SYMMETRY_TOL: f64 = 1e-12;
const LOG_HOELDER_DRIFT: f64 = 0.05;

struct Recorder(Vec<HypothesisEntry>);

impl Recorder {
    fn push(&mut self, name: &str, witness: Option<Vec<f64>>, detail: String) {
        self.0.push(HypothesisEntry {
            name: name.to_string(),
            pass: witness.is_none(),
            witness,
            detail,
        });
    }
}

fn first_failure<T>(items: impl IntoIterator<Item = T>, mut bad: impl FnMut(&T) -> bool) -> Option<T> {
    items.into_iter().find(|t| bad(t))
}

/// Sampled sup of `|p(x) - p(y)| · |log|x - y||` over pairs with `|x - y| < 1/2`.
pub fn log_hoelder_sup(p: &ExponentField, resolution: usize) -> Result<(f64, (f64, f64)), FieldError> {
    let pts = scan_points(p.domain.0, p.domain.1, resolution);
    let vals = pts
        .iter()
        .map(|&x| p.try_value(x, x))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = (0.0, (pts[0], pts[0]));
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = pts[j] - pts[i];
            if d >= 0.5 {
                break;
            }
            let m = (vals[i] - vals[j]).abs() * d.ln().abs();
            if m > best.0 {
                best = (m, (pts[i], pts[j]));
            }
        }
    }
    Ok(best)
}

/// Evaluate every standing hypothesis by grid sampling.
///
/// `s` is scanned on the enclosing box `[a - |Ω|, b + |Ω|]²`; the other fields on
/// `Ω` or `Ω × Ω`. Failures become report entries, never errors.
pub fn check_hypotheses(
    p: &ExponentField,
    q: &ExponentField,
    s: &ExponentField,
    k: &ExponentField,
    v: &Potential,
    n: usize,
    resolution: usize,
) -> Result<HypothesisReport, FieldError> {
    let (a, b) = p.domain;
    let nf = n as f64;
    let pts = scan_points(a, b, resolution);
    let mut rec = Recorder(Vec::new());

    let pb = bound_at(p, resolution)?;
    let qb = bound_at(q, resolution)?;
    let kb = bound_at(k, resolution)?;
    let width = b - a;
    let s_box = s.on_domain((a - width, b + width))?;
    let sb = bound_at(&s_box, resolution)?;

    // P1a: 2 < p⁻ and p⁺ < n q(x,x) / (n - s(x,x) q(x,x)) pointwise.
    let p1a = if pb.min <= 2.0 {
        Some(vec![argmin(&pts, |x| p.at(x))])
    } else {
        first_failure(pts.iter().copied(), |&x| {
            let qxx = q.value(x, x);
            let denom = nf - s.value(x, x) * qxx;
            denom <= 0.0 || pb.max >= nf * qxx / denom
        })
        .map(|x| vec![x])
    };
    rec.push(
        "P1a",
        p1a,
        format!("p- = {:.6}, p+ = {:.6}", pb.min, pb.max),
    );

    // P2: log-Hölder constant stable under resolution doubling.
    let (m_coarse, _) = log_hoelder_sup(p, resolution)?;
    let (m_fine, pair) = log_hoelder_sup(p, 2 * resolution - 1)?;
    let drift = if m_coarse > 0.0 {
        (m_fine - m_coarse) / m_coarse
    } else if m_fine > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    rec.push(
        "P2",
        (drift > LOG_HOELDER_DRIFT).then(|| vec![pair.0, pair.1]),
        format!("M ≈ {m_fine:.6} (drift {:.2}% under doubling)", 100.0 * drift),
    );

    // Q1: symmetry on Ω × Ω.
    let q1 = first_failure(pairs(&pts), |&(x, y)| (q.value(x, y) - q.value(y, x)).abs() >= SYMMETRY_TOL);
    rec.push("Q1", q1.map(|(x, y)| vec![x, y]), "q(x,y) = q(y,x)".into());

    // Q2: 1 < q⁻ ≤ q⁺ < p⁻.
    let q2 = if qb.min <= 1.0 {
        Some(argmin2(&pts, |x, y| q.value(x, y)))
    } else if qb.max >= pb.min {
        Some(argmax2(&pts, |x, y| q.value(x, y)))
    } else {
        None
    };
    rec.push("Q2", q2, format!("q- = {:.6}, q+ = {:.6}, p- = {:.6}", qb.min, qb.max, pb.min));

    // Q3: translation invariance along the diagonal, shifts keeping both points in Ω.
    let q3 = q3_failure(q, &pts);
    rec.push(
        "Q3",
        q3,
        "q(x - z, y - z) = q(x, y) for sampled admissible shifts z".into(),
    );

    // S1: symmetry on the enclosing box.
    let box_pts = scan_points(a - width, b + width, resolution);
    let s1 = first_failure(pairs(&box_pts), |&(x, y)| (s.value(x, y) - s.value(y, x)).abs() >= SYMMETRY_TOL);
    rec.push("S1", s1.map(|(x, y)| vec![x, y]), "s(x,y) = s(y,x)".into());

    // S2: 0 < s⁻ ≤ s⁺ < 1.
    let s2 = if sb.min <= 0.0 {
        Some(argmin2(&box_pts, |x, y| s.value(x, y)))
    } else if sb.max >= 1.0 {
        Some(argmax2(&box_pts, |x, y| s.value(x, y)))
    } else {
        None
    };
    rec.push("S2", s2, format!("s- = {:.6}, s+ = {:.6}", sb.min, sb.max));

    // K1: 1 < k⁻ ≤ k⁺ < 2.
    let k1 = if kb.min <= 1.0 {
        Some(vec![argmin(&pts, |x| k.at(x))])
    } else if kb.max >= 2.0 {
        Some(vec![argmax(&pts, |x| k.at(x))])
    } else {
        None
    };
    rec.push("K1", k1, format!("k- = {:.6}, k+ = {:.6}", kb.min, kb.max));

    // V1: V ≥ 0, zero set nonempty and strictly inside Ω.
    let negative = first_failure(pts.iter().copied(), |&x| v.at(x) < 0.0);
    let v1 = if let Some(x) = negative {
        Some(vec![x])
    } else if v.zero_set.is_empty() {
        Some(vec![argmin(&pts, |x| v.at(x))])
    } else {
        v.zero_set
            .iter()
            .find(|(l, r)| *l <= a || *r >= b)
            .map(|(l, r)| vec![*l, *r])
    };
    rec.push(
        "V1",
        v1,
        format!("zero set {:?} (tolerance {:e})", v.zero_set, v.zeta_tol),
    );

    // V2: nonempty Ω₀ with V ≡ 0 on its closure.
    let v2 = match v.omega0 {
        None => Some(vec![a, b]),
        Some((l, r)) if l >= r => Some(vec![l, r]),
        Some((l, r)) => first_failure(scan_points(l, r, resolution), |&x| v.at(x) > v.zeta_tol).map(|x| vec![x]),
    };
    rec.push("V2", v2, format!("omega0 = {:?}", v.omega0));

    // DIM: n > q⁺ s⁺, DIM3: n > 2 s⁺.
    let qs = qb.max * sb.max;
    rec.push(
        "DIM",
        (nf <= qs).then(|| vec![qb.max, sb.max]),
        format!("q+ s+ = {qs:.6} vs n = {n}"),
    );
    rec.push(
        "DIM3",
        (nf <= 2.0 * sb.max).then(|| vec![sb.max]),
        format!("2 s+ = {:.6} vs n = {n}", 2.0 * sb.max),
    );

    // SUBCRIT: q*(x) = n q(x,x) / (n - s⁻ q(x,x)) > r(x) for r = p and r = k.
    let subcrit = first_failure(pts.iter().copied(), |&x| {
        let qxx = q.value(x, x);
        let denom = nf - sb.min * qxx;
        if denom <= 0.0 {
            return true;
        }
        let qstar = nf * qxx / denom;
        qstar <= p.at(x) || qstar <= k.at(x)
    });
    rec.push(
        "SUBCRIT",
        subcrit.map(|x| vec![x]),
        "q*(x) > p(x) and q*(x) > k(x)".into(),
    );

    Ok(HypothesisReport {
        dimension: n,
        resolution,
        bounds: FieldBounds {
            p: pb,
            q: qb,
            s: sb,
            k: kb,
        },
        log_hoelder_constant: m_fine,
        zero_set: v.zero_set.clone(),
        omega0: v.omega0,
        entries: rec.0,
    })
}

fn bound_at(f: &ExponentField, resolution: usize) -> Result<Bounds, FieldError> {
    let (min, max) = f.infer_bounds(resolution)?;
    Ok(Bounds {
        min,
        max,
        resolution,
    })
}

fn pairs(pts: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    pts.iter()
        .enumerate()
        .flat_map(move |(i, &x)| pts[i + 1..].iter().map(move |&y| (x, y)))
}

fn q3_failure(q: &ExponentField, pts: &[f64]) -> Option<Vec<f64>> {
    let (a, b) = q.domain;
    // a coarser sub-sample keeps the triple loop cheap
    let stride = (pts.len() / 33).max(1);
    let sub: Vec<f64> = pts.iter().copied().step_by(stride).collect();
    for &x in &sub {
        for &y in &sub {
            let base = q.value(x, y);
            for &z in &sub {
                let shift = z - a;
                let (xs, ys) = (x - shift, y - shift);
                if xs < a || ys < a || xs > b || ys > b || shift == 0.0 {
                    continue;
                }
                if (q.value(xs, ys) - base).abs() >= SYMMETRY_TOL {
                    return Some(vec![x, y, shift]);
                }
            }
        }
    }
    None
}

fn argmin(pts: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    pts.iter().copied().fold((pts[0], f64::INFINITY), |best, x| {
        let v = f(x);
        if v < best.1 { (x, v) } else { best }
    })
    .0
}

fn argmax(pts: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    argmin(pts, |x| -f(x))
}

fn argmin2(pts: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut best = (f64::INFINITY, vec![pts[0], pts[0]]);
    for &x in pts {
        for &y in pts {
            let v = f(x, y);
            if v < best.0 {
                best = (v, vec![x, y]);
            }
        }
    }
    best.1
}

fn argmax2(pts: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    argmin2(pts, |x, y| -f(x, y))
}
