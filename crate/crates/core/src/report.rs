//! CSV artifacts: solution profiles and the sweep table.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::grid::{Grid, GridFunction};
use crate::solvers::SweepRecord;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `node,value` with one row per grid node.
pub fn profile_csv(u: &GridFunction) -> String {
    let mut out = String::from("node,value\n");
    for (i, v) in u.values.iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_f64(u.grid.node(i)), fmt_f64(*v));
    }
    out
}

pub fn write_profile(path: &Path, u: &GridFunction) -> io::Result<()> {
    std::fs::write(path, profile_csv(u))
}

fn bad(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Inverse of [`profile_csv`] on the given grid.
pub fn parse_profile(text: &str, grid: Grid) -> io::Result<GridFunction> {
    let mut lines = text.lines();
    if lines.next() != Some("node,value") {
        return Err(bad("missing node,value header".into()));
    }
    let mut values = Vec::with_capacity(grid.node_count());
    for (row, line) in lines.enumerate() {
        let (_, v) = line.split_once(',').ok_or_else(|| bad(format!("row {row}: expected two columns")))?;
        values.push(v.trim().parse::<f64>().map_err(|e| bad(format!("row {row}: {e}")))?);
    }
    let dirichlet = values.first() == Some(&0.0) && values.last() == Some(&0.0);
    GridFunction::new(grid, values, dirichlet).map_err(|e| bad(e.to_string()))
}

pub fn read_profile(path: &Path, grid: Grid) -> io::Result<GridFunction> {
    parse_profile(&std::fs::read_to_string(path)?, grid)
}

pub const SWEEP_HEADER: &str = "lambda,value1,value2,potential_mass1,potential_mass2,dist1,dist2,status";

/// Sweep table; failed records keep their row with empty numeric cells.
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in records {
        let cells: Vec<String> = match (&r.result, r.potential_mass, r.distance_to_limit) {
            (Some(sol), Some(pm), Some(dl)) => [
                sol.saddle.critical_value,
                sol.minimizer.critical_value,
                pm[0],
                pm[1],
                dl[0],
                dl[1],
            ]
            .iter()
            .map(|v| fmt_f64(*v))
            .collect(),
            _ => vec![String::new(); 6],
        };
        let status = match (&r.error, &r.result) {
            (Some(e), _) => format!("error: {}", e.replace(',', ";")),
            (None, Some(sol)) if sol.ok => "ok".to_string(),
            _ => "not_converged".to_string(),
        };
        let _ = writeln!(out, "{},{},{}", fmt_f64(r.lambda), cells.join(","), status);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trip_is_exact() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let u = GridFunction::from_fn(grid, true, |x| (x * 7.3).sin() / 3.0 + 1e-17 * x);
        let back = parse_profile(&profile_csv(&u), grid).unwrap();
        assert_eq!(u, back);
    }

    #[test]
    fn header_is_checked() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        assert!(parse_profile("x,y\n", grid).is_err());
    }
}
