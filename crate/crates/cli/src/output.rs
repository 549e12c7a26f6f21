//! CSV and JSON artifact writers.
//!
//! Floats are written as `{:.16e}` (17 significant digits); every CSV starts
//! with a header row.

use std::fs;
use std::path::Path;

use frag_avalanche::model::{FractalCoord, Lattice, Site};
use frag_avalanche::montecarlo::Event;
use frag_avalanche::semigroup::StateSpace;
use serde::Serialize;

use crate::CliError;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub const EVENT_HEADER: [&str; 9] = [
    "replica",
    "time",
    "kind",
    "size_before",
    "size_after",
    "root",
    "i",
    "j",
    "clipped_band",
];

pub const TERMINAL_HEADER: [&str; 6] = ["value", "root", "i", "j", "count", "probability"];

pub const COORD_HEADER: [&str; 5] = ["value", "root", "i", "j", "clipped_band"];

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(csv::Writer::from_path(dir.join(name))?)
}

fn clipped(c: &FractalCoord) -> String {
    c.clipped_band.map(|b| b.to_string()).unwrap_or_default()
}

fn coord_fields(value: f64, c: &FractalCoord) -> Vec<String> {
    vec![
        float(value),
        c.root.to_string(),
        c.i.to_string(),
        c.j.to_string(),
        clipped(c),
    ]
}

/// One row per event; the coordinate columns describe the post-event position.
pub fn write_events<'a>(
    dir: &Path,
    name: &str,
    events: impl Iterator<Item = (u64, &'a Event)>,
) -> Result<(), CliError> {
    let mut w = writer(dir, name)?;
    w.write_record(EVENT_HEADER)?;
    for (replica, e) in events {
        let c = e.coord_after;
        w.write_record([
            replica.to_string(),
            float(e.time),
            e.kind.as_str().to_string(),
            float(e.size_before),
            float(e.size_after),
            c.root.to_string(),
            c.i.to_string(),
            c.j.to_string(),
            clipped(&c),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Terminal occupation by site. Band-edge sites are written with root
/// `edge:<band>` and empty exponents.
pub fn write_terminal<'a>(
    dir: &Path,
    name: &str,
    lattice: &Lattice,
    particles: impl Iterator<Item = &'a FractalCoord>,
) -> Result<(), CliError> {
    let mut tally: std::collections::BTreeMap<Site, u64> = Default::default();
    let mut total = 0u64;
    for c in particles {
        *tally.entry(c.site()).or_default() += 1;
        total += 1;
    }
    let mut rows: Vec<(f64, Site, u64)> = tally
        .into_iter()
        .map(|(site, n)| (site_value(site, lattice), site, n))
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut w = writer(dir, name)?;
    w.write_record(TERMINAL_HEADER)?;
    for (value, site, n) in rows {
        let (root, i, j) = match site {
            Site::Lattice { root, i, j } => (root.to_string(), i.to_string(), j.to_string()),
            Site::Edge { band } => (format!("edge:{band}"), String::new(), String::new()),
        };
        w.write_record([
            float(value),
            root,
            i,
            j,
            n.to_string(),
            float(n as f64 / total as f64),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn site_value(site: Site, lattice: &Lattice) -> f64 {
    let c = match site {
        Site::Lattice { root, i, j } => FractalCoord::lattice(root, i, j),
        Site::Edge { band } => FractalCoord {
            clipped_band: Some(band),
            ..FractalCoord::root(0)
        },
    };
    lattice.value(&c)
}

/// States of `space` with extra named columns per state.
pub fn write_state_table(
    dir: &Path,
    name: &str,
    space: &StateSpace,
    columns: &[(&str, &[f64])],
) -> Result<(), CliError> {
    let mut w = writer(dir, name)?;
    let mut header: Vec<String> = COORD_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(columns.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    for (k, s) in space.states().iter().enumerate() {
        let mut row = coord_fields(s.value, &s.coord);
        row.extend(columns.iter().map(|(_, v)| float(v[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A square operator on `space`: coordinate columns, then `to_0 … to_{n-1}`.
pub fn write_matrix(
    dir: &Path,
    name: &str,
    space: &StateSpace,
    matrix: &nalgebra::DMatrix<f64>,
) -> Result<(), CliError> {
    let mut w = writer(dir, name)?;
    let mut header: Vec<String> = COORD_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend((0..space.len()).map(|k| format!("to_{k}")));
    w.write_record(&header)?;
    for (k, s) in space.states().iter().enumerate() {
        let mut row = coord_fields(s.value, &s.coord);
        row.extend(matrix.row(k).iter().map(|&v| float(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `h_t(x)` on the report grid, one row per `(time, state)`.
pub fn write_cumulant(
    dir: &Path,
    name: &str,
    space: &StateSpace,
    times: &[f64],
    values: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut w = writer(dir, name)?;
    let mut header = vec!["time".to_string()];
    header.extend(COORD_HEADER.iter().map(|s| s.to_string()));
    header.push("h".into());
    w.write_record(&header)?;
    for (t, h) in times.iter().zip(values) {
        for (k, s) in space.states().iter().enumerate() {
            let mut row = vec![float(*t)];
            row.extend(coord_fields(s.value, &s.coord));
            row.push(float(h[k]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(float(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(float(0.0), "0.0000000000000000e0");
        let x = 0.1 + 0.2;
        assert_eq!(float(x).parse::<f64>().unwrap(), x);
    }
}
