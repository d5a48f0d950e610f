//! Plain-text node tables.
//!
//! ```text
//! # nlpt-grid dim=2 nodes=4096 fields=phi
//! 0 -3 0 cut 0.0023 0.5
//! ...
//! ```
//! One line per node: index, chart coordinates, tag, dual-volume weight, then
//! the optional field values.

use std::fmt::Write as _;

use super::grid::{Grid, Tag};
use crate::error::{Error, Result};

/// Render the node table, appending one column per named field.
pub fn export_grid(grid: &Grid, fields: &[(&str, &[f64])]) -> String {
    let names: Vec<&str> = fields.iter().map(|f| f.0).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# nlpt-grid dim={} nodes={} fields={}",
        grid.dim(),
        grid.len(),
        names.join(",")
    );
    for n in 0..grid.len() {
        let _ = write!(out, "{n}");
        for x in grid.coords(n) {
            let _ = write!(out, " {x}");
        }
        let _ = write!(out, " {} {}", grid.tag(n).as_str(), grid.dual_volume(n));
        for (_, v) in fields {
            let _ = write!(out, " {}", v[n]);
        }
        out.push('\n');
    }
    out
}

/// A parsed node table.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub dim: usize,
    pub coords: Vec<Vec<f64>>,
    pub tags: Vec<Tag>,
    pub weights: Vec<f64>,
    pub field_names: Vec<String>,
    pub fields: Vec<Vec<f64>>,
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::config(format!("grid table line {line}"), reason)
}

pub fn parse_grid(text: &str) -> Result<NodeTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty table"))?;
    let mut dim = None;
    let mut field_names = Vec::new();
    for part in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = part.strip_prefix("dim=") {
            dim = v.parse::<usize>().ok();
        } else if let Some(v) = part.strip_prefix("fields=") {
            field_names = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect();
        }
    }
    let dim = dim.ok_or_else(|| parse_err(1, "header lacks dim="))?;
    let mut table = NodeTable {
        dim,
        coords: Vec::new(),
        tags: Vec::new(),
        weights: Vec::new(),
        fields: vec![Vec::new(); field_names.len()],
        field_names,
    };
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let want = 1 + dim + 2 + table.fields.len();
        if cols.len() != want {
            return Err(parse_err(i + 1, format!("expected {want} columns, found {}", cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, e.to_string()));
        table
            .coords
            .push(cols[1..=dim].iter().map(|s| num(s)).collect::<Result<_>>()?);
        table
            .tags
            .push(Tag::parse(cols[dim + 1]).ok_or_else(|| parse_err(i + 1, "unknown tag"))?);
        table.weights.push(num(cols[dim + 2])?);
        for (k, f) in table.fields.iter_mut().enumerate() {
            f.push(num(cols[dim + 3 + k])?);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::grid::compact_box;

    #[test]
    fn round_trip() {
        let g = compact_box(&[[0.0, 1.0], [0.0, 0.5]], &[8, 9]).unwrap();
        let phi = g.sample(|x| x[0] * 0.1 + x[1] / 3.0);
        let text = export_grid(&g, &[("phi", &phi)]);
        let t = parse_grid(&text).unwrap();
        assert_eq!(t.coords.len(), g.len());
        assert_eq!(t.fields[0], phi);
        assert_eq!(t.tags[0], Tag::ManifoldBoundary);
        for n in 0..g.len() {
            assert_eq!(t.coords[n], g.coords(n));
            assert_eq!(t.weights[n], g.dual_volume(n));
        }
    }
}
