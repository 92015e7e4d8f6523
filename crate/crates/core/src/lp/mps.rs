//! Fixed-format MPS export and import.
//!
//! Row and column names are replaced by 8-character codes (`R0000001`,
//! `C0000001`, ...) so any fixed-format reader accepts them; the mapping back
//! to model names travels alongside the MPS text in [`MpsExport`].

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use super::{LpModel, LpStatus, Relation};

pub const OBJECTIVE_ROW: &str = "OBJ";

#[derive(Debug, Error, PartialEq)]
pub enum MpsError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported MPS section {0}")]
    Unsupported(String),
    #[error("name {0} is not in the mangling table")]
    UnknownName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpsExport {
    pub text: String,
    /// `(mangled, original)` for every row, in model order.
    pub rows: Vec<(String, String)>,
    /// `(mangled, original)` for every column, in model order.
    pub columns: Vec<(String, String)>,
}

impl MpsExport {
    /// Tab-separated mangling table, one `kind mangled original` line each.
    pub fn name_table(&self) -> String {
        let mut out = String::new();
        for (m, o) in &self.rows {
            let _ = writeln!(out, "row\t{m}\t{o}");
        }
        for (m, o) in &self.columns {
            let _ = writeln!(out, "col\t{m}\t{o}");
        }
        out
    }
}

fn row_code(i: usize) -> String {
    format!("R{:07}", i + 1)
}

fn col_code(j: usize) -> String {
    format!("C{:07}", j + 1)
}

/// Formats `v` into at most 12 characters.
fn num(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    for prec in (0..=8).rev() {
        let s = format!("{v:.prec$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:e}")
}

fn field_line(out: &mut String, kind: &str, name1: &str, name2: &str, value: f64) {
    let _ = writeln!(out, " {kind:<2} {name1:<8}  {name2:<8}  {:>12}", num(value));
}

pub fn export_mps(model: &LpModel) -> MpsExport {
    assert!(model.num_rows() < 10_000_000 && model.num_vars() < 10_000_000);
    let mut out = String::new();
    let _ = writeln!(out, "NAME          NSLP");
    let _ = writeln!(out, "ROWS");
    let _ = writeln!(out, " N  {OBJECTIVE_ROW}");
    for (i, row) in model.constraints.iter().enumerate() {
        let t = match row.relation {
            Relation::Le => "L",
            Relation::Ge => "G",
            Relation::Eq => "E",
        };
        let _ = writeln!(out, " {t:<2} {}", row_code(i));
    }

    let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (i, row) in model.constraints.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            per_col[j].push((i, a));
        }
    }
    let _ = writeln!(out, "COLUMNS");
    for (j, entries) in per_col.iter_mut().enumerate() {
        let code = col_code(j);
        let c = model.objective[j];
        if c != 0.0 || entries.is_empty() {
            field_line(&mut out, "", &code, OBJECTIVE_ROW, c);
        }
        entries.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < entries.len() {
            let i = entries[k].0;
            let mut a = 0.0;
            while k < entries.len() && entries[k].0 == i {
                a += entries[k].1;
                k += 1;
            }
            field_line(&mut out, "", &code, &row_code(i), a);
        }
    }

    let _ = writeln!(out, "RHS");
    for (i, row) in model.constraints.iter().enumerate() {
        if row.rhs != 0.0 {
            field_line(&mut out, "", "RHS", &row_code(i), row.rhs);
        }
    }

    let _ = writeln!(out, "BOUNDS");
    for (j, v) in model.variables.iter().enumerate() {
        let code = col_code(j);
        let (l, u) = (v.lower, v.upper);
        if l == u {
            field_line(&mut out, "FX", "BND", &code, l);
            continue;
        }
        match (l.is_finite(), u.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " FR BND       {code}");
            }
            (false, true) => {
                let _ = writeln!(out, " MI BND       {code}");
                field_line(&mut out, "UP", "BND", &code, u);
            }
            (true, _) => {
                if l != 0.0 || (u.is_finite() && u < 0.0) {
                    field_line(&mut out, "LO", "BND", &code, l);
                }
                if u.is_finite() {
                    field_line(&mut out, "UP", "BND", &code, u);
                }
            }
        }
    }
    let _ = writeln!(out, "ENDATA");

    MpsExport {
        text: out,
        rows: model.constraints.iter().enumerate().map(|(i, r)| (row_code(i), r.name.clone())).collect(),
        columns: model.variables.iter().enumerate().map(|(j, v)| (col_code(j), v.name.clone())).collect(),
    }
}

#[derive(PartialEq)]
enum Section {
    None,
    Rows,
    Columns,
    Rhs,
    Bounds,
}

/// Parses MPS text (fixed or free layout, names without spaces). Row and
/// column names in the returned model are the names found in the file.
pub fn read_mps(text: &str) -> Result<LpModel, MpsError> {
    let mut model = LpModel::new();
    let mut section = Section::None;
    let mut row_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut col_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut objective_name: Option<String> = None;
    let mut bounded: Vec<bool> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let err = |msg: &str| MpsError::Parse { line, msg: msg.to_string() };
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match tokens[0] {
                "NAME" => Section::None,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => break,
                other => return Err(MpsError::Unsupported(other.to_string())),
            };
            continue;
        }
        match section {
            Section::None => return Err(err("data line outside a section")),
            Section::Rows => {
                if tokens.len() != 2 {
                    return Err(err("expected row type and name"));
                }
                let relation = match tokens[0] {
                    "N" => {
                        if objective_name.is_none() {
                            objective_name = Some(tokens[1].to_string());
                        }
                        continue;
                    }
                    "L" => Relation::Le,
                    "G" => Relation::Ge,
                    "E" => Relation::Eq,
                    _ => return Err(err("unknown row type")),
                };
                let i = model.add_constraint(tokens[1], Vec::new(), relation, 0.0);
                row_index.insert(tokens[1].to_string(), i);
            }
            Section::Columns => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("expected column, row, value [row, value]"));
                }
                if tokens.contains(&"'MARKER'") {
                    return Err(MpsError::Unsupported("integer markers".into()));
                }
                let j = match col_index.get(tokens[0]) {
                    Some(&j) => j,
                    None => {
                        let j = model.add_var(tokens[0], 0.0, f64::INFINITY);
                        bounded.push(false);
                        col_index.insert(tokens[0].to_string(), j);
                        j
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let v: f64 = pair[1].parse().map_err(|_| err("bad number"))?;
                    if Some(pair[0]) == objective_name.as_deref() {
                        model.objective[j] += v;
                    } else {
                        let &i = row_index.get(pair[0]).ok_or_else(|| err("unknown row"))?;
                        model.constraints[i].coeffs.push((j, v));
                    }
                }
            }
            Section::Rhs => {
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err("expected set, row, value [row, value]"));
                }
                for pair in tokens[1..].chunks(2) {
                    let v: f64 = pair[1].parse().map_err(|_| err("bad number"))?;
                    if Some(pair[0]) == objective_name.as_deref() {
                        continue;
                    }
                    let &i = row_index.get(pair[0]).ok_or_else(|| err("unknown row"))?;
                    model.constraints[i].rhs = v;
                }
            }
            Section::Bounds => {
                if tokens.len() < 3 {
                    return Err(err("short bound line"));
                }
                let &j = col_index.get(tokens[2]).ok_or_else(|| err("unknown column"))?;
                let value = || -> Result<f64, MpsError> {
                    tokens.get(3).ok_or_else(|| err("missing bound value"))?.parse().map_err(|_| err("bad number"))
                };
                let var = &mut model.variables[j];
                match tokens[0] {
                    "UP" => {
                        let u = value()?;
                        // classic convention: negative UP with no lower bound given
                        if u < 0.0 && var.lower == 0.0 && !bounded[j] {
                            var.lower = f64::NEG_INFINITY;
                        }
                        var.upper = u;
                    }
                    "LO" => var.lower = value()?,
                    "FX" => {
                        let v = value()?;
                        var.lower = v;
                        var.upper = v;
                    }
                    "FR" => {
                        var.lower = f64::NEG_INFINITY;
                        var.upper = f64::INFINITY;
                    }
                    "MI" => var.lower = f64::NEG_INFINITY,
                    "PL" => var.upper = f64::INFINITY,
                    other => return Err(MpsError::Unsupported(format!("bound type {other}"))),
                }
                bounded[j] = true;
            }
        }
    }
    Ok(model)
}

/// What an external solver hands back: a status and variable values keyed by
/// the mangled column names of the exported MPS.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalResult {
    pub status: LpStatus,
    pub values: BTreeMap<String, f64>,
}

/// Adapter contract for solvers that consume MPS text.
pub trait ExternalSolver {
    type Error: std::error::Error;
    fn solve_mps(&self, mps: &str) -> Result<ExternalResult, Self::Error>;
}

/// Maps an external result back to model column order. Columns the solver
/// did not report are an error.
pub fn values_in_model_order(export: &MpsExport, result: &ExternalResult) -> Result<Vec<f64>, MpsError> {
    export
        .columns
        .iter()
        .map(|(code, _)| result.values.get(code).copied().ok_or_else(|| MpsError::UnknownName(code.clone())))
        .collect()
}

/// Round-trips through [`read_mps`] and the bundled simplex. Useful as a
/// reference adapter and for checking exports.
#[derive(Debug, Default, Clone, Copy)]
pub struct BundledSolver;

#[derive(Debug, Error)]
pub enum BundledError {
    #[error(transparent)]
    Mps(#[from] MpsError),
    #[error(transparent)]
    Lp(#[from] super::LpError),
}

impl ExternalSolver for BundledSolver {
    type Error = BundledError;

    fn solve_mps(&self, mps: &str) -> Result<ExternalResult, Self::Error> {
        let model = read_mps(mps)?;
        let sol = super::solve_lp(&model)?;
        let values = model.variables.iter().zip(&sol.values).map(|(v, &x)| (v.name.clone(), x)).collect();
        Ok(ExternalResult { status: sol.status, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, LpModel, Relation};

    fn one_var() -> LpModel {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 10.0);
        m.set_cost(x, 1.0);
        m.add_constraint("lo", vec![(x, 1.0)], Relation::Ge, 3.0);
        m
    }

    #[test]
    fn skeleton_has_all_sections_in_order() {
        let e = export_mps(&one_var());
        let headers: Vec<&str> =
            e.text.lines().filter(|l| !l.starts_with(' ')).map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(headers, ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"]);
        assert!(e.text.contains(" G  R0000001\n"));
        assert!(e.text.contains(" UP BND       C0000001            10\n"));
        assert_eq!(e.columns, vec![("C0000001".to_string(), "x".to_string())]);
    }

    #[test]
    fn equality_rows_are_typed_e() {
        let mut m = one_var();
        m.add_constraint("eq", vec![(0, 2.0)], Relation::Eq, 8.0);
        let e = export_mps(&m);
        assert!(e.text.contains(" E  R0000002\n"));
        assert!(e.name_table().contains("row\tR0000002\teq\n"));
    }

    #[test]
    fn fixed_fields_fit_columns() {
        let mut m = LpModel::new();
        let x = m.add_var("a very long variable name", -1.5, f64::INFINITY);
        m.set_cost(x, 1.0 / 3.0);
        m.add_constraint("r", vec![(x, 123456789.123456)], Relation::Le, 1e-9);
        let e = export_mps(&m);
        for line in e.text.lines().filter(|l| l.starts_with("    ")) {
            assert!(line.len() <= 36, "{line:?}");
        }
        let back = read_mps(&e.text).unwrap();
        assert!((back.objective[0] - 1.0 / 3.0).abs() < 1e-6);
        assert_eq!(back.variables[0].lower, -1.5);
    }

    #[test]
    fn bundled_adapter_round_trips_the_two_variable_example() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0);
        let y = m.add_var("y", 0.0, 1.0);
        m.set_cost(x, -1.0);
        m.set_cost(y, -1.0);
        m.add_constraint("cap", vec![(x, 1.0), (y, 1.0)], Relation::Le, 1.0);
        let export = export_mps(&m);
        let result = BundledSolver.solve_mps(&export.text).unwrap();
        assert_eq!(result.status, LpStatus::Optimal);
        let values = values_in_model_order(&export, &result).unwrap();
        assert!((m.objective_value(&values) + 1.0).abs() <= 1e-6);
        assert!((solve_lp(&m).unwrap().objective + 1.0).abs() <= 1e-6);
    }

    #[test]
    fn negative_upper_bound_keeps_zero_lower() {
        let mut m = LpModel::new();
        m.add_var("x", 0.0, -1.0 + 1.0);
        m.add_var("y", -5.0, -1.0);
        let back = read_mps(&export_mps(&m).text).unwrap();
        assert_eq!((back.variables[1].lower, back.variables[1].upper), (-5.0, -1.0));
    }
}
