//! Cell-by-cell comparison of two table sets.

use std::fs;
use std::path::Path;

use super::{Cell, ReportError, Row, Table, MANIFEST_FILE};

/// Floor on the denominator of the relative difference, so that values at
/// or near zero are compared absolutely.
pub const COMPARE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CellDiff {
    pub table: String,
    pub row: String,
    pub column: String,
    pub expected: String,
    pub actual: String,
    /// Relative difference for numeric cells.
    pub relative: Option<f64>,
}

impl std::fmt::Display for CellDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} / {} / {}: expected {}, got {}", self.table, self.row, self.column, self.expected, self.actual)?;
        if let Some(r) = self.relative {
            write!(f, " (relative difference {r:.3e})")?;
        }
        Ok(())
    }
}

fn show(c: &Cell) -> String {
    match c {
        Cell::Int(i) => i.to_string(),
        Cell::Num(v) => format!("{v:e}"),
        Cell::Text(s) => format!("{s:?}"),
        Cell::Empty => "empty".into(),
    }
}

fn compare_rows(
    table: &Table,
    section: &str,
    expected: &[Row],
    actual: &[Row],
    rel_tol: f64,
    out: &mut Vec<CellDiff>,
) -> Result<(), ReportError> {
    if expected.len() != actual.len() {
        return Err(ReportError::SchemaMismatch(format!(
            "table {} {section}: {} rows expected, {} found",
            table.name,
            expected.len(),
            actual.len()
        )));
    }
    for (e, a) in expected.iter().zip(actual) {
        if e.label != a.label || e.cells.len() != a.cells.len() {
            return Err(ReportError::SchemaMismatch(format!(
                "table {} {section}: row {:?} with {} cells expected, {:?} with {} found",
                table.name,
                e.label,
                e.cells.len(),
                a.label,
                a.cells.len()
            )));
        }
        for (j, (ce, ca)) in e.cells.iter().zip(&a.cells).enumerate() {
            let relative = match (ce.as_f64(), ca.as_f64()) {
                (Some(x), Some(y)) => {
                    let r = (x - y).abs() / x.abs().max(COMPARE_EPS);
                    if r <= rel_tol {
                        continue;
                    }
                    Some(r)
                }
                _ if ce == ca => continue,
                _ => None,
            };
            out.push(CellDiff {
                table: table.name.clone(),
                row: e.label.clone(),
                column: table.columns.get(j).cloned().unwrap_or_else(|| format!("#{j}")),
                expected: show(ce),
                actual: show(ca),
                relative,
            });
        }
    }
    Ok(())
}

/// Differences between `expected` and `actual`. Numbers match when
/// |a − e| / max(|e|, [`COMPARE_EPS`]) ≤ `rel_tol`; text must match
/// exactly. Tables are paired by name. A missing table, a different schema
/// version, or differing columns or row labels is a [`ReportError::SchemaMismatch`].
pub fn golden_compare(expected: &[Table], actual: &[Table], rel_tol: f64) -> Result<Vec<CellDiff>, ReportError> {
    let mut out = Vec::new();
    if expected.len() != actual.len() {
        return Err(ReportError::SchemaMismatch(format!(
            "{} tables expected, {} found",
            expected.len(),
            actual.len()
        )));
    }
    for e in expected {
        let a = actual
            .iter()
            .find(|a| a.name == e.name)
            .ok_or_else(|| ReportError::SchemaMismatch(format!("table {} missing", e.name)))?;
        if a.schema_version != e.schema_version {
            return Err(ReportError::SchemaMismatch(format!(
                "table {}: schema version {} expected, {} found",
                e.name, e.schema_version, a.schema_version
            )));
        }
        if a.columns != e.columns {
            return Err(ReportError::SchemaMismatch(format!("table {}: columns differ", e.name)));
        }
        compare_rows(e, "rows", &e.rows, &a.rows, rel_tol, &mut out)?;
        compare_rows(e, "statistics", &e.statistics, &a.statistics, rel_tol, &mut out)?;
    }
    Ok(out)
}

/// Every table JSON file in `dir` (the manifest excluded), sorted by name.
pub fn read_tables(dir: &Path) -> Result<Vec<Table>, ReportError> {
    let entries = fs::read_dir(dir).map_err(|e| ReportError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| ReportError::io(dir, e))?.path();
        let is_json = path.extension().is_some_and(|x| x == "json");
        if is_json && path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let body = fs::read_to_string(&path).map_err(|e| ReportError::io(&path, e))?;
            serde_json::from_str(&body).map_err(|e| ReportError::Malformed { path: path.clone(), reason: e.to_string() })
        })
        .collect()
}

/// [`golden_compare`] over the table files of two output directories.
pub fn compare_dirs(expected: &Path, actual: &Path, rel_tol: f64) -> Result<Vec<CellDiff>, ReportError> {
    golden_compare(&read_tables(expected)?, &read_tables(actual)?, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(values: &[f64]) -> Table {
        let mut t = Table::new("t", "T", "Variable", &["v"]);
        for (i, v) in values.iter().enumerate() {
            t.rows.push(Row::new(format!("r{i}"), vec![Cell::num(*v)]));
        }
        t
    }

    #[test]
    fn identical_tables_have_no_diffs() {
        let t = vec![table(&[1.0, 0.0, -3.5])];
        assert!(golden_compare(&t, &t, 0.0).unwrap().is_empty());
    }

    #[test]
    fn relative_tolerance() {
        let e = vec![table(&[100.0, 0.0])];
        let a = vec![table(&[100.0 + 1e-5, 1e-20])];
        assert!(golden_compare(&e, &a, 1e-6).unwrap().is_empty());
        let a = vec![table(&[100.001, 0.0])];
        let d = golden_compare(&e, &a, 1e-6).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].table.as_str(), d[0].row.as_str(), d[0].column.as_str()), ("t", "r0", "v"));
        assert!(d[0].to_string().contains("t / r0 / v"));
    }

    #[test]
    fn text_and_empty_compare_exactly() {
        let mut e = table(&[1.0]);
        e.rows[0].cells[0] = Cell::text("I(1)");
        let mut a = e.clone();
        a.rows[0].cells[0] = Cell::Empty;
        assert_eq!(golden_compare(&[e], &[a], 1.0).unwrap().len(), 1);
    }

    #[test]
    fn schema_mismatches() {
        let e = table(&[1.0, 2.0]);
        let mut a = e.clone();
        a.schema_version += 1;
        assert!(matches!(golden_compare(&[e.clone()], &[a], 0.0), Err(ReportError::SchemaMismatch(_))));
        let a = table(&[1.0]);
        assert!(matches!(golden_compare(&[e.clone()], &[a], 0.0), Err(ReportError::SchemaMismatch(_))));
        let mut a = e.clone();
        a.rows[1].label = "other".into();
        assert!(matches!(golden_compare(&[e.clone()], &[a], 0.0), Err(ReportError::SchemaMismatch(_))));
        let mut a = e.clone();
        a.name = "u".into();
        assert!(matches!(golden_compare(&[e], &[a], 0.0), Err(ReportError::SchemaMismatch(_))));
    }

    #[test]
    fn thousand_doubles_round_trip_through_json() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..1000)
            .map(|_| {
                let m: f64 = rng.random_range(-1.0..1.0);
                m * 10f64.powi(rng.random_range(-300..300))
            })
            .collect();
        let t = table(&values);
        let back: Table = serde_json::from_str(&t.to_json()).unwrap();
        for (a, b) in t.rows.iter().zip(&back.rows) {
            assert_eq!(a.cells[0].as_f64().unwrap().to_bits(), b.cells[0].as_f64().unwrap().to_bits());
        }
        assert!(golden_compare(&[t], &[back], 0.0).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn csv_cells_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let t = table(&[v]);
            let csv = t.to_csv();
            let field = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_owned();
            prop_assert_eq!(field.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
