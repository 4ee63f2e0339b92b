//! Truth checks read back from emitted model tables.

use super::build::design_name;
use super::Table;
use crate::models::{MarinVariant, ModelId};
use crate::regress::INTERCEPT;
use crate::synth::{CoefficientCheck, SynthError, Truth};

fn statistic<'a>(t: &'a Table, label: &str) -> Option<&'a super::Cell> {
    t.statistics.iter().find(|r| r.label == label).and_then(|r| r.cells.first())
}

/// [`crate::synth::truth_check`] on a single-model table: the Coefficient
/// and Std. Error columns of every slope row, plus B from the statistics.
pub fn truth_check_table(table: &Table, truth: &Truth) -> Result<Vec<CoefficientCheck>, SynthError> {
    let mismatch = |msg: String| SynthError::ModelMismatch(format!("table {}: {msg}", table.name));
    let model = ModelId::ALL
        .into_iter()
        .find(|m| m.name() == table.name)
        .ok_or_else(|| mismatch("not a single-model table".into()))?;
    match statistic(table, "Marin variant") {
        Some(super::Cell::Text(v)) if v == MarinVariant::SalesRatio.name() => {}
        other => return Err(mismatch(format!("planted values refer to the sales variant, table has {other:?}"))),
    }
    let (Some(ci), Some(si)) = (
        table.columns.iter().position(|c| c == "Coefficient"),
        table.columns.iter().position(|c| c == "Std. Error"),
    ) else {
        return Err(mismatch("missing Coefficient or Std. Error column".into()));
    };
    let planted = truth.coefficients(model);
    let mut slopes: Vec<(String, Option<f64>, Option<f64>)> = table
        .rows
        .iter()
        .filter(|r| r.label != INTERCEPT && r.label != "R-squared")
        .map(|r| {
            let get = |i: usize| r.cells.get(i).and_then(|c| c.as_f64());
            (design_name(&r.label).to_owned(), get(ci), get(si))
        })
        .collect();
    if model.is_value() {
        let get = |label| statistic(table, label).and_then(|c| c.as_f64());
        slopes.insert(0, ("B".to_owned(), get("B coefficient"), get("B Std. Error")));
    }
    let mut out = Vec::new();
    for (name, estimate, std_error) in slopes {
        let (Some(estimate), Some(std_error)) = (estimate, std_error) else { continue };
        let planted = *planted.get(&name).ok_or_else(|| mismatch(format!("{name} has no planted value")))?;
        out.push(CoefficientCheck::new(&name, estimate, std_error, planted));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{analyze, RunOptions};
    use crate::report::{build_tables, Cell};
    use crate::synth::{generate_panel, truth_check, DgpConfig};

    #[test]
    fn table_check_matches_report_check() {
        let out = generate_panel(&DgpConfig::default()).unwrap();
        let a = analyze(&out.dataset, &out.prices, RunOptions::default()).unwrap();
        let tables = build_tables(&a);
        for id in [ModelId::ValueModerated, ModelId::RiskModerated] {
            let t = tables.iter().find(|t| t.name == id.name()).unwrap();
            let mut from_table = truth_check_table(t, &out.truth).unwrap();
            let mut from_report = truth_check(a.model(id).unwrap(), &out.truth).unwrap();
            from_table.sort_by(|a, b| a.variable.cmp(&b.variable));
            from_report.sort_by(|a, b| a.variable.cmp(&b.variable));
            assert_eq!(from_table, from_report);
        }
        let mut t = tables.iter().find(|t| t.name == "risk_moderated").unwrap().clone();
        let row = t.rows.iter_mut().find(|r| r.label == "LEVR").unwrap();
        row.cells[0] = Cell::num(row.cells[0].as_f64().unwrap() + 100.0);
        let checks = truth_check_table(&t, &out.truth).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.pass).map(|c| c.variable.as_str()).collect();
        assert!(failed.contains(&"Lev"));
        let pair = tables.iter().find(|t| t.name == "risk_models").unwrap();
        assert!(truth_check_table(pair, &out.truth).is_err());
    }
}
