//! Tables built from a finished analysis.

use serde::{Deserialize, Serialize};

use super::{Cell, ColumnGroup, Row, Table};
use crate::diagnostics::{CorrelationMatrix, DescriptiveRow, DiagnosticsError, StationarityResult, TestResult};
use crate::models::{EstimationReport, ModelId, INTERACTION, MARIN};
use crate::pipeline::Analysis;
use crate::regress::INTERCEPT;

/// Main rows of every value-model table, in display order.
pub const VALUE_ROWS: [&str; 9] = [INTERCEPT, "X", MARIN, "AGE", "Size", "Lev", "OW", INTERACTION, "R-squared"];
/// Main rows of every risk-model table, in display order.
pub const RISK_ROWS: [&str; 8] = [INTERCEPT, MARIN, "AGE", "SIZ", "LEVR", "OW", INTERACTION, "R-squared"];

/// Per-model figures recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub table: String,
    pub model: String,
    pub marin_variant: String,
    pub dependent: String,
    pub nobs: usize,
    pub dropped_rows: usize,
    pub df_resid: usize,
    pub r_squared: f64,
    pub hausman_statistic: Option<f64>,
    pub hausman_p: Option<f64>,
    pub hausman_decision: Option<String>,
    pub warnings: Vec<String>,
}

pub(super) fn design_name(label: &str) -> &str {
    match label {
        "SIZ" => "Size",
        "LEVR" => "Lev",
        other => other,
    }
}

fn row_labels(id: ModelId) -> &'static [&'static str] {
    if id.is_value() {
        &VALUE_ROWS
    } else {
        &RISK_ROWS
    }
}

/// Coefficient, standard error, t and p for one display row; R-squared
/// fills the first cell only.
fn model_cells(r: &EstimationReport, label: &str) -> [Cell; 4] {
    if label == "R-squared" {
        return [Cell::num(r.fit.r_squared), Cell::Empty, Cell::Empty, Cell::Empty];
    }
    match r.row(design_name(label)) {
        Some(c) => [Cell::opt(c.coefficient), Cell::opt(c.std_error), Cell::opt(c.t_stat), Cell::opt(c.p_value)],
        None => [Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty],
    }
}

fn test_named<'a>(r: &'a EstimationReport, name: &str) -> Option<&'a TestResult> {
    r.diagnostics.iter().find(|t| t.name == name)
}

/// Fit statistics as (label, value) pairs, identical across layouts.
fn model_statistics(r: &EstimationReport) -> Vec<(String, Cell)> {
    let mut out = vec![
        ("Dependent".to_owned(), Cell::text(r.spec.dependent_label())),
        ("Marin variant".to_owned(), Cell::text(r.spec.marin_variant.name())),
        ("Observations".to_owned(), Cell::Int(r.fit.nobs as i64)),
        ("Firms".to_owned(), Cell::Int(r.fit.entity_effects.as_ref().map_or(0, |e| e.len()) as i64)),
        ("Rows dropped".to_owned(), Cell::Int(r.dropped_rows as i64)),
        ("Residual df".to_owned(), Cell::Int(r.fit.df_resid as i64)),
        ("R-squared kind".to_owned(), Cell::text(r.fit.r_squared_kind.label())),
        ("F-statistic".to_owned(), Cell::opt(r.fit.f_statistic)),
        ("Prob(F-statistic)".to_owned(), Cell::opt(r.fit.f_pvalue)),
    ];
    if r.model_id().is_value() && !r.spec.constrain_book_unit {
        let b = r.row("B");
        out.push(("B coefficient".to_owned(), Cell::opt(b.and_then(|b| b.coefficient))));
        out.push(("B Std. Error".to_owned(), Cell::opt(b.and_then(|b| b.std_error))));
        out.push(("B Prob.".to_owned(), Cell::opt(b.and_then(|b| b.p_value))));
    }
    for (name, label) in [("Hausman", "Hausman"), ("LR heteroskedasticity", "LR heteroskedasticity")] {
        let t = test_named(r, name);
        out.push((format!("{label} statistic"), Cell::opt(t.map(|t| t.statistic))));
        out.push((format!("{label} df"), Cell::opt(t.and_then(|t| t.df))));
        out.push((format!("{label} Prob."), Cell::opt(t.and_then(|t| t.p_value))));
    }
    out
}

fn model_notes(r: &EstimationReport) -> Vec<String> {
    let mut notes = vec![
        format!("Marketing intensity measured as {}", r.spec.marin_variant.description()),
        "Entity fixed effects; standard errors clustered by period (White cross-section)".to_owned(),
    ];
    if r.model_id().is_value() {
        if r.spec.constrain_book_unit {
            notes.push("B coefficient constrained to 1; dependent variable is P - B".to_owned());
        } else {
            notes.push("B is estimated but not displayed in the main rows; see B coefficient".to_owned());
        }
    }
    if r.model_id().is_moderated() && r.spec.center_interaction {
        notes.push("Interaction built from mean-centered OW and Marin".to_owned());
    }
    for t in &r.diagnostics {
        notes.push(format!("{}: {} ({})", t.name, t.decision.label(), t.detail));
    }
    notes.extend(r.warnings.iter().cloned());
    notes
}

fn model_table(name: &str, title: &str, r: &EstimationReport) -> Table {
    let mut t = Table::new(name, title, "Variable", &["Coefficient", "Std. Error", "t-Statistic", "Prob."]);
    for label in row_labels(r.model_id()) {
        t.rows.push(Row::new(*label, model_cells(r, label).to_vec()));
    }
    for (label, cell) in model_statistics(r) {
        t.statistics.push(Row::new(label, vec![cell]));
    }
    t.notes = model_notes(r);
    t
}

/// Two or more models side by side, Coefficient and Prob. per model.
fn pair_table(name: &str, title: &str, groups: &[&str], reports: &[&EstimationReport]) -> Table {
    let columns: Vec<&str> = reports.iter().flat_map(|_| ["Coefficient", "Prob."]).collect();
    let mut t = Table::new(name, title, "Variable", &columns);
    t.column_groups = groups.iter().map(|g| ColumnGroup { label: (*g).to_owned(), span: 2 }).collect();
    for label in row_labels(reports[0].model_id()) {
        let cells = reports
            .iter()
            .flat_map(|r| {
                let [c, _, _, p] = model_cells(r, label);
                [c, p]
            })
            .collect();
        t.rows.push(Row::new(*label, cells));
    }
    let stats: Vec<Vec<(String, Cell)>> = reports.iter().map(|r| model_statistics(r)).collect();
    for (i, (label, _)) in stats[0].iter().enumerate() {
        let cells = stats.iter().flat_map(|s| [s.get(i).map_or(Cell::Empty, |x| x.1.clone()), Cell::Empty]).collect();
        t.statistics.push(Row::new(label.clone(), cells));
    }
    for (g, r) in groups.iter().zip(reports) {
        t.notes.extend(model_notes(r).into_iter().map(|n| format!("{g}: {n}")));
    }
    t
}

fn descriptives_table(rows: &[DescriptiveRow]) -> Table {
    let mut t = Table::new(
        "descriptives",
        "Descriptive statistics",
        "Variable",
        &["N", "Minimum", "Maximum", "Mean", "Std. Deviation"],
    );
    for d in rows {
        t.rows.push(Row::new(
            d.variable.label(),
            vec![Cell::Int(d.n as i64), Cell::opt(d.min), Cell::opt(d.max), Cell::opt(d.mean), Cell::opt(d.std)],
        ));
        if let Some(f) = &d.flag {
            t.notes.push(format!("{}: {f}", d.variable.label()));
        }
    }
    t
}

/// Lower triangle: a correlation row and a probability row per variable.
fn correlation_table(m: &CorrelationMatrix) -> Table {
    let names: Vec<&str> = m.variables.iter().map(|v| v.name()).collect();
    let mut t = Table::new("correlations", "Pearson correlations", "Variable", &names);
    let k = names.len();
    for i in 0..k {
        let mut r = vec![Cell::Empty; k];
        let mut p = vec![Cell::Empty; k];
        for j in 0..=i {
            let c = m.get(i, j);
            r[j] = Cell::opt(c.r);
            if j < i {
                p[j] = Cell::opt(c.p);
                if let Some(note) = &c.note {
                    t.notes.push(format!("{} / {}: {note}", names[i], names[j]));
                }
            }
        }
        t.rows.push(Row::new(names[i], r));
        t.rows.push(Row::new(format!("{} Prob.", names[i]), p));
    }
    t.notes.push("Pairwise deletion; two-sided t-test p-values".to_owned());
    t
}

fn stationarity_table(results: &[(String, Result<StationarityResult, DiagnosticsError>)]) -> Table {
    let mut t = Table::new(
        "stationarity",
        "Unit root tests",
        "Variable",
        &[
            "Level ADF",
            "Level Prob.",
            "Difference ADF",
            "Difference Prob.",
            "5% critical value",
            "Order",
            "Fisher Chi-Sq",
            "Fisher Prob.",
        ],
    );
    for (name, res) in results {
        match res {
            Ok(s) => {
                let bracket = |r: &TestResult| r.p_bracket.clone().map_or(Cell::Empty, Cell::Text);
                let diff = s.difference.as_ref();
                t.rows.push(Row::new(
                    name.clone(),
                    vec![
                        Cell::num(s.level.statistic),
                        bracket(&s.level),
                        Cell::opt(diff.map(|d| d.statistic)),
                        diff.map_or(Cell::Empty, bracket),
                        Cell::opt(s.reported().critical_values.get("5%").copied()),
                        Cell::text(s.order.label()),
                        Cell::opt(s.fisher.as_ref().map(|f| f.statistic)),
                        Cell::opt(s.fisher.as_ref().and_then(|f| f.p_value)),
                    ],
                ));
                t.notes.push(format!("{name} levels: {}", s.level.detail));
                if let Some(d) = diff {
                    t.notes.push(format!("{name} differences: {}", d.detail));
                }
                t.notes.extend(s.notes.iter().map(|n| format!("{name}: {n}")));
            }
            Err(e) => {
                t.rows.push(Row::new(name.clone(), {
                    let mut cells = vec![Cell::Empty; 8];
                    cells[5] = Cell::text("not tested");
                    cells
                }));
                t.notes.push(format!("{name}: {e}"));
            }
        }
    }
    t.notes.push("Pooled series ADF with constant; probabilities are critical-value brackets".to_owned());
    t
}

fn model_title(id: ModelId) -> &'static str {
    match id {
        ModelId::ValueDirect => "Value model, direct",
        ModelId::ValueModerated => "Value model, moderated by ownership",
        ModelId::RiskDirect => "Risk model, direct",
        ModelId::RiskModerated => "Risk model, moderated by ownership",
    }
}

fn robustness_name(r: &EstimationReport) -> String {
    format!("robustness_{}_{}", r.model_id().name(), r.spec.marin_variant.name())
}

/// Every output table in emission order.
pub fn build_tables(a: &Analysis) -> Vec<Table> {
    let mut tables = vec![
        descriptives_table(&a.descriptives),
        correlation_table(&a.correlations),
        stationarity_table(&a.stationarity),
    ];
    for r in &a.models {
        tables.push(model_table(r.model_id().name(), model_title(r.model_id()), r));
    }
    let get = |id| a.model(id).expect("analysis holds all four models");
    tables.push(pair_table(
        "value_models",
        "Value models",
        &["Direct Model", "Moderating Model"],
        &[get(ModelId::ValueDirect), get(ModelId::ValueModerated)],
    ));
    tables.push(pair_table(
        "risk_models",
        "Risk models",
        &["Direct Model", "Moderating Model"],
        &[get(ModelId::RiskDirect), get(ModelId::RiskModerated)],
    ));
    for r in &a.robustness {
        let title = format!("{}, {}", model_title(r.model_id()), r.spec.marin_variant.description());
        tables.push(model_table(&robustness_name(r), &title, r));
    }
    for (name, title, id) in [
        ("robustness_value", "Value model robustness", ModelId::ValueModerated),
        ("robustness_risk", "Risk model robustness", ModelId::RiskModerated),
    ] {
        let reports: Vec<&EstimationReport> = a.robustness.iter().filter(|r| r.model_id() == id).collect();
        if reports.len() == 2 {
            tables.push(pair_table(name, title, &["First Alternative", "Second Alternative"], &reports));
        }
    }
    tables
}

fn summary(table: String, r: &EstimationReport) -> ModelSummary {
    let h = r.hausman();
    ModelSummary {
        table,
        model: r.model_id().name().to_owned(),
        marin_variant: r.spec.marin_variant.name().to_owned(),
        dependent: r.spec.dependent_label().to_owned(),
        nobs: r.fit.nobs,
        dropped_rows: r.dropped_rows,
        df_resid: r.fit.df_resid,
        r_squared: r.fit.r_squared,
        hausman_statistic: h.map(|t| t.statistic),
        hausman_p: h.and_then(|t| t.p_value),
        hausman_decision: h.map(|t| t.decision.label().to_owned()),
        warnings: r.warnings.clone(),
    }
}

/// Manifest entries for the four models and the robustness variants.
pub fn model_summaries(a: &Analysis) -> Vec<ModelSummary> {
    a.models
        .iter()
        .map(|r| summary(r.model_id().name().to_owned(), r))
        .chain(a.robustness.iter().map(|r| summary(robustness_name(r), r)))
        .collect()
}
