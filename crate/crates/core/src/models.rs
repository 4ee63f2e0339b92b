//! The four regression specifications (value and risk, direct and moderated),
//! the marketing-intensity variants, and estimation into reports.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{hausman_test, lr_heteroskedasticity, TestResult};
use crate::panel::FirmId;
use crate::regress::{fe_fit, ols_fit, re_fit, CovKind, DesignMatrix, Effects, FitResult, RegressError, INTERCEPT};
use crate::variables::{DerivedPanel, Variable};

/// Column name of the marketing-intensity regressor, whatever its variant.
pub const MARIN: &str = "Marin";
/// Column name of the ownership × marketing interaction.
pub const INTERACTION: &str = "OW*Marin";
/// Dependent label when the book-value coefficient is fixed at one.
pub const PRICE_LESS_BOOK: &str = "P-B";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{model}: variable {variable} has no observations in the panel")]
    MissingVariable { model: String, variable: String },
    #[error("interaction inputs differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{model}: {source}")]
    Regress { model: String, source: RegressError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    ValueDirect,
    ValueModerated,
    RiskDirect,
    RiskModerated,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::ValueDirect, ModelId::ValueModerated, ModelId::RiskDirect, ModelId::RiskModerated];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::ValueDirect => "value_direct",
            ModelId::ValueModerated => "value_moderated",
            ModelId::RiskDirect => "risk_direct",
            ModelId::RiskModerated => "risk_moderated",
        }
    }

    pub fn is_moderated(self) -> bool {
        matches!(self, ModelId::ValueModerated | ModelId::RiskModerated)
    }

    pub fn is_value(self) -> bool {
        matches!(self, ModelId::ValueDirect | ModelId::ValueModerated)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarinVariant {
    /// (SG&A − R&D) / sales.
    SalesRatio,
    /// (SG&A − R&D) / total assets.
    AssetsRatio,
    /// ln(SG&A − R&D).
    LogLevel,
}

impl MarinVariant {
    pub const ALL: [MarinVariant; 3] = [MarinVariant::SalesRatio, MarinVariant::AssetsRatio, MarinVariant::LogLevel];

    /// Short name used on the command line and in file names.
    pub fn name(self) -> &'static str {
        match self {
            MarinVariant::SalesRatio => "sales",
            MarinVariant::AssetsRatio => "assets",
            MarinVariant::LogLevel => "log",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        MarinVariant::ALL.into_iter().find(|v| v.name() == s)
    }

    pub fn variable(self) -> Variable {
        match self {
            MarinVariant::SalesRatio => Variable::Marin,
            MarinVariant::AssetsRatio => Variable::MarinAssets,
            MarinVariant::LogLevel => Variable::MarinLog,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            MarinVariant::SalesRatio => "marketing expense / sales",
            MarinVariant::AssetsRatio => "marketing expense / total assets",
            MarinVariant::LogLevel => "ln(marketing expense)",
        }
    }
}

/// One right-hand-side term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Term {
    Var(Variable),
    /// Product of two variables (ownership first, marketing second).
    Interaction(Variable, Variable),
}

fn column_name(v: Variable) -> &'static str {
    match v {
        Variable::Marin | Variable::MarinAssets | Variable::MarinLog => MARIN,
        other => other.name(),
    }
}

impl Term {
    pub fn name(self) -> String {
        match self {
            Term::Var(v) => column_name(v).to_owned(),
            Term::Interaction(a, b) => format!("{}*{}", column_name(a), column_name(b)),
        }
    }

    fn variables(self) -> Vec<Variable> {
        match self {
            Term::Var(v) => vec![v],
            Term::Interaction(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    pub model_id: ModelId,
    pub dependent: Variable,
    /// Ordered regressors, intercept excluded (it is always added).
    pub regressors: Vec<Term>,
    pub marin_variant: MarinVariant,
    pub effects: Effects,
    pub cov_kind: CovKind,
    /// Mean-center both factors before forming the interaction.
    pub center_interaction: bool,
    /// Regress P − B on the remaining terms instead of estimating B's coefficient.
    pub constrain_book_unit: bool,
}

impl ModelSpec {
    pub fn with_centering(mut self, center: bool) -> Self {
        self.center_interaction = center;
        self
    }

    pub fn with_book_unit(mut self, constrain: bool) -> Self {
        if self.model_id.is_value() {
            self.constrain_book_unit = constrain;
            if constrain {
                self.regressors.retain(|t| *t != Term::Var(Variable::Book));
            } else if !self.regressors.contains(&Term::Var(Variable::Book)) {
                self.regressors.insert(0, Term::Var(Variable::Book));
            }
        }
        self
    }

    pub fn interaction(&self) -> Option<(Variable, Variable)> {
        self.regressors.iter().find_map(|t| match t {
            Term::Interaction(a, b) => Some((*a, *b)),
            Term::Var(_) => None,
        })
    }

    pub fn dependent_label(&self) -> &'static str {
        if self.constrain_book_unit {
            PRICE_LESS_BOOK
        } else {
            self.dependent.name()
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        self.regressors.iter().map(|t| t.name()).collect()
    }
}

/// Specification of `model_id` under the given marketing-intensity variant.
pub fn spec_for(model_id: ModelId, marin_variant: MarinVariant) -> ModelSpec {
    let m = marin_variant.variable();
    let mut regressors = Vec::new();
    let dependent = if model_id.is_value() {
        regressors.extend([Term::Var(Variable::Book), Term::Var(Variable::AbnormalEarnings)]);
        Variable::Price
    } else {
        Variable::Beta
    };
    regressors.extend([Term::Var(m), Term::Var(Variable::Age), Term::Var(Variable::Size), Term::Var(Variable::Lev)]);
    if model_id.is_moderated() {
        regressors.extend([Term::Var(Variable::Ownership), Term::Interaction(Variable::Ownership, m)]);
    }
    ModelSpec {
        model_id,
        dependent,
        regressors,
        marin_variant,
        effects: Effects::Entity,
        cov_kind: CovKind::WhiteCrossSection,
        center_interaction: false,
        constrain_book_unit: false,
    }
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter().map(|x| x - m).collect()
}

/// Elementwise product, optionally of the mean-centered inputs.
pub fn build_interaction(marin: &[f64], ow: &[f64], centering: bool) -> Result<Vec<f64>, ModelError> {
    if marin.len() != ow.len() {
        return Err(ModelError::LengthMismatch(marin.len(), ow.len()));
    }
    if centering {
        Ok(centered(marin).iter().zip(centered(ow)).map(|(a, b)| a * b).collect())
    } else {
        Ok(marin.iter().zip(ow).map(|(a, b)| a * b).collect())
    }
}

/// One coefficient row in spec order; empty when the column was dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub variable: String,
    pub coefficient: Option<f64>,
    pub std_error: Option<f64>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub spec: ModelSpec,
    /// Fixed effects with period-clustered covariance.
    pub fit: FitResult,
    /// Hausman (FE vs RE) and LR heteroskedasticity, where computable.
    pub diagnostics: Vec<TestResult>,
    /// Intercept first, then regressors in spec order.
    pub table: Vec<CoefficientRow>,
    pub r_squared_label: String,
    /// Panel rows left out because a model variable was absent.
    pub dropped_rows: usize,
    pub warnings: Vec<String>,
}

impl EstimationReport {
    pub fn model_id(&self) -> ModelId {
        self.spec.model_id
    }

    pub fn row(&self, variable: &str) -> Option<&CoefficientRow> {
        self.table.iter().find(|r| r.variable == variable)
    }

    pub fn hausman(&self) -> Option<&TestResult> {
        self.diagnostics.iter().find(|t| t.name == "Hausman")
    }
}

struct Sample {
    y: Vec<f64>,
    columns: Vec<(String, Vec<f64>)>,
    rows: Vec<(FirmId, i32)>,
    dropped: usize,
}

fn sample(panel: &DerivedPanel, spec: &ModelSpec) -> Result<Sample, ModelError> {
    let mut needed = vec![spec.dependent];
    if spec.constrain_book_unit {
        needed.push(Variable::Book);
    }
    for t in &spec.regressors {
        needed.extend(t.variables());
    }
    for v in &needed {
        if panel.iter().all(|r| r.get(*v).is_none()) {
            return Err(ModelError::MissingVariable { model: spec.model_id.to_string(), variable: v.name().into() });
        }
    }
    let complete: Vec<_> = panel.iter().filter(|r| needed.iter().all(|v| r.get(*v).is_some())).collect();
    let dropped = panel.len() - complete.len();
    let col = |v: Variable| -> Vec<f64> { complete.iter().map(|r| r.get(v).unwrap()).collect() };

    let mut y = col(spec.dependent);
    if spec.constrain_book_unit {
        for (y, b) in y.iter_mut().zip(col(Variable::Book)) {
            *y -= b;
        }
    }
    let mut columns = Vec::with_capacity(spec.regressors.len());
    for t in &spec.regressors {
        let values = match *t {
            Term::Var(v) => col(v),
            Term::Interaction(a, b) => build_interaction(&col(b), &col(a), spec.center_interaction)?,
        };
        columns.push((t.name(), values));
    }
    let rows = complete.iter().map(|r| (r.firm_id.clone(), r.year)).collect();
    Ok(Sample { y, columns, rows, dropped })
}

/// Fits the specification with entity fixed effects and period-clustered
/// standard errors; Hausman (FE vs RE) and the LR heteroskedasticity test are
/// attached as advisory diagnostics.
pub fn estimate(panel: &DerivedPanel, spec: &ModelSpec) -> Result<EstimationReport, ModelError> {
    let model = spec.model_id.to_string();
    let wrap = |source: RegressError| ModelError::Regress { model: model.clone(), source };
    let s = sample(panel, spec)?;

    let mut warnings = Vec::new();
    if s.dropped > 0 {
        warnings.push(format!("{} row(s) dropped for missing {} values", s.dropped, spec.marin_variant.description()));
    }
    let (kept, zero): (Vec<_>, Vec<_>) = s.columns.into_iter().partition(|(_, v)| v.iter().any(|x| *x != 0.0));
    for (name, _) in &zero {
        warnings.push(format!("{name} is identically zero and was dropped"));
    }
    let x = DesignMatrix::from_columns(kept, s.rows).map_err(&wrap)?;

    let fit = fe_fit(&x, &s.y, spec.cov_kind).map_err(&wrap)?;
    warnings.extend(fit.warnings.iter().cloned());

    let mut diagnostics = Vec::new();
    let hausman = fe_fit(&x, &s.y, CovKind::Classical)
        .and_then(|fe| re_fit(&x, &s.y).map(|re| (fe, re)))
        .map_err(|e| e.to_string())
        .and_then(|(fe, re)| {
            if let Some(vc) = re.variance_components.filter(|vc| vc.clamped) {
                warnings.push(format!("random effects: between variance clamped to zero (σ²_e = {:.6e})", vc.sigma2_e));
            }
            hausman_test(&fe, &re).map_err(|e| e.to_string())
        });
    match hausman {
        Ok(t) => diagnostics.push(t),
        Err(e) => warnings.push(format!("Hausman test not computed: {e}")),
    }
    let lr = ols_fit(&x, &s.y, true)
        .map_err(|e| e.to_string())
        .and_then(|pooled| lr_heteroskedasticity(&pooled.residuals, &pooled.row_index).map_err(|e| e.to_string()));
    match lr {
        Ok(t) => diagnostics.push(t),
        Err(e) => warnings.push(format!("LR heteroskedasticity test not computed: {e}")),
    }

    let mut table = Vec::with_capacity(spec.regressors.len() + 1);
    for name in std::iter::once(INTERCEPT.to_owned()).chain(spec.column_names()) {
        let row = match fit.index_of(&name) {
            Some(j) => CoefficientRow {
                variable: name,
                coefficient: Some(fit.coefficients[j]),
                std_error: Some(fit.std_errors[j]),
                t_stat: Some(fit.t_stats[j]),
                p_value: Some(fit.p_values[j]),
            },
            None => CoefficientRow { variable: name, coefficient: None, std_error: None, t_stat: None, p_value: None },
        };
        table.push(row);
    }

    Ok(EstimationReport {
        r_squared_label: format!("R-squared ({})", fit.r_squared_kind.label()),
        spec: spec.clone(),
        fit,
        diagnostics,
        table,
        dropped_rows: s.dropped,
        warnings,
    })
}

/// Both moderated models under the assets-ratio and log-level variants.
pub fn robustness_suite(
    panel: &DerivedPanel,
    center: bool,
    constrain_book_unit: bool,
) -> Result<Vec<EstimationReport>, ModelError> {
    let mut out = Vec::with_capacity(4);
    for variant in [MarinVariant::AssetsRatio, MarinVariant::LogLevel] {
        for model in [ModelId::ValueModerated, ModelId::RiskModerated] {
            let spec = spec_for(model, variant).with_centering(center).with_book_unit(constrain_book_unit);
            out.push(estimate(panel, &spec)?);
        }
    }
    Ok(out)
}
