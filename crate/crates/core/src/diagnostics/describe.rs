//! Descriptive statistics and the pairwise Pearson correlation matrix.

use serde::Serialize;

use crate::stats;
use crate::variables::{DerivedPanel, Variable};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveRow {
    pub variable: Variable,
    pub n: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1); absent below two observations.
    pub std: Option<f64>,
    pub flag: Option<String>,
}

/// N, minimum, maximum, mean and sample standard deviation per variable.
pub fn descriptives(panel: &DerivedPanel, variables: &[Variable]) -> Vec<DescriptiveRow> {
    variables
        .iter()
        .map(|&variable| {
            let v = panel.column(variable);
            let n = v.len();
            if n == 0 {
                return DescriptiveRow {
                    variable,
                    n,
                    min: None,
                    max: None,
                    mean: None,
                    std: None,
                    flag: Some("no observations".into()),
                };
            }
            let mean = v.iter().sum::<f64>() / n as f64;
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (std, flag) = if n < 2 {
                (None, Some("single observation; standard deviation undefined".into()))
            } else {
                let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
                (Some((ss / (n - 1) as f64).sqrt()), None)
            };
            // Rounding can put the mean a hair outside [min, max] for constant columns.
            let mean = mean.clamp(min, max);
            DescriptiveRow { variable, n, min: Some(min), max: Some(max), mean: Some(mean), std, flag }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub r: Option<f64>,
    pub p: Option<f64>,
    /// Complete pairs used.
    pub n: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub variables: Vec<Variable>,
    /// Row-major, `variables.len()` squared entries.
    pub cells: Vec<Correlation>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> &Correlation {
        &self.cells[i * self.variables.len() + j]
    }
}

fn pair(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len();
    if n < 3 {
        return Correlation { r: None, p: None, n, note: Some("fewer than 3 complete pairs".into()) };
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n as f64, b.iter().sum::<f64>() / n as f64);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Correlation { r: None, p: None, n, note: Some("constant variable".into()) };
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        stats::t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Correlation { r: Some(r), p: Some(p), n, note: None }
}

/// Pearson correlations with pairwise deletion and two-sided t p-values.
pub fn correlation_matrix(panel: &DerivedPanel, variables: &[Variable]) -> CorrelationMatrix {
    let k = variables.len();
    let mut cells = vec![Correlation { r: None, p: None, n: 0, note: None }; k * k];
    for i in 0..k {
        for j in i..k {
            let (a, b): (Vec<f64>, Vec<f64>) = panel
                .iter()
                .filter_map(|row| Some((row.get(variables[i])?, row.get(variables[j])?)))
                .unzip();
            let mut c = pair(&a, &b);
            if i == j && c.r.is_some() {
                c.r = Some(1.0);
                c.p = Some(0.0);
            }
            cells[j * k + i] = c.clone();
            cells[i * k + j] = c;
        }
    }
    CorrelationMatrix { variables: variables.to_vec(), cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{FirmId, MarketId};
    use crate::variables::DerivedRow;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn row(i: usize, price: f64, marin: f64, ow: f64) -> DerivedRow {
        DerivedRow {
            firm_id: FirmId::new(format!("F{i:03}")),
            market_id: MarketId::new("M"),
            year: 2010,
            price,
            book_value: 1.0,
            x_abnormal: 0.0,
            marin,
            marin_alt_assets: marin,
            marin_alt_log: if i % 4 == 0 { None } else { Some(marin.ln()) },
            age: 10.0,
            size: 5.0,
            total_assets: 100.0,
            lev: 0.5,
            ow,
            beta: 1.0,
            pb_ratio: price,
            zero_marketing: false,
        }
    }

    fn panel(rows: Vec<DerivedRow>) -> DerivedPanel {
        DerivedPanel {
            rows: rows.into_iter().map(|r| ((r.firm_id.clone(), r.year), r)).collect(),
            exclusions: Vec::new(),
        }
    }

    fn random_panel(seed: u64, n: usize) -> DerivedPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        panel(
            (0..n)
                .map(|i| {
                    let p: f64 = rng.sample(StandardNormal);
                    let m: f64 = rng.random_range(0.05..0.5);
                    row(i, p, m, 0.3 * p + rng.sample::<f64, _>(StandardNormal))
                })
                .collect(),
        )
    }

    #[test]
    fn single_row_flags_std() {
        let d = descriptives(&panel(vec![row(1, 2.0, 0.2, 0.5)]), &[Variable::Price]);
        assert_eq!(d[0].std, None);
        assert!(d[0].flag.is_some());
    }

    #[test]
    fn constant_column() {
        let p = panel((0..5).map(|i| row(i, 2.0, 0.2, 0.5)).collect());
        let d = &descriptives(&p, &[Variable::Ownership])[0];
        assert_eq!(d.std, Some(0.0));
        assert_eq!(d.min, d.max);
        assert_eq!(d.mean, d.min);
        let c = correlation_matrix(&p, &[Variable::Ownership, Variable::Price]);
        assert_eq!(c.get(0, 1).r, None);
        assert_eq!(c.get(0, 1).note.as_deref(), Some("constant variable"));
    }

    #[test]
    fn brute_force_oracle() {
        let p = random_panel(3, 50);
        let c = correlation_matrix(&p, &[Variable::Price, Variable::Ownership]);
        let a = p.column(Variable::Price);
        let b = p.column(Variable::Ownership);
        let n = 50.0;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((c.get(0, 1).r.unwrap() - cov / (sa * sb)).abs() < 1e-12);
    }

    #[test]
    fn perfect_correlations() {
        let p = panel((0..10).map(|i| row(i, i as f64, 0.1 + i as f64 / 100.0, -(i as f64))).collect());
        let c = correlation_matrix(&p, &[Variable::Price, Variable::Ownership]);
        assert_eq!(c.get(0, 0).r, Some(1.0));
        assert_eq!(c.get(0, 0).p, Some(0.0));
        assert!((c.get(0, 1).r.unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(c.get(0, 1).p, Some(0.0));
    }

    #[test]
    fn pairwise_deletion() {
        let p = random_panel(4, 40);
        let c = correlation_matrix(&p, &[Variable::Price, Variable::MarinLog]);
        assert_eq!(c.get(0, 0).n, 40);
        assert_eq!(c.get(0, 1).n, 30);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn matrix_properties(seed in 0u64..10_000, n in 3usize..60) {
            let p = random_panel(seed, n);
            let vars = [Variable::Price, Variable::Marin, Variable::Ownership];
            let c = correlation_matrix(&p, &vars);
            for i in 0..3 {
                prop_assert_eq!(c.get(i, i).r, Some(1.0));
                for j in 0..3 {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                    let r = c.get(i, j).r.unwrap();
                    prop_assert!(r.abs() <= 1.0);
                }
            }
            for d in descriptives(&p, &vars) {
                prop_assert!(d.min.unwrap() <= d.mean.unwrap() && d.mean.unwrap() <= d.max.unwrap());
            }
        }
    }
}
