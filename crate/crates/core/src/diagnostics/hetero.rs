//! Likelihood-ratio test for groupwise heteroskedasticity.

use std::collections::BTreeMap;

use super::{DiagnosticsError, TestResult};
use crate::panel::FirmId;
use crate::stats;

/// LR = n·ln σ̂² − Σ_g n_g·ln σ̂²_g with maximum-likelihood variances,
/// against χ²(G − 1). Groups are the firms in `rows`.
pub fn lr_heteroskedasticity(residuals: &[f64], rows: &[(FirmId, i32)]) -> Result<TestResult, DiagnosticsError> {
    if residuals.len() != rows.len() {
        return Err(DiagnosticsError::LengthMismatch(residuals.len(), rows.len()));
    }
    let mut groups: BTreeMap<&FirmId, (usize, f64)> = BTreeMap::new();
    for (e, (firm, _)) in residuals.iter().zip(rows) {
        let g = groups.entry(firm).or_default();
        g.0 += 1;
        g.1 += e * e;
    }
    if groups.len() < 2 {
        return Err(DiagnosticsError::TooFewGroups(groups.len()));
    }
    if let Some((firm, (n, _))) = groups.iter().find(|(_, (n, _))| *n < 3) {
        return Err(DiagnosticsError::GroupTooSmall { group: firm.to_string(), n: *n });
    }
    if let Some((firm, _)) = groups.iter().find(|(_, (_, ss))| *ss <= 0.0) {
        return Err(DiagnosticsError::Degenerate(format!("group {firm} has zero residual variance")));
    }
    let n = residuals.len() as f64;
    let pooled = groups.values().map(|(_, ss)| ss).sum::<f64>() / n;
    let within: f64 = groups.values().map(|(ng, ss)| *ng as f64 * (ss / *ng as f64).ln()).sum();
    let stat = (n * pooled.ln() - within).max(0.0);
    let df = (groups.len() - 1) as f64;
    Ok(TestResult::from_p(
        "LR heteroskedasticity",
        stat,
        stats::chi2_sf(stat, df),
        Some(df),
        format!("{} groups, {} residuals; null: equal group variances", groups.len(), residuals.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::Decision;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn rows(groups: usize, per: usize) -> Vec<(FirmId, i32)> {
        (0..groups).flat_map(|g| (0..per).map(move |t| (FirmId::new(format!("G{g:02}")), t as i32))).collect()
    }

    fn draws(seed: u64, groups: usize, per: usize, sd: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..groups * per).map(|i| sd(i / per) * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn identical_groups_give_zero() {
        let e: Vec<f64> = (0..4).flat_map(|_| [1.0, -2.0, 0.5]).collect();
        let t = lr_heteroskedasticity(&e, &rows(4, 3)).unwrap();
        assert!(t.statistic.abs() < 1e-12);
        assert_eq!(t.df, Some(3.0));
    }

    #[test]
    fn size_close_to_nominal() {
        let rejections = (0..500)
            .filter(|&s| {
                lr_heteroskedasticity(&draws(s, 20, 10, |_| 1.0), &rows(20, 10)).unwrap().decision == Decision::Reject
            })
            .count();
        // Small-sample LR over-rejects mildly at 10 observations per group.
        assert!((10..=60).contains(&rejections), "{rejections}");
    }

    #[test]
    fn detects_one_noisy_group() {
        let e = draws(9, 20, 10, |g| if g == 0 { 10.0 } else { 1.0 });
        assert!(lr_heteroskedasticity(&e, &rows(20, 10)).unwrap().p_value.unwrap() < 0.001);
    }

    #[test]
    fn group_requirements() {
        assert_eq!(lr_heteroskedasticity(&[1.0, 2.0, 3.0], &rows(1, 3)), Err(DiagnosticsError::TooFewGroups(1)));
        assert!(matches!(
            lr_heteroskedasticity(&[1.0; 4], &rows(2, 2)),
            Err(DiagnosticsError::GroupTooSmall { n: 2, .. })
        ));
    }
}
