//! Regression and meta-analysis: dummy-coded least squares, partial R²
//! importance, and random-effects meta-regression of effect size on the
//! number of attributes.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::simulate::ResponseDataset;

/// Outcome column selector for the regression helpers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeSelector {
    Choice,
    Rating,
}

/// Column layout of the dummy-coded design matrix: an intercept followed by
/// one indicator per non-baseline level of each attribute (baseline = the
/// first level).
#[derive(Debug, Clone)]
pub struct DummyLayout {
    level_counts: Vec<usize>,
    offsets: Vec<usize>,
    columns: usize,
}

impl DummyLayout {
    pub fn of(dataset: &ResponseDataset) -> DummyLayout {
        Self::from_level_counts(dataset.level_counts.clone())
    }

    pub fn from_level_counts(level_counts: Vec<usize>) -> DummyLayout {
        let mut offsets = Vec::with_capacity(level_counts.len());
        let mut next = 1; // column 0 is the intercept
        for &count in &level_counts {
            offsets.push(next);
            next += count.saturating_sub(1);
        }
        DummyLayout {
            level_counts,
            offsets,
            columns: next,
        }
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    /// Column of the indicator for (attribute, level); `None` for baselines.
    pub fn column_of(&self, attribute: usize, level: usize) -> Option<usize> {
        (level > 0).then(|| self.offsets[attribute] + level - 1)
    }

    /// Fitted coefficient for a level; baselines are pinned at zero.
    pub fn coefficient(&self, coefficients: &[f64], attribute: usize, level: usize) -> f64 {
        match self.column_of(attribute, level) {
            Some(col) => coefficients[col],
            None => 0.0,
        }
    }

    /// Human-readable name of a design-matrix column.
    pub fn column_name(&self, dataset: &ResponseDataset, column: usize) -> String {
        if column == 0 {
            return "intercept".into();
        }
        for (attr, &offset) in self.offsets.iter().enumerate() {
            let width = self.level_counts[attr].saturating_sub(1);
            if column >= offset && column < offset + width {
                return format!("{}[{}]", dataset.attr_names[attr], column - offset + 1);
            }
        }
        format!("column{column}")
    }

    /// Write one dummy-coded row into `out` (length `columns()`).
    pub fn fill_row(&self, out: &mut [f64], levels: &[u16]) {
        out.fill(0.0);
        out[0] = 1.0;
        for (attr, &level) in levels.iter().enumerate() {
            if let Some(col) = self.column_of(attr, level as usize) {
                out[col] = 1.0;
            }
        }
    }
}

/// Ordinary least squares fit of an outcome on attribute dummies.
#[derive(Debug, Clone, PartialEq)]
pub struct DummyFit {
    /// Coefficients in [`DummyLayout`] column order (intercept first).
    pub coefficients: Vec<f64>,
    pub r2: f64,
    pub residual_se: f64,
}

/// QR-based least squares; errors name the collinear columns when the
/// design matrix is rank deficient.
fn least_squares(
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: &dyn Fn(usize) -> String,
) -> Result<DVector<f64>> {
    let p = x.ncols();
    if x.nrows() < p {
        return Err(Error::Estimation(format!(
            "need at least {p} rows to fit {p} coefficients, got {}",
            x.nrows()
        )));
    }
    // Rank check via the column-pivoted R diagonal (non-increasing by
    // construction, so trailing near-zeros flag the collinear columns).
    let pivoted = x.clone().col_piv_qr();
    let r_diag: Vec<f64> = (0..p).map(|i| pivoted.r()[(i, i)].abs()).collect();
    let max_diag = r_diag.iter().cloned().fold(0.0, f64::max);
    let deficient: Vec<usize> = (0..p).filter(|&i| r_diag[i] <= max_diag * 1e-10).collect();
    if !deficient.is_empty() {
        // Recover original column indices by applying the same permutation
        // to an index row vector.
        let mut index_matrix = DMatrix::<f64>::zeros(1, p);
        for i in 0..p {
            index_matrix[(0, i)] = i as f64;
        }
        pivoted.p().permute_columns(&mut index_matrix);
        let cols: Vec<String> = deficient
            .iter()
            .map(|&pos| names(index_matrix[(0, pos)] as usize))
            .collect();
        return Err(Error::Estimation(format!(
            "design matrix is rank deficient; collinear columns: {}",
            cols.join(", ")
        )));
    }
    let qr = x.qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Estimation("least squares solve failed".into()))
}

/// OLS of the chosen outcome on all attribute dummies.
pub fn dummy_regression(dataset: &ResponseDataset, outcome: OutcomeSelector) -> Result<DummyFit> {
    dummy_regression_subset(dataset, outcome, None)
}

/// As [`dummy_regression`], optionally excluding one attribute's dummies
/// (used by the partial-R² importance measure).
fn dummy_regression_subset(
    dataset: &ResponseDataset,
    outcome: OutcomeSelector,
    exclude_attribute: Option<usize>,
) -> Result<DummyFit> {
    let n = dataset.rows.len();
    if n == 0 {
        return Err(Error::Estimation("dataset is empty".into()));
    }
    let layout = DummyLayout::of(dataset);
    let keep: Vec<usize> = (0..layout.columns())
        .filter(|&col| {
            if col == 0 {
                return true;
            }
            match exclude_attribute {
                Some(excluded) => {
                    let offset = layout.offsets[excluded];
                    let width = layout.level_counts[excluded].saturating_sub(1);
                    !(col >= offset && col < offset + width)
                }
                None => true,
            }
        })
        .collect();
    let p = keep.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    let mut full_row = vec![0.0; layout.columns()];
    for (i, row) in dataset.rows.iter().enumerate() {
        layout.fill_row(&mut full_row, &row.levels);
        for (j, &col) in keep.iter().enumerate() {
            x[(i, j)] = full_row[col];
        }
        y[i] = match outcome {
            OutcomeSelector::Choice => f64::from(row.choice),
            OutcomeSelector::Rating => row.rating,
        };
    }

    let name_of = |j: usize| layout.column_name(dataset, keep[j]);
    let beta = least_squares(x.clone(), y.clone(), &name_of)?;
    let fitted = x * &beta;
    let rss = (&y - &fitted).norm_squared();
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if tss > 0.0 {
        (1.0 - rss / tss).max(0.0)
    } else {
        0.0
    };
    let dof = n.saturating_sub(p).max(1);
    let residual_se = (rss / dof as f64).sqrt();

    // Re-expand coefficients to the full layout with zeros for excluded columns.
    let mut coefficients = vec![0.0; layout.columns()];
    for (j, &col) in keep.iter().enumerate() {
        coefficients[col] = beta[j];
    }
    Ok(DummyFit {
        coefficients,
        r2,
        residual_se,
    })
}

/// Importance of one attribute as the R² lost by dropping its dummies.
pub fn partial_r2(
    dataset: &ResponseDataset,
    outcome: OutcomeSelector,
    attribute: usize,
) -> Result<f64> {
    if attribute >= dataset.num_attributes() {
        return Err(Error::Estimation(format!(
            "attribute index {attribute} outside the dataset's {} attributes",
            dataset.num_attributes()
        )));
    }
    let full = dummy_regression(dataset, outcome)?;
    if dataset.num_attributes() == 1 {
        return Ok(full.r2);
    }
    let without = dummy_regression_subset(dataset, outcome, Some(attribute))?;
    Ok(full.r2 - without.r2)
}

/// One study-level effect for meta-analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTableRow {
    pub study_id: String,
    pub k_attributes: u32,
    pub effect: f64,
    pub variance: f64,
    pub country: Option<String>,
}

/// Effect table feeding the meta-regression.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectTable {
    pub rows: Vec<EffectTableRow>,
}

impl EffectTable {
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<EffectTable> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 4 || cols[..4] != ["study_id", "k_attributes", "effect", "variance"] {
            return Err(Error::InvalidInput(
                "effect table header must be study_id,k_attributes,effect,variance[,country]"
                    .into(),
            ));
        }
        let has_country = cols.len() > 4 && cols[4] == "country";
        let mut rows = Vec::new();
        for record in csv_reader.records() {
            let record = record?;
            let bad = |f: &str| Error::InvalidInput(format!("bad effect table field '{f}'"));
            rows.push(EffectTableRow {
                study_id: record[0].to_string(),
                k_attributes: record[1].parse().map_err(|_| bad(&record[1]))?,
                effect: record[2].parse().map_err(|_| bad(&record[2]))?,
                variance: record[3].parse().map_err(|_| bad(&record[3]))?,
                country: (has_country && !record[4].is_empty()).then(|| record[4].to_string()),
            });
        }
        Ok(EffectTable { rows })
    }

    pub fn read_csv_path(path: &Path) -> Result<EffectTable> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let has_country = self.rows.iter().any(|r| r.country.is_some());
        if has_country {
            writeln!(writer, "study_id,k_attributes,effect,variance,country")?;
        } else {
            writeln!(writer, "study_id,k_attributes,effect,variance")?;
        }
        for row in &self.rows {
            let mut line = format!(
                "{},{},{},{}",
                row.study_id,
                row.k_attributes,
                sig12(row.effect),
                sig12(row.variance)
            );
            if has_country {
                line.push(',');
                line.push_str(row.country.as_deref().unwrap_or(""));
            }
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Map every effect to its absolute value, variances unchanged. Applied
/// before meta-regression when negative estimates should count by magnitude.
pub fn absolute_effect_mode(table: &EffectTable) -> EffectTable {
    EffectTable {
        rows: table
            .rows
            .iter()
            .map(|r| EffectTableRow {
                effect: r.effect.abs(),
                ..r.clone()
            })
            .collect(),
    }
}

/// Random-effects meta-regression fit of effect size on attribute count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// Residual between-study heterogeneity (method of moments, floored at 0).
    pub tau2: f64,
    /// Share of baseline heterogeneity explained by the attribute count;
    /// 0 when the intercept-only model already has none.
    pub r2_heterogeneity: f64,
}

/// DerSimonian-Laird random-effects meta-regression of `effect` on
/// `k_attributes`:
/// 1. inverse-variance weighted fit,
/// 2. method-of-moments tau² from the residual Q statistic, floored at 0,
/// 3. re-fit with weights 1 / (variance + tau²).
pub fn meta_regression(table: &EffectTable) -> Result<MetaFit> {
    let n = table.rows.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "meta-regression needs at least 3 studies, got {n}"
        )));
    }
    for row in &table.rows {
        if !row.variance.is_finite() || row.variance <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "study '{}' has non-positive variance {}",
                row.study_id, row.variance
            )));
        }
        if row.k_attributes == 0 {
            return Err(Error::InvalidInput(format!(
                "study '{}' has k_attributes = 0",
                row.study_id
            )));
        }
    }
    let x: Vec<f64> = table.rows.iter().map(|r| r.k_attributes as f64).collect();
    let y: Vec<f64> = table.rows.iter().map(|r| r.effect).collect();
    let v: Vec<f64> = table.rows.iter().map(|r| r.variance).collect();

    let tau2 = moments_tau2(&x, &y, &v, true)?;
    let weights: Vec<f64> = v.iter().map(|vi| 1.0 / (vi + tau2)).collect();
    let (coef, cov) = weighted_fit(&x, &y, &weights, true)?;

    let tau2_intercept_only = moments_tau2(&x, &y, &v, false)?;
    let r2_heterogeneity = if tau2_intercept_only > 0.0 {
        (1.0 - tau2 / tau2_intercept_only).max(0.0)
    } else {
        0.0
    };

    Ok(MetaFit {
        intercept: coef.0,
        slope: coef.1,
        intercept_se: cov.0.sqrt(),
        slope_se: cov.1.sqrt(),
        tau2,
        r2_heterogeneity,
    })
}

/// Method-of-moments tau² from the fixed-effect residual Q statistic:
/// `tau² = max(0, (Q - (n - p)) / (tr(W) - tr((X'WX)^-1 X'W²X)))`.
fn moments_tau2(x: &[f64], y: &[f64], v: &[f64], with_slope: bool) -> Result<f64> {
    let n = x.len();
    let p = if with_slope { 2 } else { 1 };
    let w: Vec<f64> = v.iter().map(|vi| 1.0 / vi).collect();
    let (coef, _) = weighted_fit(x, y, &w, with_slope)?;
    let q: f64 = (0..n)
        .map(|i| {
            let fitted = coef.0 + if with_slope { coef.1 * x[i] } else { 0.0 };
            w[i] * (y[i] - fitted).powi(2)
        })
        .sum();

    // tr(W) - tr((X'WX)^-1 X'W2X) with X = [1, x] (or just the intercept).
    let tr_w: f64 = w.iter().sum();
    let trace_term = if with_slope {
        let (s0, s1, s2) = (sum_w(&w, x, 0), sum_w(&w, x, 1), sum_w(&w, x, 2));
        let w2: Vec<f64> = w.iter().map(|wi| wi * wi).collect();
        let (t0, t1, t2) = (sum_w(&w2, x, 0), sum_w(&w2, x, 1), sum_w(&w2, x, 2));
        let det = s0 * s2 - s1 * s1;
        if det.abs() < 1e-14 * (s0 * s2).abs().max(1.0) {
            return Err(Error::InvalidInput(
                "meta-regression needs variation in k_attributes".into(),
            ));
        }
        // (X'WX)^-1 = [[s2, -s1], [-s1, s0]] / det; X'W2X = [[t0, t1], [t1, t2]].
        (s2 * t0 - 2.0 * s1 * t1 + s0 * t2) / det
    } else {
        sum_w(&w, x, 0).recip() * w.iter().map(|wi| wi * wi).sum::<f64>()
    };
    let denom = tr_w - trace_term;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(((q - (n - p) as f64) / denom).max(0.0))
}

fn sum_w(w: &[f64], x: &[f64], power: i32) -> f64 {
    w.iter().zip(x).map(|(wi, xi)| wi * xi.powi(power)).sum()
}

/// Weighted least squares of y on [1, x]; returns ((intercept, slope),
/// (var_intercept, var_slope)). Without a slope the second members are 0.
fn weighted_fit(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    with_slope: bool,
) -> Result<((f64, f64), (f64, f64))> {
    let s0 = sum_w(w, x, 0);
    if !with_slope {
        let sy: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
        return Ok(((sy / s0, 0.0), (1.0 / s0, 0.0)));
    }
    let s1 = sum_w(w, x, 1);
    let s2 = sum_w(w, x, 2);
    let sy: f64 = w.iter().zip(y).map(|(wi, yi)| wi * yi).sum();
    let sxy: f64 = w
        .iter()
        .zip(x.iter().zip(y))
        .map(|(wi, (xi, yi))| wi * xi * yi)
        .sum();
    let det = s0 * s2 - s1 * s1;
    if det.abs() < 1e-14 * (s0 * s2).abs().max(1.0) {
        return Err(Error::InvalidInput(
            "meta-regression needs variation in k_attributes".into(),
        ));
    }
    let intercept = (s2 * sy - s1 * sxy) / det;
    let slope = (s0 * sxy - s1 * sy) / det;
    Ok(((intercept, slope), (s2 / det, s0 / det)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::ResponseRow;

    fn table(effects: &[f64], ks: &[u32], variances: &[f64]) -> EffectTable {
        EffectTable {
            rows: effects
                .iter()
                .zip(ks)
                .zip(variances)
                .enumerate()
                .map(|(i, ((&effect, &k), &variance))| EffectTableRow {
                    study_id: format!("s{i}"),
                    k_attributes: k,
                    effect,
                    variance,
                    country: None,
                })
                .collect(),
        }
    }

    fn toy_dataset(rows: Vec<([u16; 2], f64)>) -> ResponseDataset {
        ResponseDataset {
            attr_names: vec!["a".into(), "b".into()],
            level_counts: vec![2, 3],
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, (levels, rating))| ResponseRow {
                    respondent: i as u32,
                    round: 0,
                    profile: 0,
                    levels: levels.to_vec(),
                    choice: 0,
                    rating,
                })
                .collect(),
        }
    }

    #[test]
    fn gender_effect_table_matches_hand_weighted_least_squares() {
        // Frozen from an independent hand calculation: x-bar = 6, y-bar =
        // 0.036, Sxx = 40, Sxy = -1.04, so slope = -0.026 and intercept =
        // 0.036 + 0.026 * 6 = 0.192; Q = 0.00668 < n - 2 so tau2 = 0.
        let t = table(
            &[0.15, 0.10, 0.03, -0.08, -0.02],
            &[2, 4, 6, 8, 10],
            &[1.0; 5],
        );
        let fit = meta_regression(&t).unwrap();
        assert!((fit.slope - (-0.026)).abs() < 1e-12, "slope {}", fit.slope);
        assert!(
            (fit.intercept - 0.192).abs() < 1e-12,
            "intercept {}",
            fit.intercept
        );
        assert_eq!(fit.tau2, 0.0);
        assert!(fit.slope < 0.0);
    }

    #[test]
    fn equal_effects_give_zero_slope_and_zero_tau2() {
        let t = table(&[0.2, 0.2, 0.2, 0.2], &[2, 4, 6, 8], &[0.5, 1.0, 2.0, 0.3]);
        let fit = meta_regression(&t).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.tau2, 0.0);
        assert_eq!(fit.r2_heterogeneity, 0.0);
    }

    #[test]
    fn equal_variances_and_zero_tau2_reduce_to_ols() {
        let t = table(&[0.3, 0.1, 0.25, 0.05, 0.2], &[1, 2, 3, 4, 5], &[2.0; 5]);
        let fit = meta_regression(&t).unwrap();
        // OLS by hand: slope = Sxy / Sxx with centered sums.
        let xbar = 3.0;
        let ybar = 0.18;
        let sxy: f64 = [
            (1.0 - xbar) * (0.3 - ybar),
            (2.0 - xbar) * (0.1 - ybar),
            (3.0 - xbar) * (0.25 - ybar),
            (4.0 - xbar) * (0.05 - ybar),
            (5.0 - xbar) * (0.2 - ybar),
        ]
        .iter()
        .sum();
        let sxx = 10.0;
        assert!((fit.slope - sxy / sxx).abs() < 1e-10);
        assert!((fit.intercept - (ybar - fit.slope * xbar)).abs() < 1e-10);
    }

    #[test]
    fn heteroskedastic_fit_matches_an_independent_oracle() {
        // Frozen from an independent matrix-algebra computation of the
        // method-of-moments fit (weighted fit, residual Q, trace term,
        // re-fit): QE = 10.4609532153, tau2 = (QE - 4) / denom.
        let t = table(
            &[0.35, -0.02, 0.22, -0.18, 0.11, -0.25],
            &[2, 4, 5, 7, 9, 12],
            &[0.01, 0.02, 0.015, 0.005, 0.03, 0.01],
        );
        let fit = meta_regression(&t).unwrap();
        assert!((fit.tau2 - 0.019468141499472).abs() < 1e-12, "tau2 {}", fit.tau2);
        assert!((fit.intercept - 0.355782787366334).abs() < 1e-12);
        assert!((fit.slope - (-0.051348152594290)).abs() < 1e-12);
        assert!((fit.intercept_se - 0.160502459203811).abs() < 1e-12);
        assert!((fit.slope_se - 0.021958732091570).abs() < 1e-12);
        assert!((fit.r2_heterogeneity - 0.646771902195877).abs() < 1e-12);
    }

    #[test]
    fn tau2_is_invariant_to_effect_shifts() {
        let base = table(
            &[0.35, 0.1, -0.2, 0.4, -0.05, 0.15],
            &[2, 3, 5, 7, 8, 10],
            &[0.01, 0.02, 0.015, 0.01, 0.03, 0.02],
        );
        let shifted = EffectTable {
            rows: base
                .rows
                .iter()
                .map(|r| EffectTableRow {
                    effect: r.effect + 5.0,
                    ..r.clone()
                })
                .collect(),
        };
        let a = meta_regression(&base).unwrap();
        let b = meta_regression(&shifted).unwrap();
        assert!((a.tau2 - b.tau2).abs() < 1e-10);
        assert!((a.slope - b.slope).abs() < 1e-10);
    }

    #[test]
    fn short_tables_and_bad_variances_are_rejected() {
        assert!(meta_regression(&table(&[0.1, 0.2], &[2, 4], &[1.0, 1.0])).is_err());
        assert!(meta_regression(&table(&[0.1, 0.2, 0.3], &[2, 4, 6], &[1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn absolute_mode_flips_negative_effects_only() {
        let t = table(&[-0.08, 0.1], &[2, 4], &[0.3, 0.4]);
        let abs = absolute_effect_mode(&t);
        assert_eq!(abs.rows[0].effect, 0.08);
        assert_eq!(abs.rows[0].variance, 0.3);
        assert_eq!(abs.rows[1].effect, 0.1);
    }

    #[test]
    fn synthetic_slope_recovery_with_heteroskedastic_noise() {
        use rand::Rng;
        use rand_distr::{Distribution, Normal};
        let mut covered = 0;
        for rep in 0..100 {
            let mut rng = crate::rng::substream(4242, rep);
            let rows: Vec<EffectTableRow> = (0..200)
                .map(|i| {
                    let k = rng.gen_range(2..=20u32);
                    let variance: f64 = rng.gen_range(0.0005..0.004);
                    let tau = 0.02f64;
                    let noise = Normal::new(0.0, (variance + tau * tau).sqrt())
                        .unwrap()
                        .sample(&mut rng);
                    EffectTableRow {
                        study_id: format!("s{i}"),
                        k_attributes: k,
                        effect: 0.08 - 0.003 * k as f64 + noise,
                        variance,
                        country: None,
                    }
                })
                .collect();
            let fit = meta_regression(&EffectTable { rows }).unwrap();
            if (fit.slope - (-0.003)).abs() <= 1.96 * fit.slope_se {
                covered += 1;
            }
        }
        assert!(
            covered >= 90,
            "slope covered in only {covered}/100 replications"
        );
    }

    #[test]
    fn constant_outcome_fits_with_zero_r2() {
        let dataset = toy_dataset(vec![
            ([0, 0], 2.0),
            ([1, 1], 2.0),
            ([0, 2], 2.0),
            ([1, 0], 2.0),
            ([0, 1], 2.0),
            ([1, 2], 2.0),
        ]);
        let fit = dummy_regression(&dataset, OutcomeSelector::Rating).unwrap();
        assert_eq!(fit.r2, 0.0);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        for c in &fit.coefficients[1..] {
            assert!(c.abs() < 1e-10);
        }
    }

    #[test]
    fn exact_linear_outcome_is_recovered() {
        // rating = 1.5 + 2 * 1[a=1] - 0.75 * 1[b=1] + 0.25 * 1[b=2]
        let value = |a: u16, b: u16| {
            1.5 + 2.0 * f64::from(a == 1) - 0.75 * f64::from(b == 1) + 0.25 * f64::from(b == 2)
        };
        let mut rows = Vec::new();
        for a in 0..2u16 {
            for b in 0..3u16 {
                for _ in 0..2 {
                    rows.push(([a, b], value(a, b)));
                }
            }
        }
        let fit = dummy_regression(&toy_dataset(rows), OutcomeSelector::Rating).unwrap();
        assert!((fit.coefficients[0] - 1.5).abs() < 1e-10);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-10);
        assert!((fit.coefficients[2] + 0.75).abs() < 1e-10);
        assert!((fit.coefficients[3] - 0.25).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-10);
        assert!(fit.residual_se < 1e-9);
    }

    #[test]
    fn rank_deficiency_names_the_offending_column() {
        // Level b=2 never varies away from a perfect copy of a=1.
        let rows = vec![
            ([0, 0], 1.0),
            ([1, 2], 2.0),
            ([0, 0], 1.1),
            ([1, 2], 2.2),
            ([0, 0], 0.9),
        ];
        let err = dummy_regression(&toy_dataset(rows), OutcomeSelector::Rating).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("rank deficient"), "{message}");
        assert!(message.contains('['), "{message}");
    }

    #[test]
    fn single_attribute_partial_r2_is_total_r2() {
        let mut dataset = toy_dataset(vec![]);
        dataset.attr_names = vec!["a".into()];
        dataset.level_counts = vec![2];
        dataset.rows = (0..40)
            .map(|i| ResponseRow {
                respondent: i,
                round: 0,
                profile: 0,
                levels: vec![(i % 2) as u16],
                choice: 0,
                rating: 1.0 + (i % 2) as f64 + 0.01 * (i % 5) as f64,
            })
            .collect();
        let full = dummy_regression(&dataset, OutcomeSelector::Rating).unwrap();
        let partial = partial_r2(&dataset, OutcomeSelector::Rating, 0).unwrap();
        assert!((partial - full.r2).abs() < 1e-12);
    }

    #[test]
    fn null_attribute_partial_r2_vanishes_at_scale() {
        use crate::design::{DesignSpec, SamplingMode};
        use crate::population::{DeltaSpec, Population, PopulationSpec};
        use crate::schema::{Attribute, AttributeSchema, Level};
        // The first attribute's levels share one utility, so its true
        // effect is zero; with 1e5 rows its partial R2 must be negligible.
        let schema = AttributeSchema::new(vec![
            Attribute::new(
                "null",
                vec![Level::new("a", 0.5, 0.0), Level::new("b", 0.5, 1.0)],
            ),
            Attribute::new(
                "real",
                vec![Level::new("a", 0.0, 0.0), Level::new("b", 1.0, 1.0)],
            ),
        ])
        .unwrap();
        let spec = DesignSpec::new(schema, 2, 10, SamplingMode::UniformIid, 2, 2).unwrap();
        let population = Population::generate(
            &spec.schema,
            &PopulationSpec {
                size: 5000,
                dirichlet_kappa: Some(3.0),
                delta: DeltaSpec::Fixed { value: 1.0 },
                utility_offset_width: 0.0,
                utility_shift: 1.5,
                seed: 55,
            },
        )
        .unwrap();
        let dataset = crate::simulate::simulate_study(&population, &spec, 56).unwrap();
        assert_eq!(dataset.rows.len(), 100_000);
        let null_importance = partial_r2(&dataset, OutcomeSelector::Choice, 0).unwrap();
        assert!(
            null_importance.abs() < 0.005,
            "partial R2 {null_importance}"
        );
        let real_importance = partial_r2(&dataset, OutcomeSelector::Choice, 1).unwrap();
        assert!(real_importance > 0.05, "partial R2 {real_importance}");
    }

    #[test]
    fn equal_effect_attributes_have_equal_partial_r2() {
        use crate::design::{DesignSpec, SamplingMode};
        use crate::population::{DeltaSpec, Population, PopulationSpec};
        use crate::schema::{Attribute, AttributeSchema, Level};
        let schema = AttributeSchema::new(vec![
            Attribute::new(
                "x",
                vec![Level::new("a", 0.0, 0.0), Level::new("b", 1.0, 1.0)],
            ),
            Attribute::new(
                "y",
                vec![Level::new("a", 0.0, 0.0), Level::new("b", 1.0, 1.0)],
            ),
        ])
        .unwrap();
        let spec = DesignSpec::new(schema, 2, 8, SamplingMode::UniformIid, 2, 2).unwrap();
        let population = Population::generate(
            &spec.schema,
            &PopulationSpec {
                size: 4000,
                dirichlet_kappa: None,
                delta: DeltaSpec::Fixed { value: 1.0 },
                utility_offset_width: 0.3,
                utility_shift: 1.5,
                seed: 57,
            },
        )
        .unwrap();
        let dataset = crate::simulate::simulate_study(&population, &spec, 58).unwrap();
        let first = partial_r2(&dataset, OutcomeSelector::Choice, 0).unwrap();
        let second = partial_r2(&dataset, OutcomeSelector::Choice, 1).unwrap();
        // Symmetric attributes; allow generous Monte Carlo slack.
        assert!(
            (first - second).abs() < 0.3 * first.max(second),
            "partial R2 {first} vs {second}"
        );
    }

    #[test]
    fn balanced_factorial_coefficients_equal_difference_in_means() {
        use rand::Rng;
        // On a complete balanced factorial the dummy coefficients coincide
        // with level-mean differences exactly.
        let mut rng = crate::rng::substream(59, 0);
        let mut rows = Vec::new();
        let mut i = 0u32;
        for a in 0..2u16 {
            for b in 0..3u16 {
                for _ in 0..4 {
                    rows.push(ResponseRow {
                        respondent: i,
                        round: 0,
                        profile: 0,
                        levels: vec![a, b],
                        choice: 0,
                        rating: rng.gen_range(-2.0..2.0),
                    });
                    i += 1;
                }
            }
        }
        let dataset = ResponseDataset {
            attr_names: vec!["a".into(), "b".into()],
            level_counts: vec![2, 3],
            rows,
        };
        let fit = dummy_regression(&dataset, OutcomeSelector::Rating).unwrap();
        let layout = DummyLayout::of(&dataset);
        let mean_at = |attr: usize, level: u16| {
            let selected: Vec<f64> = dataset
                .rows
                .iter()
                .filter(|r| r.levels[attr] == level)
                .map(|r| r.rating)
                .collect();
            selected.iter().sum::<f64>() / selected.len() as f64
        };
        for (attr, levels) in [(0usize, 2u16), (1, 3)] {
            for level in 1..levels {
                let coefficient = layout.coefficient(&fit.coefficients, attr, level as usize);
                let difference = mean_at(attr, level) - mean_at(attr, 0);
                assert!(
                    (coefficient - difference).abs() < 1e-8,
                    "attr {attr} level {level}: {coefficient} vs {difference}"
                );
            }
        }
    }

    #[test]
    fn effect_table_csv_round_trips() {
        let t = EffectTable {
            rows: vec![
                EffectTableRow {
                    study_id: "a".into(),
                    k_attributes: 2,
                    effect: 0.15,
                    variance: 0.5,
                    country: Some("USA".into()),
                },
                EffectTableRow {
                    study_id: "b".into(),
                    k_attributes: 4,
                    effect: -0.08,
                    variance: 0.25,
                    country: None,
                },
            ],
        };
        let mut buffer = Vec::new();
        t.write_csv(&mut buffer).unwrap();
        let parsed = EffectTable::read_csv(buffer.as_slice()).unwrap();
        assert_eq!(parsed.rows.len(), 2);
        assert_eq!(parsed.rows[0].country.as_deref(), Some("USA"));
        assert!((parsed.rows[1].effect + 0.08).abs() < 1e-12);
    }
}
