//! Causal estimands: individual, marginal, and average component effects.
//!
//! Two independent routes are kept side by side: exact enumeration oracles
//! on small designs, and Monte Carlo estimators (difference in means or
//! dummy regression with respondent-clustered bootstrap variance) on
//! simulated datasets.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignSpec, Round};
use crate::error::{Error, Result};
use crate::fmt::sig12;
use crate::population::Population;
use crate::rng::substream;
use crate::salience::DecisionMaker;
use crate::simulate::{potential_outcomes, ResponseDataset};
use crate::stats;

/// Default cap on exact-enumeration size.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Default respondent-clustered bootstrap resamples.
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 500;

/// Outcome scale an effect is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeScale {
    /// Forced binary choice, 1 when profile 1 wins (ties included).
    Choice,
    /// Evaluation difference of profile 1 over its best competitor.
    Value,
}

/// Outcome column of a dataset the estimators run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeColumn {
    Choice,
    Rating,
}

/// A single attribute-level contrast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contrast {
    pub attribute: usize,
    pub level_t: usize,
    pub level_c: usize,
}

/// How an effect estimate was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Enumeration,
    DifferenceInMeans,
    DummyRegression,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Method::Enumeration => "enumeration",
            Method::DifferenceInMeans => "difference_in_means",
            Method::DummyRegression => "dummy_regression",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub point: f64,
    pub variance: f64,
    pub n: usize,
    pub method: Method,
}

impl EffectEstimate {
    pub fn se(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Individual component effect: the change in profile 1's outcome when the
/// target attribute switches between the contrast levels, holding profile
/// 1's other attributes (`fixed_others`, in attribute order with the target
/// skipped) and every opponent profile fixed.
pub fn ice(
    dm: &DecisionMaker,
    spec: &DesignSpec,
    contrast: Contrast,
    fixed_others: &[usize],
    opponents: &[Vec<usize>],
    scale: OutcomeScale,
) -> Result<f64> {
    let width = spec.consideration_k;
    if fixed_others.len() + 1 != width {
        return Err(Error::invalid(format!(
            "expected {} non-target levels, got {}",
            width - 1,
            fixed_others.len()
        )));
    }
    if contrast.attribute >= width {
        return Err(Error::invalid(
            "contrast attribute outside the consideration set",
        ));
    }
    let mut profile = Vec::with_capacity(width);
    let mut others = fixed_others.iter();
    for k in 0..width {
        if k == contrast.attribute {
            profile.push(contrast.level_t); // placeholder, replaced per world
        } else {
            profile.push(*others.next().expect("length checked"));
        }
    }
    let mut profiles = vec![profile];
    profiles.extend(opponents.iter().cloned());
    let round = Round::new(profiles, 0, 0);
    let pair = potential_outcomes(
        dm,
        &round,
        spec,
        contrast.attribute,
        contrast.level_t,
        contrast.level_c,
    )?;
    Ok(match scale {
        OutcomeScale::Choice => pair.ite_choice(),
        OutcomeScale::Value => pair.ite_value(),
    })
}

/// Marginal component effect: the exact mean ICE over all uniformly
/// assigned non-target cells and opponent profiles.
pub fn mce(
    dm: &DecisionMaker,
    spec: &DesignSpec,
    contrast: Contrast,
    scale: OutcomeScale,
    cap: u128,
) -> Result<f64> {
    let width = spec.consideration_k;
    if contrast.attribute >= width {
        return Err(Error::invalid(
            "contrast attribute outside the consideration set",
        ));
    }
    if contrast.level_t == contrast.level_c {
        return Err(Error::invalid("contrast levels must be distinct"));
    }
    // Cells: profile 1's non-target attributes, then each opponent's full
    // attribute vector.
    let mut cell_sizes: Vec<usize> = Vec::new();
    for k in 0..width {
        if k != contrast.attribute {
            cell_sizes.push(spec.schema.attribute(k).levels.len());
        }
    }
    for _ in 1..spec.num_profiles {
        for k in 0..width {
            cell_sizes.push(spec.schema.attribute(k).levels.len());
        }
    }
    let combinations = cell_sizes
        .iter()
        .try_fold(1u128, |acc, &n| acc.checked_mul(n as u128))
        .unwrap_or(u128::MAX);
    if combinations > cap {
        return Err(Error::EnumerationCap { combinations, cap });
    }

    let mut assignment = vec![0usize; cell_sizes.len()];
    let num_others = width - 1;
    let mut total = 0.0;
    let mut count = 0u64;
    loop {
        let fixed_others = &assignment[..num_others];
        let opponents: Vec<Vec<usize>> = assignment[num_others..]
            .chunks(width)
            .map(|c| c.to_vec())
            .collect();
        total += ice(dm, spec, contrast, fixed_others, &opponents, scale)?;
        count += 1;
        // Odometer increment over the enumeration cells.
        let mut pos = assignment.len();
        loop {
            if pos == 0 {
                return Ok(total / count as f64);
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < cell_sizes[pos] {
                break;
            }
            assignment[pos] = 0;
        }
    }
}

/// Exact AMCE: the mean MCE over a finite population. Enumeration has no
/// sampling error, so the variance is zero.
pub fn amce_oracle(
    population: &Population,
    spec: &DesignSpec,
    contrast: Contrast,
    scale: OutcomeScale,
    cap: u128,
) -> Result<EffectEstimate> {
    if population.is_empty() {
        return Err(Error::invalid("population must be non-empty"));
    }
    let total: f64 = population
        .members
        .par_iter()
        .map(|dm| mce(dm, spec, contrast, scale, cap))
        .try_reduce(|| 0.0, |a, b| Ok(a + b))?;
    Ok(EffectEstimate {
        point: total / population.len() as f64,
        variance: 0.0,
        n: population.len(),
        method: Method::Enumeration,
    })
}

/// AMCE estimate from a simulated dataset with respondent-clustered
/// bootstrap variance.
pub fn amce_estimate(
    dataset: &ResponseDataset,
    contrast: Contrast,
    method: Method,
    outcome: OutcomeColumn,
    bootstrap_resamples: usize,
    seed: u64,
) -> Result<EffectEstimate> {
    match method {
        Method::DifferenceInMeans => {
            difference_in_means(dataset, contrast, outcome, bootstrap_resamples, seed)
        }
        Method::DummyRegression => {
            dummy_regression_estimate(dataset, contrast, outcome, bootstrap_resamples, seed)
        }
        Method::Enumeration => Err(Error::Estimation(
            "enumeration is an oracle, not a dataset estimator".into(),
        )),
    }
}

fn outcome_value(row: &crate::simulate::ResponseRow, outcome: OutcomeColumn) -> f64 {
    match outcome {
        OutcomeColumn::Choice => f64::from(row.choice),
        OutcomeColumn::Rating => row.rating,
    }
}

/// Per-respondent sufficient statistics for the difference-in-means
/// estimator: outcome sums and counts at the two contrast levels.
struct ClusterMeans {
    sum_t: f64,
    n_t: u64,
    sum_c: f64,
    n_c: u64,
}

fn difference_in_means(
    dataset: &ResponseDataset,
    contrast: Contrast,
    outcome: OutcomeColumn,
    bootstrap_resamples: usize,
    seed: u64,
) -> Result<EffectEstimate> {
    validate_contrast(dataset, contrast)?;
    let mut clusters: Vec<ClusterMeans> = Vec::new();
    let mut index_of: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    let mut n_rows = 0usize;
    for row in &dataset.rows {
        let level = row.levels[contrast.attribute] as usize;
        if level != contrast.level_t && level != contrast.level_c {
            continue;
        }
        n_rows += 1;
        let idx = *index_of.entry(row.respondent).or_insert_with(|| {
            clusters.push(ClusterMeans {
                sum_t: 0.0,
                n_t: 0,
                sum_c: 0.0,
                n_c: 0,
            });
            clusters.len() - 1
        });
        let y = outcome_value(row, outcome);
        if level == contrast.level_t {
            clusters[idx].sum_t += y;
            clusters[idx].n_t += 1;
        } else {
            clusters[idx].sum_c += y;
            clusters[idx].n_c += 1;
        }
    }
    let point = point_from_clusters(&clusters)
        .ok_or_else(|| Error::Estimation("dataset does not contain both contrast levels".into()))?;

    let mut rng = substream(seed, 0);
    let mut estimates = Vec::with_capacity(bootstrap_resamples);
    let n_clusters = clusters.len();
    for _ in 0..bootstrap_resamples {
        let mut sum_t = 0.0;
        let mut n_t = 0u64;
        let mut sum_c = 0.0;
        let mut n_c = 0u64;
        for _ in 0..n_clusters {
            let cluster = &clusters[rng.gen_range(0..n_clusters)];
            sum_t += cluster.sum_t;
            n_t += cluster.n_t;
            sum_c += cluster.sum_c;
            n_c += cluster.n_c;
        }
        if n_t > 0 && n_c > 0 {
            estimates.push(sum_t / n_t as f64 - sum_c / n_c as f64);
        }
    }
    Ok(EffectEstimate {
        point,
        variance: sample_variance(&estimates),
        n: n_rows,
        method: Method::DifferenceInMeans,
    })
}

fn point_from_clusters(clusters: &[ClusterMeans]) -> Option<f64> {
    let (mut sum_t, mut n_t, mut sum_c, mut n_c) = (0.0, 0u64, 0.0, 0u64);
    for c in clusters {
        sum_t += c.sum_t;
        n_t += c.n_t;
        sum_c += c.sum_c;
        n_c += c.n_c;
    }
    (n_t > 0 && n_c > 0).then(|| sum_t / n_t as f64 - sum_c / n_c as f64)
}

fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn validate_contrast(dataset: &ResponseDataset, contrast: Contrast) -> Result<()> {
    if contrast.attribute >= dataset.num_attributes() {
        return Err(Error::Estimation(format!(
            "attribute index {} outside the dataset's {} attributes",
            contrast.attribute,
            dataset.num_attributes()
        )));
    }
    if contrast.level_t == contrast.level_c {
        return Err(Error::Estimation("contrast levels must be distinct".into()));
    }
    let mut seen_t = false;
    let mut seen_c = false;
    for row in &dataset.rows {
        let level = row.levels[contrast.attribute] as usize;
        seen_t |= level == contrast.level_t;
        seen_c |= level == contrast.level_c;
        if seen_t && seen_c {
            return Ok(());
        }
    }
    Err(Error::Estimation(format!(
        "contrast level missing from the data (t present: {seen_t}, c present: {seen_c})"
    )))
}

fn dummy_regression_estimate(
    dataset: &ResponseDataset,
    contrast: Contrast,
    outcome: OutcomeColumn,
    bootstrap_resamples: usize,
    seed: u64,
) -> Result<EffectEstimate> {
    validate_contrast(dataset, contrast)?;
    let layout = stats::DummyLayout::of(dataset);
    let outcome_col = match outcome {
        OutcomeColumn::Choice => stats::OutcomeSelector::Choice,
        OutcomeColumn::Rating => stats::OutcomeSelector::Rating,
    };
    let fit = stats::dummy_regression(dataset, outcome_col)?;
    let point = layout.coefficient(&fit.coefficients, contrast.attribute, contrast.level_t)
        - layout.coefficient(&fit.coefficients, contrast.attribute, contrast.level_c);

    // Clustered bootstrap over per-respondent normal-equation contributions.
    let p = layout.columns();
    let respondents = dataset.respondents();
    let mut index_of = std::collections::HashMap::new();
    for (i, r) in respondents.iter().enumerate() {
        index_of.insert(*r, i);
    }
    let mut xtx: Vec<nalgebra::DMatrix<f64>> =
        vec![nalgebra::DMatrix::zeros(p, p); respondents.len()];
    let mut xty: Vec<nalgebra::DVector<f64>> = vec![nalgebra::DVector::zeros(p); respondents.len()];
    let mut x_row = vec![0.0; p];
    for row in &dataset.rows {
        let idx = index_of[&row.respondent];
        layout.fill_row(&mut x_row, &row.levels);
        let y = outcome_value(row, outcome);
        for a in 0..p {
            if x_row[a] == 0.0 {
                continue;
            }
            xty[idx][a] += x_row[a] * y;
            for b in 0..p {
                xtx[idx][(a, b)] += x_row[a] * x_row[b];
            }
        }
    }

    let mut rng = substream(seed, 0);
    let mut estimates = Vec::with_capacity(bootstrap_resamples);
    let n_clusters = respondents.len();
    for _ in 0..bootstrap_resamples {
        let mut sum_xtx = nalgebra::DMatrix::zeros(p, p);
        let mut sum_xty = nalgebra::DVector::zeros(p);
        for _ in 0..n_clusters {
            let idx = rng.gen_range(0..n_clusters);
            sum_xtx += &xtx[idx];
            sum_xty += &xty[idx];
        }
        if let Some(chol) = sum_xtx.cholesky() {
            let beta = chol.solve(&sum_xty);
            estimates.push(
                layout.coefficient(beta.as_slice(), contrast.attribute, contrast.level_t)
                    - layout.coefficient(beta.as_slice(), contrast.attribute, contrast.level_c),
            );
        }
    }
    Ok(EffectEstimate {
        point,
        variance: sample_variance(&estimates),
        n: dataset.rows.len(),
        method: Method::DummyRegression,
    })
}

/// One row of an estimated-effects table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub attribute: String,
    pub level: String,
    pub baseline: String,
    pub estimate: f64,
    pub variance: f64,
    pub n: usize,
    pub method: Method,
    pub k_attributes: usize,
}

/// Serialize estimated effects with the fixed golden formatting.
pub fn write_effect_rows<W: Write>(mut writer: W, rows: &[EffectRow]) -> Result<()> {
    writeln!(
        writer,
        "attribute,level,baseline,estimate,variance,n,method,k_attributes"
    )?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{},{}",
            row.attribute,
            row.level,
            row.baseline,
            sig12(row.estimate),
            sig12(row.variance),
            row.n,
            row.method,
            row.k_attributes
        )?;
    }
    Ok(())
}

pub fn write_effect_rows_path(path: &Path, rows: &[EffectRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_effect_rows(std::io::BufWriter::new(file), rows)
}
