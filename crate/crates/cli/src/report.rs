//! Machine-readable verification report assembled by the `verify` command.

use serde::{Deserialize, Serialize};

use crate::config::VerifyConfig;
use conjoint_core::lab::{
    compare_adjacent_flip_rates, search_importance_reversal, search_null_collapse,
    search_sign_reversal, verify_amplification, verify_amplification_monotone, ImportanceInstance,
    NullCollapseInstance, PairedFlipReport, PairedFlipSpec, ReversalInstance, SearchSpec,
};
use conjoint_core::rng::substream;
use conjoint_core::Result;
use rand::Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmplificationSection {
    pub draws: usize,
    pub max_abs_relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicitySection {
    pub draws: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoReversalSection {
    pub draws_checked: usize,
    pub attempts: usize,
    pub skipped_zero: usize,
    pub flips: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignSearchSection {
    pub budget: usize,
    pub found: usize,
    pub instances: Vec<ReversalInstance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSearchSection {
    pub budget: usize,
    pub tolerance: f64,
    pub found: usize,
    pub instances: Vec<NullCollapseInstance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceSearchSection {
    pub budget: usize,
    pub found: usize,
    pub instances: Vec<ImportanceInstance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub amplification: AmplificationSection,
    pub monotonicity: MonotonicitySection,
    pub no_reversal: NoReversalSection,
    pub sign_reversal_search: SignSearchSection,
    pub null_collapse_search: NullSearchSection,
    pub importance_search: ImportanceSearchSection,
    pub adjacent_contrast_comparison: PairedFlipReport,
    /// True when every assertion-style check passed (searches report
    /// counts; finding nothing is not a failure).
    pub pass: bool,
}

impl VerifyReport {
    pub fn summary_lines(&self) -> Vec<String> {
        let status = |ok: bool| if ok { "pass" } else { "FAIL" };
        vec![
            format!(
                "amplification exactness: {} (max relative error {:.3e})",
                status(self.amplification.pass),
                self.amplification.max_abs_relative_error
            ),
            format!(
                "amplification monotone in k: {}",
                status(self.monotonicity.pass)
            ),
            format!(
                "no reversal without rank changes: {} ({} draws, {} flips)",
                status(self.no_reversal.pass),
                self.no_reversal.draws_checked,
                self.no_reversal.flips
            ),
            format!(
                "sign reversal instances: {}",
                self.sign_reversal_search.found
            ),
            format!(
                "null collapse instances: {}",
                self.null_collapse_search.found
            ),
            format!(
                "importance reversal instances: {}",
                self.importance_search.found
            ),
            format!(
                "adjacent-contrast flips {} vs unconstrained {} (p = {:.3e})",
                self.adjacent_contrast_comparison.constrained_flips,
                self.adjacent_contrast_comparison.unconstrained_flips,
                self.adjacent_contrast_comparison.p_value
            ),
        ]
    }
}

/// Run every verification stage with the configured budgets.
pub fn run_verification(config: &VerifyConfig) -> Result<VerifyReport> {
    // Amplification over random floored-simplex weight vectors, every k < m.
    let mut max_error = 0.0f64;
    let mut amplification_ok = true;
    let mut monotone_ok = true;
    for i in 0..config.amplification_draws as u64 {
        let mut rng = substream(config.seed, i);
        let m = 2 + (i % 5) as usize;
        let weights = floored_simplex(&mut rng, m, 0.01);
        let delta_u = rng.gen_range(1.0..5.0);
        for k in 1..m {
            match verify_amplification(&weights, k, delta_u) {
                Ok(check) => {
                    let err =
                        (check.ratio - check.predicted).abs() / check.predicted.abs().max(1.0);
                    max_error = max_error.max(err);
                }
                Err(_) => amplification_ok = false,
            }
        }
        match verify_amplification_monotone(&weights) {
            Ok(report) => monotone_ok &= report.strictly_decreasing,
            Err(_) => monotone_ok = false,
        }
    }

    let search = SearchSpec {
        budget: config.budget,
        seed: config.seed,
        m: config.m,
        k: config.k,
        delta: config.delta,
        max_instances: config.max_report_instances,
    };
    let no_reversal = conjoint_core::lab::verify_no_reversal(&search, config.no_reversal_draws)?;
    let reversals = search_sign_reversal(&search)?;
    let nulls = search_null_collapse(&search, config.null_tolerance)?;
    let importance = search_importance_reversal(&search)?;
    let paired = compare_adjacent_flip_rates(&PairedFlipSpec {
        draws: config.no_reversal_draws,
        seed: config.seed,
        m: config.m,
        k: config.k,
        delta: 0.3,
        levels_per_attribute: 5,
    })?;

    let no_reversal_pass = no_reversal.flips.is_empty();
    let pass = amplification_ok && monotone_ok && no_reversal_pass;
    Ok(VerifyReport {
        amplification: AmplificationSection {
            draws: config.amplification_draws,
            max_abs_relative_error: max_error,
            pass: amplification_ok,
        },
        monotonicity: MonotonicitySection {
            draws: config.amplification_draws,
            pass: monotone_ok,
        },
        no_reversal: NoReversalSection {
            draws_checked: no_reversal.draws_checked,
            attempts: no_reversal.attempts,
            skipped_zero: no_reversal.skipped_zero,
            flips: no_reversal.flips.len(),
            pass: no_reversal_pass,
        },
        sign_reversal_search: SignSearchSection {
            budget: config.budget,
            found: reversals.len(),
            instances: reversals,
        },
        null_collapse_search: NullSearchSection {
            budget: config.budget,
            tolerance: config.null_tolerance,
            found: nulls.len(),
            instances: nulls,
        },
        importance_search: ImportanceSearchSection {
            budget: config.budget,
            found: importance.len(),
            instances: importance,
        },
        adjacent_contrast_comparison: paired,
        pass,
    })
}

fn floored_simplex(rng: &mut impl Rng, m: usize, floor: f64) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..m).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        if weights.iter().all(|&w| w >= floor) {
            return weights;
        }
    }
}
