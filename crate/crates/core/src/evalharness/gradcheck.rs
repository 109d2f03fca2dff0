use serde::{Deserialize, Serialize};

use crate::corrector::gradcheck_cases;
use crate::error::Result;
use crate::metaloop::lookahead_gradcheck_cases;
use crate::numcore::gradcheck::{op_cases, CaseFn};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub seeds: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub cases: Vec<CaseResult>,
    pub max_rel_err: f64,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Every gradient case: primitive operations, the corrector pipeline and the
/// lookahead meta-gradient.
pub fn all_cases() -> Vec<(&'static str, CaseFn)> {
    let mut cases = op_cases();
    cases.extend(gradcheck_cases());
    cases.extend(lookahead_gradcheck_cases());
    cases
}

/// Runs every case on seeds `0..seeds` and reports the worst relative error.
pub fn gradcheck_suite(seeds: u64) -> Result<GradcheckReport> {
    let mut cases = Vec::new();
    let mut worst = 0.0f64;
    for (name, case) in all_cases() {
        let mut max = 0.0f64;
        for seed in 0..seeds {
            let err = case(seed)?;
            // NaN must not hide behind max().
            max = if err.is_nan() { f64::INFINITY } else { max.max(err) };
        }
        worst = worst.max(max);
        cases.push(CaseResult {
            name: name.to_string(),
            seeds: seeds as usize,
            max_rel_err: max,
        });
    }
    Ok(GradcheckReport {
        cases,
        max_rel_err: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_covers_ops_corrector_and_lookahead() {
        let names: Vec<&str> = all_cases().iter().map(|c| c.0).collect();
        assert!(names.iter().any(|n| n.starts_with("lookahead/")));
        assert!(names.len() > 20);
        let r = gradcheck_suite(2).unwrap();
        assert_eq!(r.cases.len(), names.len());
        assert!(r.passes(1e-4), "{r:?}");
    }
}
