//! Central finite-difference gradient verification.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Worst `|g − fd| / max(|g|, |fd|, 1e-8)` over checked coordinates.
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates skipped because they sit on a non-differentiable point.
    pub flagged: Vec<usize>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare `gradient` against central differences of `f` at `point`.
pub fn grad_check<F>(
    f: F,
    point: &[f64],
    gradient: &[f64],
    h: f64,
    flagged: &[usize],
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(point.len(), gradient.len(), "gradient length");
    let mut probe = point.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        flagged: flagged.to_vec(),
    };
    for i in 0..point.len() {
        if flagged.contains(&i) {
            continue;
        }
        probe[i] = point[i] + h;
        let up = f(&probe);
        probe[i] = point[i] - h;
        let down = f(&probe);
        probe[i] = point[i];
        let err = relative_error(gradient[i], (up - down) / (2.0 * h));
        report.checked += 1;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst_index = Some(i);
        }
    }
    report
}
