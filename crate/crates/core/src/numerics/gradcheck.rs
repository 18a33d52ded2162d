use super::matrix::Matrix;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error per parameter tensor, in input order.
    pub per_tensor: Vec<f64>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    /// NaN or infinite errors never pass.
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < tol
    }
}

/// Compares `analytic` against `(f(p + h) - f(p - h)) / 2h` for every scalar
/// entry of every tensor in `params`. The error of one entry is
/// `|analytic - numeric| / max(1, |analytic|)`; a non-finite value anywhere
/// is reported as an infinite error.
pub fn finite_diff_check<F>(mut f: F, params: &[Matrix], analytic: &[Matrix], h: f64) -> GradCheckReport
where
    F: FnMut(&[Matrix]) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per tensor");
    let mut work = params.to_vec();
    let mut per_tensor = Vec::with_capacity(params.len());
    for (t, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.shape(), params[t].shape(), "gradient shape for tensor {t}");
        let mut worst: f64 = 0.0;
        for k in 0..params[t].len() {
            let orig = params[t].as_slice()[k];
            work[t].as_mut_slice()[k] = orig + h;
            let up = f(&work);
            work[t].as_mut_slice()[k] = orig - h;
            let down = f(&work);
            work[t].as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.as_slice()[k];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = if err.is_finite() { worst.max(err) } else { f64::INFINITY };
        }
        per_tensor.push(worst);
    }
    let max_rel_error = per_tensor.iter().cloned().fold(0.0, f64::max);
    GradCheckReport {
        per_tensor,
        max_rel_error,
    }
}
