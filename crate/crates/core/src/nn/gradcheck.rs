use super::Parameters;

/// Outcome of an analytic-vs-numeric gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name and flat index of the worst parameter.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub passed: bool,
}

/// Gradients smaller than this are compared on an absolute scale.
const ABS_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences of `loss` with step `h`.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check<P, F>(params: &P, analytic: &P, loss: F, h: f64, tol: f64) -> GradCheckReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let names = params.tensor_names();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut checked = 0;

    for (k, &n) in shapes.iter().enumerate() {
        for j in 0..n {
            let orig = probe.tensors()[k][j];
            probe.tensors_mut()[k][j] = orig + h;
            let up = loss(&probe);
            probe.tensors_mut()[k][j] = orig - h;
            let down = loss(&probe);
            probe.tensors_mut()[k][j] = orig;

            let numeric = (up - down) / (2.0 * h);
            let a = grads[k][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(ABS_FLOOR);
            checked += 1;
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some((names[k].clone(), j));
            }
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        worst,
        checked,
        passed: max_rel < tol || tol.is_infinite(),
    }
}
