use super::{Tape, Tensor, TensorError, Var};

/// Denominator floor for the relative error, so gradients near zero are
/// compared on an absolute scale instead of amplifying rounding noise.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the coordinate with the largest relative error.
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the tape gradient of a scalar function against central finite
/// differences at every coordinate of `x`.
pub fn grad_check<F, E>(f: F, x: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, Var) -> Result<Var, E>,
    E: From<TensorError>,
{
    let all: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(f, x, h, tol, &all)
}

/// Like [`grad_check`] but only probes the listed flat coordinates.
pub fn grad_check_at<F, E>(
    f: F,
    x: &Tensor,
    h: f64,
    tol: f64,
    coords: &[usize],
) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Tape, Var) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x);
    let out = f(&mut tape, xv)?;
    tape.backward(out).map_err(E::from)?;
    let analytic = tape.grad(xv);

    let eval = |probe: &Tensor| -> Result<f64, E> {
        let mut t = Tape::new();
        let v = t.constant(probe);
        let y = f(&mut t, v)?;
        Ok(t.value(y).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        checked: 0,
        tolerance: tol,
        passed: true,
    };
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        // A NaN error sticks and fails the check.
        if !report.max_rel_error.is_nan() && (rel.is_nan() || rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
        report.max_abs_error = report.max_abs_error.max(abs);
        report.checked += 1;
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}
