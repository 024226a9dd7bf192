use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Default denominator floor of [`relative_error`].
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// `|a − n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_floor(analytic, numeric, RELATIVE_FLOOR)
}

/// `|a − n| / max(floor, |a| + |n|)`
pub fn relative_error_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub eps: f64,
    /// Denominator floor of the relative error. Central differences carry
    /// roughly `1e-16·|f|/eps` of roundoff, which swamps entries much
    /// smaller than that.
    pub floor: f64,
    /// Skip coordinates whose `±eps` probes change the tape's
    /// [`branch_signature`](Tape::branch_signature), i.e. straddle a relu,
    /// max or nearest-neighbor switch.
    pub skip_kinks: bool,
}

impl GradCheckOptions {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            floor: RELATIVE_FLOOR,
            skip_kinks: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradReport {
    pub worst: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares the tape gradient of a scalar function against central finite
/// differences, one coordinate at a time, and returns the worst relative error.
///
/// `f` receives a fresh tape and the handle of `x` on it, and must return a
/// scalar handle.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    Ok(grad_check_report(f, x, &GradCheckOptions::new(eps))?.worst)
}

/// [`grad_check`] with explicit options and per-coordinate bookkeeping.
pub fn grad_check_report<F>(f: F, x: &Tensor, opts: &GradCheckOptions) -> Result<GradReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(xv)
        .ok_or_else(|| Error::Contract("grad_check input received no gradient".into()))?;
    let base = tape.branch_signature();

    let eval = |values: Vec<f64>| -> Result<(f64, u64)> {
        let mut t = Tape::new();
        let v = t.constant(Tensor::from_parts(x.shape().to_vec(), values));
        let o = f(&mut t, v)?;
        let value = t
            .value(o)
            .item()
            .ok_or_else(|| Error::Contract("grad_check function is not scalar".into()))?;
        Ok((value, t.branch_signature()))
    };

    let mut report = GradReport {
        worst: 0.0,
        worst_index: 0,
        checked: 0,
        skipped: 0,
    };
    let mut probe = x.data().to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + opts.eps;
        let (up, sig_up) = eval(probe.clone())?;
        probe[i] = orig - opts.eps;
        let (down, sig_down) = eval(probe.clone())?;
        probe[i] = orig;
        if opts.skip_kinks && (sig_up != base || sig_down != base) {
            report.skipped += 1;
            continue;
        }
        report.checked += 1;
        let numeric = (up - down) / (2.0 * opts.eps);
        let err = relative_error_floor(analytic.data()[i], numeric, opts.floor);
        if err > report.worst {
            report.worst = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
