//! Central-difference gradient checking against the tape.

mod suite;

pub use suite::{run_case, run_suite, suite_names, SuiteEntry, SuiteReport, SUITE_SEEDS};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Number of scalar input entries probed.
    pub entries: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of the scalar `f(inputs)` with central
/// differences of step `h` over every entry of every input.
pub fn check<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut probe = inputs.to_vec();
    let mut report = GradCheck { max_rel_err: 0.0, max_abs_err: 0.0, entries: 0 };
    for i in 0..inputs.len() {
        for k in 0..inputs[i].numel() {
            let x = inputs[i].data()[k];
            probe[i].data_mut()[k] = x + h;
            let up = eval(&probe)?;
            probe[i].data_mut()[k] = x - h;
            let down = eval(&probe)?;
            probe[i].data_mut()[k] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i].data()[k];
            if !(numeric.is_finite() && a.is_finite()) {
                return Err(Error::InvalidValue(format!("non-finite gradient at input {i}, entry {k}")));
            }
            report.max_rel_err = report.max_rel_err.max(rel_err(a, numeric));
            report.max_abs_err = report.max_abs_err.max((a - numeric).abs());
            report.entries += 1;
        }
    }
    Ok(report)
}
