use alloc::format;
use alloc::vec::Vec;

use super::{grad, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// `max |analytic - numeric| / max(1, |analytic|)` over checked entries.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Entries whose ±eps probes changed the ReLU on/off pattern.
    pub skipped_kinks: usize,
}

/// Central-difference audit of `grad` for `loss_fn` at `params`.
///
/// Coordinates whose perturbation flips any ReLU are skipped and counted,
/// since the function is not differentiable across that kink.
pub fn finite_diff_check<F>(loss_fn: F, params: &[Tensor], eps: f64) -> Result<FdReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::invalid("finite-difference step", format!("{eps} outside [1e-7, 1e-3]")));
    }
    let (_, analytic) = grad(params, &loss_fn)?;
    let eval = |ps: &[Tensor]| -> Result<(f64, u64)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = loss_fn(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "finite_diff_check" });
        }
        Ok((v, tape.relu_signature()))
    };
    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = FdReport { max_rel_error: 0.0, checked: 0, skipped_kinks: 0 };
    for pi in 0..params.len() {
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let (up, sig_up) = eval(&work)?;
            work[pi].data_mut()[j] = orig - eps;
            let (down, sig_down) = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            if sig_up != sig_down {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[j];
            let rel = libm::fabs(a - numeric) / f64::max(1.0, libm::fabs(a));
            report.max_rel_error = f64::max(report.max_rel_error, rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
