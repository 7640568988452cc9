//! Central-difference verification of analytic gradients.

use crate::{NumError, Result, Tensor};

/// Denominator floor for the relative error. Entries whose true gradient is
/// below this magnitude are judged on absolute error instead: central
/// differences of an O(10) loss at eps = 1e-5 carry about 1e-9 of round-off.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// Largest relative error per parameter block.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.blocks.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares the gradients returned by `f` against `(f(x+eps) - f(x-eps)) / 2eps`
/// for every element of every block.
///
/// `f` receives the current parameter blocks and whether gradients are
/// wanted; it returns the scalar loss and, when asked, one gradient per block.
pub fn grad_check<F>(mut f: F, params: &[(String, Tensor<f64>)], eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor<f64>], bool) -> Result<(f64, Vec<Tensor<f64>>)>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(NumError::BadStep(eps));
    }
    let mut values: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let (loss, analytic) = f(&values, true)?;
    if !loss.is_finite() {
        return Err(NumError::NonFinite { op: "loss".into() });
    }
    if analytic.len() != values.len() {
        return Err(NumError::Shape(format!("{} gradients for {} blocks", analytic.len(), values.len())));
    }
    let mut blocks = Vec::with_capacity(values.len());
    for b in 0..values.len() {
        if analytic[b].shape() != values[b].shape() {
            return Err(NumError::Shape(format!("gradient of {} has wrong shape", params[b].0)));
        }
        let mut worst = 0.0f64;
        for i in 0..values[b].len() {
            let orig = values[b].data()[i];
            values[b].data_mut()[i] = orig + eps;
            let (plus, _) = f(&values, false)?;
            values[b].data_mut()[i] = orig - eps;
            let (minus, _) = f(&values, false)?;
            values[b].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumError::NonFinite { op: format!("loss at {}[{i}]", params[b].0) });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[b].data()[i], numeric));
        }
        blocks.push((params[b].0.clone(), worst));
    }
    Ok(GradCheckReport { blocks })
}
