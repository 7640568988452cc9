use crate::graph::softmax_into;
use crate::{NumError, Result, Scalar};

/// Numerically stable softmax of a single logit vector.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<Vec<T>> {
    if logits.is_empty() {
        return Err(NumError::EmptyLogits);
    }
    let mut out = vec![T::zero(); logits.len()];
    softmax_into(logits, &mut out);
    Ok(out)
}

/// Loss `-log softmax(logits)[target]` together with its gradient
/// `softmax(logits) - onehot(target)`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> Result<(T, Vec<T>)> {
    if logits.is_empty() {
        return Err(NumError::EmptyLogits);
    }
    if target >= logits.len() {
        return Err(NumError::TargetOutOfRange { target, size: logits.len() });
    }
    let mut grad = vec![T::zero(); logits.len()];
    let lse = softmax_into(logits, &mut grad);
    grad[target] -= T::one();
    Ok((lse - logits[target], grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_and_uniform_inputs() {
        assert_eq!(softmax(&[0.0f64, 0.0]).unwrap(), vec![0.5, 0.5]);
        for p in softmax(&[3.7f32; 4]).unwrap() {
            assert!((p - 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let p = softmax(&[1000.0f32, 1000.5]).unwrap();
        // reference: max-subtracted evaluation in f64
        let e0 = (-0.5f64).exp();
        let reference = [e0 / (1.0 + e0), 1.0 / (1.0 + e0)];
        for (a, b) in p.iter().zip(reference) {
            assert!(a.is_finite());
            assert!((*a as f64 - b).abs() < 1e-6);
        }
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empty_logits_rejected() {
        assert_eq!(softmax::<f32>(&[]), Err(NumError::EmptyLogits));
        assert_eq!(cross_entropy::<f32>(&[], 0), Err(NumError::EmptyLogits));
    }

    #[test]
    fn cross_entropy_uniform_is_log_v() {
        let (loss, grad) = cross_entropy(&[0.0f64; 4], 2).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad[2] + 0.75).abs() < 1e-12);
        assert!((grad[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated() {
        let (loss, _) = cross_entropy(&[0.0f32, 20.0, 0.0], 1).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn cross_entropy_matches_direct_recompute() {
        let logits = [0.3f64, -1.2, 2.5, 0.0, 0.7];
        let (loss, _) = cross_entropy(&logits, 3).unwrap();
        let z: f64 = logits.iter().map(|x| x.exp()).sum();
        let expected = -(logits[3].exp() / z).ln();
        assert!((loss - expected).abs() < 1e-6);
        let (loss32, _) = cross_entropy(&logits.map(|x| x as f32), 3).unwrap();
        assert!((loss32 as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_target() {
        assert_eq!(
            cross_entropy(&[1.0f64, 2.0], 2),
            Err(NumError::TargetOutOfRange { target: 2, size: 2 })
        );
    }

    proptest! {
        #[test]
        fn sums_to_one_and_shift_invariant(
            logits in proptest::collection::vec(-50.0f64..50.0, 1..20),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
