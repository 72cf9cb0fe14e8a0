//! Loss functions with their gradients.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean squared error over all pixel values; returns `(loss, dL/dpred)`.
pub fn image_loss<T: Scalar>(
    pred: ArrayView3<'_, T>,
    target: ArrayView3<'_, T>,
) -> Result<(T, Array3<T>)> {
    if pred.dim() != target.dim() {
        return Err(Error::ShapeMismatch(format!(
            "reconstruction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let n = T::lit(pred.len() as f64);
    let mut grad = &pred - &target;
    let loss = grad.iter().map(|&d| d * d).sum::<T>() / n;
    let two_over_n = T::lit(2.0) / n;
    grad.mapv_inplace(|d| d * two_over_n);
    Ok((loss, grad))
}

/// Mean over masked rows of `1 - cos(pred, target)`. A zero-norm prediction
/// row contributes a loss of 1 and no gradient.
///
/// `pred` and `target` are `[N, E]` with one row per grid cell, `mask` has
/// `N` entries.
pub fn text_loss<T: Scalar>(
    pred: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: &[bool],
) -> Result<(T, Array2<T>)> {
    text_loss_grads(pred, target, mask).map(|(l, dp, _)| (l, dp))
}

/// As [`text_loss`], additionally returning the gradient w.r.t. `target`
/// (used when the embedding rows are trainable).
pub fn text_loss_grads<T: Scalar>(
    pred: ArrayView2<'_, T>,
    target: ArrayView2<'_, T>,
    mask: &[bool],
) -> Result<(T, Array2<T>, Array2<T>)> {
    if pred.dim() != target.dim() || pred.nrows() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "text prediction {:?}, target {:?}, mask {}",
            pred.dim(),
            target.dim(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let inv = T::one() / T::lit(count as f64);
    let mut dpred = Array2::zeros(pred.dim());
    let mut dtarget = Array2::zeros(pred.dim());
    let mut loss = T::zero();
    for (r, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let (cos, grads) = cosine_with_grads(pred.row(r), target.row(r));
        loss += T::one() - cos;
        if let Some((ga, gb)) = grads {
            dpred.row_mut(r).assign(&ga.mapv(|v| -v * inv));
            dtarget.row_mut(r).assign(&gb.mapv(|v| -v * inv));
        }
    }
    Ok((loss * inv, dpred, dtarget))
}

/// Cosine similarity and its gradients w.r.t. both arguments. Returns
/// `(0, None)` when either vector has (near) zero norm.
fn cosine_with_grads<T: Scalar>(
    a: ArrayView1<'_, T>,
    b: ArrayView1<'_, T>,
) -> (T, Option<(Array1<T>, Array1<T>)>) {
    let tiny = T::lit(1e-12);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na <= tiny || nb <= tiny {
        return (T::zero(), None);
    }
    let cos = a.dot(&b) / (na * nb);
    let mut ga = Array1::zeros(a.len());
    let mut gb = Array1::zeros(a.len());
    Zip::from(&mut ga)
        .and(&mut gb)
        .and(&a)
        .and(&b)
        .for_each(|ga, gb, &ai, &bi| {
            *ga = bi / (na * nb) - cos * ai / (na * na);
            *gb = ai / (na * nb) - cos * bi / (nb * nb);
        });
    (cos, Some((ga, gb)))
}

/// Softmax cross-entropy for one example; returns `(loss, dL/dlogits)`.
pub fn classification_loss<T: Scalar>(
    logits: ArrayView1<'_, T>,
    label: usize,
) -> Result<(T, Array1<T>)> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label index {label} out of range for {} classes",
            logits.len()
        )));
    }
    let probs = crate::nn::softmax(logits);
    let loss = -probs[label].max(T::lit(1e-30)).ln();
    let mut grad = probs;
    grad[label] -= T::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn mse_matches_hand_computation() {
        let p = Array3::from_shape_vec((1, 1, 2), vec![1.0, -1.0]).unwrap();
        let t = Array3::from_shape_vec((1, 1, 2), vec![0.0, 1.0]).unwrap();
        let (l, g) = image_loss::<f64>(p.view(), t.view()).unwrap();
        assert!((l - 2.5).abs() < 1e-12);
        assert_eq!(g.into_raw_vec_and_offset().0, vec![1.0, -2.0]);
    }

    #[test]
    fn cosine_loss_parallel_is_zero_and_opposite_is_two() {
        let p = array![[1.0, 2.0], [1.0, 0.0]];
        let t = array![[2.0, 4.0], [-3.0, 0.0]];
        let (l, _) = text_loss::<f64>(p.view(), t.view(), &[true, false]).unwrap();
        assert!(l.abs() < 1e-12);
        let (l, _) = text_loss::<f64>(p.view(), t.view(), &[false, true]).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_prediction_costs_one_without_gradient() {
        let p = array![[0.0, 0.0]];
        let t = array![[1.0, 0.0]];
        let (l, g) = text_loss::<f64>(p.view(), t.view(), &[true]).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_mask_is_rejected() {
        let p = array![[1.0, 0.0]];
        assert!(matches!(
            text_loss::<f64>(p.view(), p.view(), &[false]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let (l, g) = classification_loss::<f64>(array![0.0, 0.0, 0.0].view(), 1).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!((g[1] + 2.0 / 3.0).abs() < 1e-12);
        assert!(classification_loss::<f64>(array![0.0].view(), 3).is_err());
    }

    #[test]
    fn text_gradient_matches_finite_differences() {
        let p = array![[0.3, -0.7, 1.1], [0.5, 0.2, -0.4]];
        let t = array![[1.0, 0.5, -0.2], [-0.3, 0.8, 0.1]];
        let mask = [true, true];
        let (_, g) = text_loss::<f64>(p.view(), t.view(), &mask).unwrap();
        let h = 1e-6;
        for r in 0..2 {
            for c in 0..3 {
                let mut a = p.clone();
                a[[r, c]] += h;
                let mut b = p.clone();
                b[[r, c]] -= h;
                let fd = (text_loss(a.view(), t.view(), &mask).unwrap().0
                    - text_loss(b.view(), t.view(), &mask).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[[r, c]]).abs() < 1e-7);
            }
        }
    }
}
