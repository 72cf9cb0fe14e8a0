//! Hand-differentiated layers. Each layer owns [`ParamId`] handles into a
//! shared [`ParameterStore`]; forward passes return the activations needed by
//! the matching backward pass, which accumulates into a gradient store with
//! the same layout.

mod attention;
mod conv;
mod gru;
mod linear;
mod lstm;
mod norm;
mod params;
mod upsample;

pub use attention::{Attention, AttentionTrace};
pub use conv::{Conv2d, ConvTrace};
pub use gru::{BiGru, BiGruTrace, Gru, GruTrace};
pub use linear::Linear;
pub use lstm::{Lstm, LstmTrace};
pub use norm::{LayerNorm, LayerNormTrace, LN_EPS};
pub use params::{ParamEntry, ParamId, ParameterStore};
pub use upsample::{upsample_nearest, upsample_nearest_backward, upsample_size};

use ndarray::{Array, Array1, ArrayView1, ArrayView2, ArrayViewMut2, Dimension};

use crate::scalar::Scalar;

pub const LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::lit(LEAKY_SLOPE)
    }
}

#[inline]
pub fn leaky_relu_grad<T: Scalar>(pre: T) -> T {
    if pre > T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place leaky ReLU; returns the pre-activation copy needed for backward.
pub fn leaky_relu_inplace<T: Scalar, D: Dimension>(x: &mut Array<T, D>) -> Array<T, D> {
    let pre = x.clone();
    x.mapv_inplace(leaky_relu);
    pre
}

/// `dy *= leaky_relu'(pre)` elementwise.
pub fn leaky_relu_backward<T: Scalar, D: Dimension>(dy: &mut Array<T, D>, pre: &Array<T, D>) {
    dy.zip_mut_with(pre, |d, &p| *d *= leaky_relu_grad(p));
}

/// Numerically stable softmax over a slice of scores.
pub fn softmax<T: Scalar>(scores: ArrayView1<'_, T>) -> ndarray::Array1<T> {
    let max = scores
        .iter()
        .fold(T::neg_infinity(), |m, &v| if v > m { v } else { m });
    let mut e = scores.mapv(|v| (v - max).exp());
    let s: T = e.iter().copied().sum();
    e.mapv_inplace(|v| v / s);
    e
}

/// `c += alpha * a^T b` for row-major operands, as used by weight gradients.
pub(crate) fn add_at_b<T: Scalar>(
    c: &mut ArrayViewMut2<'_, T>,
    a: ArrayView2<'_, T>,
    b: ArrayView2<'_, T>,
) {
    ndarray::linalg::general_mat_mul(T::one(), &a.t(), &b, T::one(), c);
}

/// `m^T v`, accumulated row by row so memory access stays contiguous.
pub(crate) fn t_dot<T: Scalar>(m: ArrayView2<'_, T>, v: ArrayView1<'_, T>) -> Array1<T> {
    let mut out = Array1::zeros(m.ncols());
    for (row, &c) in m.rows().into_iter().zip(v.iter()) {
        out.scaled_add(c, &row);
    }
    out
}

/// `c += a b^T` (outer product).
pub(crate) fn add_outer<T: Scalar>(
    c: &mut ArrayViewMut2<'_, T>,
    a: ArrayView1<'_, T>,
    b: ArrayView1<'_, T>,
) {
    for (mut row, &ai) in c.rows_mut().into_iter().zip(a.iter()) {
        row.scaled_add(ai, &b);
    }
}
