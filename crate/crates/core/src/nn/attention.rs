use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{add_at_b, softmax, t_dot, ParamId, ParameterStore};
use crate::error::Result;
use crate::scalar::Scalar;

/// Query-conditioned additive attention pooling:
/// `u_t = tanh(W h_t + b)`, `α = softmax(u_t · q)`, `out = Σ α_t h_t`.
#[derive(Debug, Clone)]
pub struct Attention {
    pub w: ParamId,
    pub b: ParamId,
    pub dim: usize,
    pub att_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace<T> {
    u: Array2<T>,
    pub weights: Array1<T>,
}

impl Attention {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        dim: usize,
        att_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = p.register_glorot(format!("{name}.weight"), &[att_dim, dim], dim, att_dim, rng)?;
        let b = p.register(format!("{name}.bias"), &[att_dim])?;
        Ok(Self { w, b, dim, att_dim })
    }

    /// `h` holds only real positions (at least one row).
    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        h: ArrayView2<'_, T>,
        q: ArrayView1<'_, T>,
    ) -> (Array1<T>, AttentionTrace<T>) {
        let mut u = h.dot(&p.mat(self.w).t()) + p.vec(self.b);
        u.mapv_inplace(|v| v.tanh());
        let scores = u.dot(&q);
        let weights = softmax(scores.view());
        let out = t_dot(h, weights.view());
        (out, AttentionTrace { u, weights })
    }

    /// Returns `(dh, dq)`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        h: ArrayView2<'_, T>,
        q: ArrayView1<'_, T>,
        trace: &AttentionTrace<T>,
        dout: ArrayView1<'_, T>,
    ) -> (Array2<T>, Array1<T>) {
        let alpha = &trace.weights;
        let dalpha = h.dot(&dout);
        let mut dh = alpha
            .view()
            .insert_axis(Axis(1))
            .dot(&dout.insert_axis(Axis(0)));
        let inner: T = alpha.iter().zip(dalpha.iter()).map(|(&a, &d)| a * d).sum();
        let ds = alpha * &dalpha.mapv(|d| d - inner);
        let dq = t_dot(trace.u.view(), ds.view());
        let mut dpre = ds.view().insert_axis(Axis(1)).dot(&q.insert_axis(Axis(0)));
        dpre.zip_mut_with(&trace.u, |d, &u| *d *= T::one() - u * u);
        add_at_b(&mut g.mat_mut(self.w), dpre.view(), h);
        g.vec_mut(self.b)
            .scaled_add(T::one(), &dpre.sum_axis(Axis(0)));
        dh += &dpre.dot(&p.mat(self.w));
        (dh, dq)
    }
}
