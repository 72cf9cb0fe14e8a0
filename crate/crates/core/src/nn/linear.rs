use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{add_at_b, add_outer, t_dot, ParamId, ParameterStore};
use crate::error::Result;
use crate::scalar::Scalar;

/// Affine map `y = W x + b` with `W` stored as `[out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = p.register_glorot(
            format!("{name}.weight"),
            &[out_dim, in_dim],
            in_dim,
            out_dim,
            rng,
        )?;
        let b = p.register(format!("{name}.bias"), &[out_dim])?;
        Ok(Self {
            w,
            b,
            in_dim,
            out_dim,
        })
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterStore<T>, x: ArrayView1<'_, T>) -> Array1<T> {
        p.mat(self.w).dot(&x) + p.vec(self.b)
    }

    /// Row-batched form: `x` is `[n, in]`, result `[n, out]`.
    pub fn forward_rows<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        x: ArrayView2<'_, T>,
    ) -> Array2<T> {
        x.dot(&p.mat(self.w).t()) + p.vec(self.b)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        x: ArrayView1<'_, T>,
        dy: ArrayView1<'_, T>,
    ) -> Array1<T> {
        self.accumulate(g, x, dy);
        t_dot(p.mat(self.w), dy)
    }

    pub fn accumulate<T: Scalar>(
        &self,
        g: &mut ParameterStore<T>,
        x: ArrayView1<'_, T>,
        dy: ArrayView1<'_, T>,
    ) {
        add_outer(&mut g.mat_mut(self.w), dy, x);
        g.vec_mut(self.b).scaled_add(T::one(), &dy);
    }

    pub fn backward_rows<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        x: ArrayView2<'_, T>,
        dy: ArrayView2<'_, T>,
    ) -> Array2<T> {
        self.accumulate_rows(g, x, dy);
        dy.dot(&p.mat(self.w))
    }

    pub fn accumulate_rows<T: Scalar>(
        &self,
        g: &mut ParameterStore<T>,
        x: ArrayView2<'_, T>,
        dy: ArrayView2<'_, T>,
    ) {
        add_at_b(&mut g.mat_mut(self.w), dy, x);
        g.vec_mut(self.b)
            .scaled_add(T::one(), &dy.sum_axis(Axis(0)));
    }
}
