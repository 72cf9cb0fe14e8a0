use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::{ParamId, ParameterStore};
use crate::error::Result;
use crate::scalar::Scalar;

/// Variance floor inside the normalisation.
pub const LN_EPS: f64 = 1e-9;

/// Layer normalisation over the last axis with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormTrace<T> {
    /// Normalised rows before gain/bias.
    pub xhat: Array2<T>,
    rstd: Array1<T>,
}

impl LayerNorm {
    pub fn new<T: Scalar>(p: &mut ParameterStore<T>, name: &str, dim: usize) -> Result<Self> {
        let gain = p.register(format!("{name}.gain"), &[dim])?;
        p.fill(gain, T::one());
        let bias = p.register(format!("{name}.bias"), &[dim])?;
        Ok(Self { gain, bias, dim })
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        x: ArrayView2<'_, T>,
    ) -> (Array2<T>, LayerNormTrace<T>) {
        let n = T::lit(self.dim as f64);
        let mut xhat = x.to_owned();
        let mut rstd = Array1::zeros(x.nrows());
        for (mut row, r) in xhat.axis_iter_mut(Axis(0)).zip(rstd.iter_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<T>() / n;
            *r = T::one() / (var + T::lit(LN_EPS)).sqrt();
            let rs = *r;
            row.mapv_inplace(|v| v * rs);
        }
        let y = &xhat * &p.vec(self.gain) + p.vec(self.bias);
        (y, LayerNormTrace { xhat, rstd })
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        trace: &LayerNormTrace<T>,
        dy: ArrayView2<'_, T>,
    ) -> Array2<T> {
        g.vec_mut(self.gain)
            .scaled_add(T::one(), &(&dy * &trace.xhat).sum_axis(Axis(0)));
        g.vec_mut(self.bias)
            .scaled_add(T::one(), &dy.sum_axis(Axis(0)));
        let n = T::lit(self.dim as f64);
        let mut dx = &dy * &p.vec(self.gain);
        for ((mut row, xh), &rs) in dx
            .axis_iter_mut(Axis(0))
            .zip(trace.xhat.axis_iter(Axis(0)))
            .zip(trace.rstd.iter())
        {
            let sum_d = row.sum();
            let sum_dx = row.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>();
            for (d, &xv) in row.iter_mut().zip(xh.iter()) {
                *d = rs / n * (n * *d - sum_d - xv * sum_dx);
            }
        }
        dx
    }
}
