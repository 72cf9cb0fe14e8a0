use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{add_at_b, sigmoid, t_dot, ParamId, ParameterStore};
use crate::error::Result;
use crate::scalar::Scalar;

/// Gated recurrent unit, gate order (reset, update, candidate):
///
/// ```text
/// r = σ(Wr x + br + Ur h + cr)
/// z = σ(Wz x + bz + Uz h + cz)
/// n = tanh(Wn x + bn + r ⊙ (Un h + cn))
/// h' = (1 - z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruTrace<T> {
    /// Hidden states `h_0..=h_T`, one per row.
    pub hs: Array2<T>,
    r: Array2<T>,
    z: Array2<T>,
    n: Array2<T>,
    /// `Un h + cn`, needed for the reset-gate gradient.
    gh_n: Array2<T>,
}

impl<T: Scalar> GruTrace<T> {
    /// Outputs `h_1..=h_T`.
    pub fn outputs(&self) -> ArrayView2<'_, T> {
        self.hs.slice(s![1.., ..])
    }
}

impl Gru {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_ih = p.register_glorot(
            format!("{name}.w_ih"),
            &[3 * hidden, input],
            input,
            hidden,
            rng,
        )?;
        let w_hh = p.register_glorot(
            format!("{name}.w_hh"),
            &[3 * hidden, hidden],
            hidden,
            hidden,
            rng,
        )?;
        let b_ih = p.register(format!("{name}.b_ih"), &[3 * hidden])?;
        let b_hh = p.register(format!("{name}.b_hh"), &[3 * hidden])?;
        Ok(Self {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            input,
            hidden,
        })
    }

    /// Runs over the rows of `x` starting from `h0`.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        x: ArrayView2<'_, T>,
        h0: ArrayView1<'_, T>,
    ) -> GruTrace<T> {
        let steps = x.nrows();
        let hd = self.hidden;
        let gi = x.dot(&p.mat(self.w_ih).t()) + p.vec(self.b_ih);
        let w_hh = p.mat(self.w_hh);
        let b_hh = p.vec(self.b_hh);
        let mut hs = Array2::zeros((steps + 1, hd));
        hs.row_mut(0).assign(&h0);
        let mut r = Array2::zeros((steps, hd));
        let mut z = Array2::zeros((steps, hd));
        let mut n = Array2::zeros((steps, hd));
        let mut gh_n = Array2::zeros((steps, hd));
        for t in 0..steps {
            let gh = w_hh.dot(&hs.row(t)) + b_hh;
            for j in 0..hd {
                let rj = sigmoid(gi[[t, j]] + gh[j]);
                let zj = sigmoid(gi[[t, hd + j]] + gh[hd + j]);
                let nj = (gi[[t, 2 * hd + j]] + rj * gh[2 * hd + j]).tanh();
                r[[t, j]] = rj;
                z[[t, j]] = zj;
                n[[t, j]] = nj;
                gh_n[[t, j]] = gh[2 * hd + j];
                hs[[t + 1, j]] = (T::one() - zj) * nj + zj * hs[[t, j]];
            }
        }
        GruTrace { hs, r, z, n, gh_n }
    }

    /// Back-propagates `dhs` (gradient w.r.t. `h_1..=h_T`). Returns `(dx, dh0)`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        x: ArrayView2<'_, T>,
        trace: &GruTrace<T>,
        dhs: ArrayView2<'_, T>,
    ) -> (Array2<T>, Array1<T>) {
        let steps = x.nrows();
        let hd = self.hidden;
        let w_hh = p.mat(self.w_hh);
        let mut dgi = Array2::<T>::zeros((steps, 3 * hd));
        let mut dgh_all = Array2::<T>::zeros((steps, 3 * hd));
        let mut dh = Array1::<T>::zeros(hd);
        for t in (0..steps).rev() {
            dh += &dhs.row(t);
            let mut dh_prev = Array1::<T>::zeros(hd);
            for j in 0..hd {
                let (r, z, n) = (trace.r[[t, j]], trace.z[[t, j]], trace.n[[t, j]]);
                let h_prev = trace.hs[[t, j]];
                let d = dh[j];
                let dn = d * (T::one() - z);
                let dz = d * (h_prev - n);
                dh_prev[j] = d * z;
                let dan = dn * (T::one() - n * n);
                let dr = dan * trace.gh_n[[t, j]];
                let dar = dr * r * (T::one() - r);
                let daz = dz * z * (T::one() - z);
                dgi[[t, j]] = dar;
                dgi[[t, hd + j]] = daz;
                dgi[[t, 2 * hd + j]] = dan;
                dgh_all[[t, j]] = dar;
                dgh_all[[t, hd + j]] = daz;
                dgh_all[[t, 2 * hd + j]] = dan * r;
            }
            dh_prev += &t_dot(w_hh, dgh_all.row(t));
            dh = dh_prev;
        }
        add_at_b(
            &mut g.mat_mut(self.w_hh),
            dgh_all.view(),
            trace.hs.slice(s![..steps, ..]),
        );
        g.vec_mut(self.b_hh)
            .scaled_add(T::one(), &dgh_all.sum_axis(Axis(0)));
        add_at_b(&mut g.mat_mut(self.w_ih), dgi.view(), x);
        g.vec_mut(self.b_ih)
            .scaled_add(T::one(), &dgi.sum_axis(Axis(0)));
        let dx = dgi.dot(&p.mat(self.w_ih));
        (dx, dh)
    }
}

/// Bidirectional GRU; outputs `[forward_t ; backward_t]` per step.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

#[derive(Debug, Clone)]
pub struct BiGruTrace<T> {
    fwd: GruTrace<T>,
    bwd: GruTrace<T>,
    x_rev: Array2<T>,
    pub out: Array2<T>,
}

impl BiGru {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            fwd: Gru::new(p, &format!("{name}.fwd"), input, hidden, rng)?,
            bwd: Gru::new(p, &format!("{name}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn forward<T: Scalar>(&self, p: &ParameterStore<T>, x: ArrayView2<'_, T>) -> BiGruTrace<T> {
        let steps = x.nrows();
        let hd = self.fwd.hidden;
        let h0 = Array1::zeros(hd);
        let fwd = self.fwd.forward(p, x, h0.view());
        let x_rev = x.slice(s![..;-1, ..]).to_owned();
        let bwd = self.bwd.forward(p, x_rev.view(), h0.view());
        let mut out = Array2::zeros((steps, 2 * hd));
        out.slice_mut(s![.., ..hd]).assign(&fwd.outputs());
        out.slice_mut(s![.., hd..])
            .assign(&bwd.outputs().slice(s![..;-1, ..]));
        BiGruTrace {
            fwd,
            bwd,
            x_rev,
            out,
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        x: ArrayView2<'_, T>,
        trace: &BiGruTrace<T>,
        dout: ArrayView2<'_, T>,
    ) -> Array2<T> {
        let hd = self.fwd.hidden;
        let (dx_f, _) = self
            .fwd
            .backward(p, g, x, &trace.fwd, dout.slice(s![.., ..hd]));
        let d_rev = dout.slice(s![..;-1, hd..]);
        let (dx_b_rev, _) = self
            .bwd
            .backward(p, g, trace.x_rev.view(), &trace.bwd, d_rev);
        dx_f + dx_b_rev.slice(s![..;-1, ..])
    }
}
