use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::{add_at_b, sigmoid, ParamId, ParameterStore};
use crate::error::Result;
use crate::scalar::Scalar;

/// LSTM cell, gate order (input, forget, cell, output).
///
/// The decoders drive it generatively: each of `B` sequences receives one
/// constant input row at every step, so the input projection is computed
/// once per sequence and all sequences advance together.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmTrace<T> {
    /// `h_0..=h_K`, each `[B, H]`.
    pub hs: Vec<Array2<T>>,
    cs: Vec<Array2<T>>,
    /// Activated gates per step, `[B, 4H]`.
    gates: Vec<Array2<T>>,
}

impl Lstm {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w_ih = p.register_glorot(
            format!("{name}.w_ih"),
            &[4 * hidden, input],
            input,
            hidden,
            rng,
        )?;
        let w_hh = p.register_glorot(
            format!("{name}.w_hh"),
            &[4 * hidden, hidden],
            hidden,
            hidden,
            rng,
        )?;
        let b_ih = p.register(format!("{name}.b_ih"), &[4 * hidden])?;
        let b_hh = p.register(format!("{name}.b_hh"), &[4 * hidden])?;
        Ok(Self {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            input,
            hidden,
        })
    }

    /// Unrolls `steps` steps from `(h0, c = 0)` with constant inputs `x` (`[B, I]`).
    pub fn unroll<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        x: ArrayView2<'_, T>,
        h0: ArrayView2<'_, T>,
        steps: usize,
    ) -> LstmTrace<T> {
        let hd = self.hidden;
        let batch = x.nrows();
        let gi = x.dot(&p.mat(self.w_ih).t()) + p.vec(self.b_ih) + p.vec(self.b_hh);
        let w_hh_t = p.mat(self.w_hh).t().to_owned();
        let mut hs = Vec::with_capacity(steps + 1);
        let mut cs = Vec::with_capacity(steps + 1);
        let mut gates = Vec::with_capacity(steps);
        hs.push(h0.to_owned());
        cs.push(Array2::zeros((batch, hd)));
        for k in 0..steps {
            let mut a = hs[k].dot(&w_hh_t) + &gi;
            let mut h = Array2::zeros((batch, hd));
            let mut c = Array2::zeros((batch, hd));
            let c_prev = &cs[k];
            for b in 0..batch {
                let mut row = a.row_mut(b);
                for j in 0..hd {
                    let i = sigmoid(row[j]);
                    let f = sigmoid(row[hd + j]);
                    let gg = row[2 * hd + j].tanh();
                    let o = sigmoid(row[3 * hd + j]);
                    row[j] = i;
                    row[hd + j] = f;
                    row[2 * hd + j] = gg;
                    row[3 * hd + j] = o;
                    let cn = f * c_prev[[b, j]] + i * gg;
                    c[[b, j]] = cn;
                    h[[b, j]] = o * cn.tanh();
                }
            }
            gates.push(a);
            hs.push(h);
            cs.push(c);
        }
        LstmTrace { hs, cs, gates }
    }

    /// `dhs[k]` is the gradient w.r.t. `h_{k+1}`. Returns `(dx, dh0)`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        x: ArrayView2<'_, T>,
        trace: &LstmTrace<T>,
        dhs: &[Array2<T>],
    ) -> (Array2<T>, Array2<T>) {
        let hd = self.hidden;
        let batch = x.nrows();
        let steps = trace.gates.len();
        let w_hh = p.mat(self.w_hh);
        let mut dh = Array2::<T>::zeros((batch, hd));
        let mut dc = Array2::<T>::zeros((batch, hd));
        let mut da_sum = Array2::<T>::zeros((batch, 4 * hd));
        let mut da = Array2::<T>::zeros((batch, 4 * hd));
        for k in (0..steps).rev() {
            dh += &dhs[k];
            let gates = &trace.gates[k];
            let c = &trace.cs[k + 1];
            let c_prev = &trace.cs[k];
            for b in 0..batch {
                for j in 0..hd {
                    let i = gates[[b, j]];
                    let f = gates[[b, hd + j]];
                    let gg = gates[[b, 2 * hd + j]];
                    let o = gates[[b, 3 * hd + j]];
                    let tc = c[[b, j]].tanh();
                    let d = dh[[b, j]];
                    let dcell = dc[[b, j]] + d * o * (T::one() - tc * tc);
                    da[[b, j]] = dcell * gg * i * (T::one() - i);
                    da[[b, hd + j]] = dcell * c_prev[[b, j]] * f * (T::one() - f);
                    da[[b, 2 * hd + j]] = dcell * i * (T::one() - gg * gg);
                    da[[b, 3 * hd + j]] = d * tc * o * (T::one() - o);
                    dc[[b, j]] = dcell * f;
                }
            }
            add_at_b(&mut g.mat_mut(self.w_hh), da.view(), trace.hs[k].view());
            da_sum += &da;
            dh = da.dot(&w_hh);
        }
        let db = da_sum.sum_axis(Axis(0));
        g.vec_mut(self.b_hh).scaled_add(T::one(), &db);
        g.vec_mut(self.b_ih).scaled_add(T::one(), &db);
        add_at_b(&mut g.mat_mut(self.w_ih), da_sum.view(), x);
        let dx = da_sum.dot(&p.mat(self.w_ih));
        (dx, dh)
    }
}

impl<T: Scalar> LstmTrace<T> {
    /// Hidden outputs of sequence `b`, `[K, H]`.
    pub fn outputs_of(&self, b: usize) -> Array2<T> {
        let steps = self.hs.len() - 1;
        let hd = self.hs[0].ncols();
        let mut out = Array2::zeros((steps, hd));
        for k in 0..steps {
            out.row_mut(k).assign(&self.hs[k + 1].row(b));
        }
        out
    }

    pub fn steps(&self) -> usize {
        self.gates.len()
    }

    pub fn hidden_at(&self, k: usize) -> ArrayView2<'_, T> {
        self.hs[k + 1].slice(s![.., ..])
    }
}
