//! Adam with global-norm clipping and optional L2 weight decay, restricted
//! to a set of trainable entries.

use crate::nn::ParameterStore;
use crate::scalar::Scalar;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: f64,
    clip_norm: f64,
    weight_decay: f64,
    m: ParameterStore<T>,
    v: ParameterStore<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParameterStore<T>, lr: f64, clip_norm: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            clip_norm,
            weight_decay,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// Norm of `scale * g` (plus weight decay) over the trainable entries.
    pub fn grad_norm(
        &self,
        p: &ParameterStore<T>,
        g: &ParameterStore<T>,
        trainable: &[bool],
        scale: f64,
    ) -> f64 {
        let mut sq = 0.0;
        for id in p.ids().filter(|id| trainable[id.index()]) {
            for (&gv, &w) in slice(g, id).iter().zip(slice(p, id)) {
                let v = scale * gv.to_f64_lossy() + self.weight_decay * w.to_f64_lossy();
                sq += v * v;
            }
        }
        sq.sqrt()
    }

    /// Applies one update with gradient `scale * g` to entries with
    /// `trainable[i]`; returns the gradient norm before clipping.
    pub fn step(
        &mut self,
        p: &mut ParameterStore<T>,
        g: &ParameterStore<T>,
        trainable: &[bool],
        scale: f64,
    ) -> f64 {
        let norm = self.grad_norm(p, g, trainable, scale);
        let clip = if self.clip_norm > 0.0 && norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let (nb1, nb2) = (T::lit(1.0 - BETA1), T::lit(1.0 - BETA2));
        let step = T::lit(self.lr / c1);
        let inv_c2 = T::lit(1.0 / c2);
        let eps = T::lit(ADAM_EPS);
        let gs = T::lit(scale * clip);
        let wd = T::lit(self.weight_decay * clip);
        let ids: Vec<_> = p.ids().filter(|id| trainable[id.index()]).collect();
        for id in ids {
            let w = p.get_mut(id).as_slice_mut().expect("contiguous parameters");
            let m = self
                .m
                .get_mut(id)
                .as_slice_mut()
                .expect("contiguous moments");
            let v = self
                .v
                .get_mut(id)
                .as_slice_mut()
                .expect("contiguous moments");
            for (((w, m), v), &g) in w.iter_mut().zip(m).zip(v).zip(slice(g, id)) {
                let g = gs * g + wd * *w;
                *m = b1 * *m + nb1 * g;
                *v = b2 * *v + nb2 * g * g;
                *w -= step * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
        norm
    }
}

fn slice<T: Scalar>(p: &ParameterStore<T>, id: crate::nn::ParamId) -> &[T] {
    p.get(id).as_slice().expect("contiguous parameters")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_a_quadratic_and_respects_the_mask() {
        let mut p = ParameterStore::<f64>::new();
        let a = p.register("a", &[2]).unwrap();
        let b = p.register("b", &[1]).unwrap();
        p.fill(a, 3.0);
        p.fill(b, 3.0);
        let mut opt = Adam::new(&p, 0.05, 0.0, 0.0);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            let pa = p.get(a).clone();
            g.get_mut(a).assign(&(pa * 2.0));
            g.get_mut(b).fill(1.0);
            opt.step(&mut p, &g, &[true, false], 1.0);
        }
        assert!(p.get(a).iter().all(|v| v.abs() < 1e-2));
        assert_eq!(p.get(b)[[0]], 3.0);
    }

    #[test]
    fn clipping_bounds_the_first_step() {
        let mut p = ParameterStore::<f64>::new();
        let a = p.register("a", &[1]).unwrap();
        let mut opt = Adam::new(&p, 0.1, 1.0, 0.0);
        let mut g = p.zeros_like();
        g.get_mut(a).fill(100.0);
        let norm = opt.step(&mut p, &g, &[true], 1.0);
        assert_eq!(norm, 100.0);
        // Adam's first step has magnitude lr regardless of scale.
        assert!((p.get(a)[[0]] + 0.1).abs() < 1e-6);
    }
}
