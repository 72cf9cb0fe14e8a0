//! Fully-connected classification head over the article embedding.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::config::{ClassifierConfig, NUM_CLASSES};
use crate::corpus::AbsLabel;
use crate::error::{Error, Result};
use crate::nn::{leaky_relu_backward, leaky_relu_inplace, softmax, Linear, ParameterStore};
use crate::scalar::Scalar;

/// Probabilities in label order (`I<aT`, `I>aT`, `I=aT`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassProbabilities(pub [f64; NUM_CLASSES]);

impl ClassProbabilities {
    /// Argmax; ties go to the earlier label.
    pub fn predict(&self) -> AbsLabel {
        let mut best = 0;
        for i in 1..NUM_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        AbsLabel::from_index(best).expect("class index")
    }
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub cfg: ClassifierConfig,
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct ClassifierTrace<T> {
    inputs: Vec<Array1<T>>,
    pre: Vec<Array1<T>>,
    pub logits: Array1<T>,
}

impl Classifier {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        cfg: &ClassifierConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut width = cfg.input_width;
        for (i, &h) in cfg
            .hidden
            .iter()
            .chain(std::iter::once(&NUM_CLASSES))
            .enumerate()
        {
            layers.push(Linear::new(p, &format!("{name}.fc{i}"), width, h, rng)?);
            width = h;
        }
        Ok(Self {
            cfg: cfg.clone(),
            layers,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        z: ArrayView1<'_, T>,
    ) -> Result<ClassifierTrace<T>> {
        if z.len() != self.cfg.input_width {
            return Err(Error::WidthMismatch {
                expected: self.cfg.input_width,
                found: z.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = z.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(p, h.view());
            if i < last {
                pre.push(leaky_relu_inplace(&mut out));
            }
            inputs.push(std::mem::replace(&mut h, out));
        }
        Ok(ClassifierTrace {
            inputs,
            pre,
            logits: h,
        })
    }

    /// Returns `dL/dz` given `dL/dlogits`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        trace: &ClassifierTrace<T>,
        dlogits: ArrayView1<'_, T>,
    ) -> Array1<T> {
        let mut d = dlogits.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                leaky_relu_backward(&mut d, &trace.pre[i]);
            }
            d = self.layers[i].backward(p, g, trace.inputs[i].view(), d.view());
        }
        d
    }

    pub fn classify<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        z: ArrayView1<'_, T>,
    ) -> Result<ClassProbabilities> {
        let tr = self.forward(p, z)?;
        Ok(probabilities(tr.logits.view()))
    }

    pub fn predict<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        z: ArrayView1<'_, T>,
    ) -> Result<AbsLabel> {
        Ok(self.classify(p, z)?.predict())
    }
}

pub fn probabilities<T: Scalar>(logits: ArrayView1<'_, T>) -> ClassProbabilities {
    let s = softmax(logits);
    let mut out = [0.0; NUM_CLASSES];
    for (o, v) in out.iter_mut().zip(s.iter()) {
        *o = v.to_f64_lossy();
    }
    ClassProbabilities(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use ndarray::Array2;

    fn head(p: &mut ParameterStore<f64>) -> Classifier {
        let cfg = ClassifierConfig {
            input_width: 6,
            hidden: vec![8, 8],
        };
        Classifier::new(p, "classifier", &cfg, &mut rng_for(4, "cls")).unwrap()
    }

    #[test]
    fn zero_parameters_are_uniform() {
        let mut p = ParameterStore::new();
        let c = head(&mut p);
        for id in p.ids().collect::<Vec<_>>() {
            p.fill(id, 0.0);
        }
        let pr = c
            .classify(&p, Array1::linspace(-1.0, 1.0, 6).view())
            .unwrap();
        for v in pr.0 {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(pr.predict(), AbsLabel::ImageLessAbstract);
    }

    #[test]
    fn matches_dense_recomputation() {
        let mut p = ParameterStore::new();
        let c = head(&mut p);
        let z = Array1::linspace(-0.5, 0.9, 6);
        let mut h = z.clone();
        for (i, e) in p.entries().chunks(2).enumerate() {
            let w: Array2<f64> = e[0].value.clone().into_dimensionality().unwrap();
            let b: Array1<f64> = e[1].value.clone().into_dimensionality().unwrap();
            h = w.dot(&h) + &b;
            if i < 2 {
                h.mapv_inplace(|v| if v > 0.0 { v } else { 0.01 * v });
            }
        }
        let m = h.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = h.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        let pr = c.classify(&p, z.view()).unwrap();
        for k in 0..3 {
            assert!((pr.0[k] - e[k] / s).abs() < 1e-12);
        }
    }

    #[test]
    fn width_is_checked() {
        let mut p = ParameterStore::new();
        let c = head(&mut p);
        assert!(matches!(
            c.classify(&p, Array1::zeros(5).view()),
            Err(Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn tie_rule() {
        assert_eq!(
            ClassProbabilities([0.2, 0.4, 0.4]).predict(),
            AbsLabel::ImageMoreAbstract
        );
        assert_eq!(
            ClassProbabilities([0.5, 0.3, 0.2]).predict(),
            AbsLabel::ImageLessAbstract
        );
    }
}
