//! Central finite-difference gradient checks for every parameterised block.
//!
//! Each block is wrapped in a [`Probe`]: a scalar function of a small
//! double-precision parameter store together with its analytic gradient.
//! Block outputs are reduced to a scalar by a fixed random linear
//! functional, which keeps every gradient entry of order one.

use ndarray::{Array1, Array2, Array3, ArrayD};
use rand::Rng;
use serde::Serialize;

use crate::classifier::Classifier;
use crate::config::{Backbone, ClassifierConfig, DecoderConfig, EncoderConfig, ModelConfig};
use crate::decoder::{ImageDecoder, TextDecoder};
use crate::encoder::{Encoder, ImageInput};
use crate::error::{Error, Result};
use crate::losses::{classification_loss, image_loss, text_loss_grads};
use crate::model::{AbsNet, Sample};
use crate::nn::{ParamId, ParameterStore};
use crate::seed::rng_for;
use crate::vocab::TokenGrid;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

type P = ParameterStore<f64>;

/// A scalar function of a parameter store with an analytic gradient.
pub trait Probe: Sync {
    fn name(&self) -> &str;
    fn params(&self) -> &P;
    /// Entries compared against finite differences.
    fn checked(&self) -> Vec<ParamId>;
    fn loss(&self, p: &P) -> f64;
    fn gradient(&self, p: &P) -> P;
}

type EvalFn = Box<dyn Fn(&P, Option<&mut P>) -> f64 + Sync>;

/// Probe built from one closure that returns the loss and, when asked,
/// accumulates the gradient.
pub struct FnProbe {
    name: String,
    params: P,
    checked: Vec<ParamId>,
    eval: EvalFn,
}

impl FnProbe {
    pub fn new(name: impl Into<String>, params: P, checked: Vec<ParamId>, eval: EvalFn) -> Self {
        Self {
            name: name.into(),
            params,
            checked,
            eval,
        }
    }
}

impl Probe for FnProbe {
    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> &P {
        &self.params
    }

    fn checked(&self) -> Vec<ParamId> {
        self.checked.clone()
    }

    fn loss(&self, p: &P) -> f64 {
        (self.eval)(p, None)
    }

    fn gradient(&self, p: &P) -> P {
        let mut g = p.zeros_like();
        (self.eval)(p, Some(&mut g));
        g
    }
}

/// Wraps a probe and multiplies its analytic gradient by a factor; used to
/// show the checker notices small gradient errors.
pub struct Corrupted<'a> {
    pub inner: &'a dyn Probe,
    pub factor: f64,
}

impl Probe for Corrupted<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn params(&self) -> &P {
        self.inner.params()
    }
    fn checked(&self) -> Vec<ParamId> {
        self.inner.checked()
    }
    fn loss(&self, p: &P) -> f64 {
        self.inner.loss(p)
    }
    fn gradient(&self, p: &P) -> P {
        let mut g = self.inner.gradient(p);
        g.scale(self.factor);
        g
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub block: String,
    pub max_rel_err: f64,
    pub worst_entry: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub values_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

/// `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient with central differences
/// `(L(w + eps) - L(w - eps)) / 2eps` for every checked value.
pub fn gradient_check(probe: &dyn Probe, eps: f64) -> GradCheckReport {
    let base = probe.params();
    let grad = probe.gradient(base);
    let mut work = base.clone();
    let mut report = GradCheckReport {
        block: probe.name().to_owned(),
        max_rel_err: 0.0,
        worst_entry: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        values_checked: 0,
    };
    for id in probe.checked() {
        let n = base.get(id).len();
        for k in 0..n {
            let orig = flat(base.get(id))[k];
            flat_mut(work.get_mut(id))[k] = orig + eps;
            let up = probe.loss(&work);
            flat_mut(work.get_mut(id))[k] = orig - eps;
            let down = probe.loss(&work);
            flat_mut(work.get_mut(id))[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let analytic = flat(grad.get(id))[k];
            let err = relative_error(analytic, numeric);
            report.values_checked += 1;
            if err > report.max_rel_err || report.worst_entry.is_empty() {
                report.max_rel_err = err;
                report.worst_entry = base.name(id).to_owned();
                report.worst_index = k;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    report
}

fn flat(a: &ArrayD<f64>) -> &[f64] {
    a.as_slice().expect("parameters are contiguous")
}

fn flat_mut(a: &mut ArrayD<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are contiguous")
}

/// Names accepted by [`block_probe`].
pub const BLOCKS: [&str; 12] = [
    "linear",
    "image_cnn",
    "word_level",
    "sentence_level",
    "image_decoder",
    "image_decoder_upsampling",
    "text_decoder",
    "classifier",
    "image_loss",
    "text_loss",
    "classification_loss",
    "autoencoder",
];

fn uniform<R: Rng>(rng: &mut R, shape: &[usize], r: f64) -> ArrayD<f64> {
    ArrayD::from_shape_simple_fn(shape.to_vec(), || rng.random_range(-r..r))
}

/// Redraws every parameter from `U(-r, r)`. Default initialisation (zero
/// biases, small weights) leaves many pre-activations within a step size of
/// the leaky-ReLU kink in these tiny networks, which spoils the central
/// difference rather than the gradient.
fn scramble<R: Rng>(p: &mut P, rng: &mut R, r: f64) {
    for id in p.ids().collect::<Vec<_>>() {
        p.get_mut(id).mapv_inplace(|_| rng.random_range(-r..r));
    }
}

fn tiny_encoder(backbone: Backbone) -> EncoderConfig {
    EncoderConfig {
        image_size: 8,
        backbone,
        cnn_channels: vec![2, 3],
        d_img: 4,
        d_txt: 4,
        word_hidden: 2,
        attention_dim: 3,
        word_dim: 3,
        max_sentences: 3,
        max_words: 4,
    }
}

/// Sentence 0 has 3 tokens, sentence 1 is empty, sentence 2 has 2 tokens.
fn tiny_grid(vocab_rows: u32) -> TokenGrid {
    let mut ids = Array2::from_elem((3, 4), vocab_rows - 1);
    let mut mask = Array2::from_elem((3, 4), false);
    for (s, j, id) in [(0, 0, 0), (0, 1, 2), (0, 2, 1), (2, 0, 3), (2, 1, 0)] {
        ids[[s, j]] = id;
        mask[[s, j]] = true;
    }
    TokenGrid { ids, mask }
}

fn tiny_decoder(upsample: Vec<f64>, seed_side: usize, input_width: usize) -> DecoderConfig {
    DecoderConfig {
        input_width,
        image_size: 10,
        seed_side,
        seed_channels: 2,
        channels: vec![2, 2, 2, 3],
        upsample,
        sentence_hidden: 4,
        word_hidden: 4,
        word_dim: 8,
        max_sentences: 2,
        max_words: 3,
    }
}

fn encoder_probe(block: &str) -> Result<FnProbe> {
    let mut rng = rng_for(11, block);
    let cfg = tiny_encoder(Backbone::DeskCnn);
    let mut p = P::new();
    let embed = p.insert("embedding.table", uniform(&mut rng, &[6, 3], 1.0))?;
    let enc = Encoder::new(&mut p, &cfg, embed, &mut rng)?;
    // A wider range keeps attention scores input-dependent; otherwise the
    // softmax is nearly shift-invariant in the attention bias and its
    // gradient is too small to difference reliably.
    scramble(&mut p, &mut rng, 1.5);
    let image = uniform(&mut rng, &[3, 8, 8], 1.0)
        .into_dimensionality::<ndarray::Ix3>()
        .expect("3-d");
    let grid = tiny_grid(6);
    let coef = uniform(&mut rng, &[cfg.embedding_width()], 1.0)
        .into_dimensionality::<ndarray::Ix1>()
        .expect("1-d");
    let checked: Vec<ParamId> = p
        .ids()
        .filter(|&id| {
            let n = p.name(id);
            match block {
                "image_cnn" => n.starts_with("encoder.cnn."),
                "word_level" => n.starts_with("encoder.word_") || n == "embedding.table",
                _ => n.starts_with("encoder.sent_"),
            }
        })
        .collect();
    let eval: EvalFn = Box::new(move |p, g| {
        let tr = enc
            .forward(p, ImageInput::Pixels(&image), &grid)
            .expect("valid probe input");
        if let Some(g) = g {
            enc.backward(p, g, &tr, coef.view(), true);
        }
        tr.embedding.dot(&coef)
    });
    Ok(FnProbe::new(block, p, checked, eval))
}

fn image_decoder_probe(block: &str, upsample: Vec<f64>, seed_side: usize) -> Result<FnProbe> {
    let mut rng = rng_for(12, block);
    let cfg = tiny_decoder(upsample, seed_side, 6);
    let mut p = P::new();
    let z = p.insert("probe.z", uniform(&mut rng, &[6], 1.0))?;
    let dec = ImageDecoder::new(&mut p, "decoder.image", &cfg, &mut rng)?;
    scramble(&mut p, &mut rng, 0.5);
    let coef = uniform(&mut rng, &[3, 10, 10], 1.0)
        .into_dimensionality::<ndarray::Ix3>()
        .expect("3-d");
    let checked = p.ids().collect();
    let eval: EvalFn = Box::new(move |p, g| {
        let zv = p.vec(z).to_owned();
        let tr = dec.forward(p, zv.view()).expect("valid probe input");
        let loss = (&tr.output * &coef).sum();
        if let Some(g) = g {
            let dz = dec.backward(p, g, zv.view(), &tr, &coef);
            g.vec_mut(z).scaled_add(1.0, &dz);
        }
        loss
    });
    Ok(FnProbe::new(block, p, checked, eval))
}

fn text_decoder_probe() -> Result<FnProbe> {
    let mut rng = rng_for(13, "text_decoder");
    let cfg = tiny_decoder(vec![1.0, 1.0, 1.0], 10, 6);
    let mut p = P::new();
    let z = p.insert("probe.z", uniform(&mut rng, &[6], 1.0))?;
    let dec = TextDecoder::new(&mut p, "decoder.text", &cfg, &mut rng)?;
    scramble(&mut p, &mut rng, 0.5);
    let coef = uniform(&mut rng, &[2, 3, 8], 1.0)
        .into_dimensionality::<ndarray::Ix3>()
        .expect("3-d");
    let checked = p.ids().collect();
    let eval: EvalFn = Box::new(move |p, g| {
        let zv = p.vec(z).to_owned();
        let tr = dec.forward(p, zv.view(), 2, 3).expect("valid probe input");
        let loss = (&tr.output * &coef).sum();
        if let Some(g) = g {
            let dz = dec.backward(p, g, zv.view(), &tr, &coef);
            g.vec_mut(z).scaled_add(1.0, &dz);
        }
        loss
    });
    Ok(FnProbe::new("text_decoder", p, checked, eval))
}

fn classifier_probe() -> Result<FnProbe> {
    let mut rng = rng_for(14, "classifier");
    let cfg = ClassifierConfig {
        input_width: 8,
        hidden: vec![8, 8],
    };
    let mut p = P::new();
    let z = p.insert("probe.z", uniform(&mut rng, &[8], 1.0))?;
    let head = Classifier::new(&mut p, "classifier", &cfg, &mut rng)?;
    scramble(&mut p, &mut rng, 0.5);
    let checked = p.ids().collect();
    let eval: EvalFn = Box::new(move |p, g| {
        let zv = p.vec(z).to_owned();
        let tr = head.forward(p, zv.view()).expect("valid probe input");
        let (loss, dlogits) = classification_loss(tr.logits.view(), 1).expect("valid label");
        if let Some(g) = g {
            let dz = head.backward(p, g, &tr, dlogits.view());
            g.vec_mut(z).scaled_add(1.0, &dz);
        }
        loss
    });
    Ok(FnProbe::new("classifier", p, checked, eval))
}

fn linear_probe() -> Result<FnProbe> {
    let mut rng = rng_for(15, "linear");
    let mut p = P::new();
    let w = p.insert("probe.w", uniform(&mut rng, &[5], 1.0))?;
    let x: Array1<f64> = Array1::linspace(-1.0, 1.0, 5);
    let eval: EvalFn = Box::new(move |p, g| {
        if let Some(g) = g {
            g.vec_mut(w).scaled_add(1.0, &x);
        }
        p.vec(w).dot(&x)
    });
    Ok(FnProbe::new("linear", p, vec![w], eval))
}

fn loss_probe(block: &str) -> Result<FnProbe> {
    let mut rng = rng_for(16, block);
    let mut p = P::new();
    match block {
        "image_loss" => {
            let pred = p.insert("probe.pred", uniform(&mut rng, &[3, 4, 4], 1.0))?;
            let target = uniform(&mut rng, &[3, 4, 4], 1.0)
                .into_dimensionality::<ndarray::Ix3>()
                .expect("3-d");
            let eval: EvalFn = Box::new(move |p, g| {
                let pv: Array3<f64> = p
                    .get(pred)
                    .view()
                    .into_dimensionality()
                    .expect("3-d")
                    .to_owned();
                let (l, d) = image_loss(pv.view(), target.view()).expect("equal shapes");
                if let Some(g) = g {
                    *g.get_mut(pred) += &d.into_dyn();
                }
                l
            });
            Ok(FnProbe::new(block, p, vec![pred], eval))
        }
        "text_loss" => {
            let pred = p.insert("probe.pred", uniform(&mut rng, &[5, 4], 1.0))?;
            let target = p.insert("probe.target", uniform(&mut rng, &[5, 4], 1.0))?;
            let mask = vec![true, false, true, true, false];
            let eval: EvalFn = Box::new(move |p, g| {
                let (l, dp, dt) =
                    text_loss_grads(p.mat(pred), p.mat(target), &mask).expect("valid mask");
                if let Some(g) = g {
                    g.mat_mut(pred).scaled_add(1.0, &dp);
                    g.mat_mut(target).scaled_add(1.0, &dt);
                }
                l
            });
            Ok(FnProbe::new(block, p, vec![pred, target], eval))
        }
        _ => {
            let logits = p.insert("probe.logits", uniform(&mut rng, &[3], 2.0))?;
            let eval: EvalFn = Box::new(move |p, g| {
                let (l, d) = classification_loss(p.vec(logits), 2).expect("valid label");
                if let Some(g) = g {
                    g.vec_mut(logits).scaled_add(1.0, &d);
                }
                l
            });
            Ok(FnProbe::new(block, p, vec![logits], eval))
        }
    }
}

/// Whole network on one pair: reconstruction plus classification loss,
/// with trainable embedding rows.
fn autoencoder_probe() -> Result<FnProbe> {
    let mut rng = rng_for(17, "autoencoder");
    let encoder = EncoderConfig {
        image_size: 10,
        ..tiny_encoder(Backbone::DeskCnn)
    };
    let width = encoder.embedding_width();
    let mut decoder = tiny_decoder(vec![2.0, 1.0, 1.0], 5, width);
    decoder.word_dim = encoder.word_dim;
    decoder.max_sentences = 3;
    decoder.max_words = 4;
    let cfg = ModelConfig {
        encoder,
        decoder,
        classifier: ClassifierConfig {
            input_width: width,
            hidden: vec![4],
        },
    };
    let table = uniform(&mut rng, &[6, 3], 1.0)
        .into_dimensionality::<ndarray::Ix2>()
        .expect("2-d");
    let (net, mut p) = AbsNet::build(&cfg, table, 5)?;
    scramble(&mut p, &mut rng, 1.0);
    let sample = Sample {
        pair_id: "probe".into(),
        pixels: uniform(&mut rng, &[3, 10, 10], 1.0)
            .into_dimensionality()
            .expect("3-d"),
        features: None,
        grid: tiny_grid(6),
        label: Some(crate::corpus::AbsLabel::EqualAbstractness),
    };
    let checked = p.ids().collect();
    let eval: EvalFn = Box::new(move |p, g| match g {
        Some(g) => {
            let r = net
                .reconstruction(p, Some(&mut *g), &sample, 0.7, 1.3, true)
                .expect("valid probe input");
            let (c, _) = net
                .classification(p, Some(g), &sample, true, true)
                .expect("valid probe input");
            r.combined + c
        }
        None => {
            let r = net
                .reconstruction(p, None, &sample, 0.7, 1.3, true)
                .expect("valid probe input");
            let (c, _) = net
                .classification(p, None, &sample, true, true)
                .expect("valid probe input");
            r.combined + c
        }
    });
    Ok(FnProbe::new("autoencoder", p, checked, eval))
}

pub fn block_probe(block: &str) -> Result<FnProbe> {
    match block {
        "linear" => linear_probe(),
        "image_cnn" | "word_level" | "sentence_level" => encoder_probe(block),
        "image_decoder" => image_decoder_probe(block, vec![1.0, 1.0, 1.0], 10),
        "image_decoder_upsampling" => image_decoder_probe(block, vec![2.5, 2.0, 1.0], 2),
        "text_decoder" => text_decoder_probe(),
        "classifier" => classifier_probe(),
        "image_loss" | "text_loss" | "classification_loss" => loss_probe(block),
        "autoencoder" => autoencoder_probe(),
        other => Err(Error::InvalidArgument(format!(
            "unknown block `{other}` (known: {})",
            BLOCKS.join(", ")
        ))),
    }
}

/// Checks one named block at the default step size.
pub fn check_block(block: &str) -> Result<GradCheckReport> {
    Ok(gradient_check(&block_probe(block)?, DEFAULT_EPS))
}
