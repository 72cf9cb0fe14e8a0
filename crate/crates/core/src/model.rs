//! The complete network: shared embedding table, encoder, both decoders and
//! the classification head, laid out in one parameter store.

use ndarray::{s, Array1, Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::classifier::{probabilities, ClassProbabilities, Classifier};
use crate::config::{Backbone, ModelConfig};
use crate::corpus::{AbsLabel, ImageTextPair};
use crate::decoder::{ImageDecoder, TextDecoder};
use crate::encoder::{to_chw, Encoder, EncoderTrace, ImageInput};
use crate::error::{Error, Result};
use crate::losses::{classification_loss, image_loss, text_loss_grads};
use crate::nn::{ParamId, ParameterStore};
use crate::scalar::Scalar;
use crate::seed::rng_for;
use crate::vocab::{encode_tokens, TokenGrid, Vocabulary};

pub const EMBEDDING_PARAM: &str = "embedding.table";

/// Prefixes of the parameters that belong to the encoder side of the network
/// (the part frozen by the freeze regime).
pub const ENCODER_PREFIXES: [&str; 2] = [EMBEDDING_PARAM, "encoder."];

/// One training or evaluation example in network-ready form.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub pair_id: String,
    /// `[3, N, N]` pixels in `[-1, 1]`; also the reconstruction target.
    pub pixels: Array3<T>,
    /// Precomputed image features for the external backbone.
    pub features: Option<Array1<T>>,
    pub grid: TokenGrid,
    pub label: Option<AbsLabel>,
}

impl<T: Scalar> Sample<T> {
    pub fn from_pair(pair: &ImageTextPair, vocab: &Vocabulary, cfg: &ModelConfig) -> Self {
        Self {
            pair_id: pair.pair_id.clone(),
            pixels: to_chw(&pair.image.pixels),
            features: None,
            grid: encode_tokens(&pair.text, vocab, cfg.encoder.caps()),
            label: pair.label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReconLoss {
    pub image_mse: f64,
    pub text_cosine: f64,
    pub combined: f64,
}

#[derive(Debug, Clone)]
pub struct AbsNet {
    pub cfg: ModelConfig,
    pub embed: ParamId,
    pub encoder: Encoder,
    pub image_decoder: ImageDecoder,
    pub text_decoder: TextDecoder,
    pub classifier: Classifier,
}

impl AbsNet {
    /// Registers every parameter, in a fixed order, with weights drawn from
    /// seeds derived from `seed`. `table` becomes the embedding parameter.
    pub fn build<T: Scalar>(
        cfg: &ModelConfig,
        table: Array2<T>,
        seed: u64,
    ) -> Result<(Self, ParameterStore<T>)> {
        cfg.validate()?;
        if table.ncols() != cfg.encoder.word_dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.encoder.word_dim,
                found: table.ncols(),
            });
        }
        let mut p = ParameterStore::new();
        let embed = p.insert(EMBEDDING_PARAM, table.into_dyn())?;
        let encoder = Encoder::new(&mut p, &cfg.encoder, embed, &mut rng_for(seed, "encoder"))?;
        let image_decoder = ImageDecoder::new(
            &mut p,
            "decoder.image",
            &cfg.decoder,
            &mut rng_for(seed, "decoder.image"),
        )?;
        let text_decoder = TextDecoder::new(
            &mut p,
            "decoder.text",
            &cfg.decoder,
            &mut rng_for(seed, "decoder.text"),
        )?;
        let classifier = Classifier::new(
            &mut p,
            "classifier",
            &cfg.classifier,
            &mut rng_for(seed, "classifier"),
        )?;
        let net = Self {
            cfg: cfg.clone(),
            embed,
            encoder,
            image_decoder,
            text_decoder,
            classifier,
        };
        Ok((net, p))
    }

    pub fn is_encoder_param(name: &str) -> bool {
        ENCODER_PREFIXES.iter().any(|pre| name.starts_with(pre))
    }

    pub fn is_classifier_param(name: &str) -> bool {
        name.starts_with("classifier.")
    }

    pub fn encode<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        s: &Sample<T>,
    ) -> Result<EncoderTrace<T>> {
        self.encoder
            .forward(p, image_input(self.cfg.encoder.backbone, s)?, &s.grid)
    }

    /// Article embedding only.
    pub fn embed<T: Scalar>(&self, p: &ParameterStore<T>, s: &Sample<T>) -> Result<Array1<T>> {
        Ok(self.encode(p, s)?.embedding)
    }

    /// Reconstruction losses; when `g` is given, accumulates the gradient of
    /// `w_img * image_mse + w_txt * text_cosine`. Pairs without any real text
    /// token contribute no text term.
    pub fn reconstruction<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: Option<&mut ParameterStore<T>>,
        s: &Sample<T>,
        w_img: f64,
        w_txt: f64,
        train_embeddings: bool,
    ) -> Result<ReconLoss> {
        let enc = self.encode(p, s)?;
        let z = enc.embedding.view();
        let img = self.image_decoder.forward(p, z)?;
        let (mse, dimg) = image_loss(img.output.view(), s.pixels.view())?;
        let (rows, cols) = s.grid.extent();
        let txt = self.text_decoder.forward(p, z, rows, cols)?;
        let mut text = None;
        if rows > 0 {
            let e = self.cfg.decoder.word_dim;
            let n = rows * cols;
            let pred = txt
                .output
                .view()
                .into_shape_with_order((n, e))
                .expect("contiguous grid");
            let table = p.mat(self.embed);
            let ids = s.grid.ids.slice(s![..rows, ..cols]);
            let mut target = Array2::zeros((n, e));
            for (r, &id) in ids.iter().enumerate() {
                target.row_mut(r).assign(&table.row(id as usize));
            }
            let mask: Vec<bool> = s
                .grid
                .mask
                .slice(s![..rows, ..cols])
                .iter()
                .copied()
                .collect();
            text = Some(text_loss_grads(pred, target.view(), &mask)?);
        }
        let text_cosine = text.as_ref().map_or(T::zero(), |t| t.0);
        let loss = ReconLoss {
            image_mse: mse.to_f64_lossy(),
            text_cosine: text_cosine.to_f64_lossy(),
            combined: w_img * mse.to_f64_lossy() + w_txt * text_cosine.to_f64_lossy(),
        };
        if let Some(g) = g {
            let wi = T::lit(w_img);
            let wt = T::lit(w_txt);
            let mut dz = self
                .image_decoder
                .backward(p, g, z, &img, &dimg.mapv(|v| v * wi));
            if let Some((_, dpred, dtarget)) = text {
                let dgrid = dpred
                    .mapv(|v| v * wt)
                    .into_shape_with_order((rows, cols, self.cfg.decoder.word_dim))
                    .expect("grid reshape");
                dz += &self.text_decoder.backward(p, g, z, &txt, &dgrid);
                if train_embeddings {
                    let ids = s.grid.ids.slice(s![..rows, ..cols]);
                    let mut demb = g.mat_mut(self.embed);
                    for (r, &id) in ids.iter().enumerate() {
                        demb.row_mut(id as usize).scaled_add(wt, &dtarget.row(r));
                    }
                }
            }
            self.encoder
                .backward(p, g, &enc, dz.view(), train_embeddings);
        }
        Ok(loss)
    }

    /// Cross-entropy of the head on an already computed embedding.
    pub fn head_loss<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: Option<&mut ParameterStore<T>>,
        z: ArrayView1<'_, T>,
        label: AbsLabel,
    ) -> Result<(f64, ClassProbabilities, Option<Array1<T>>)> {
        let tr = self.classifier.forward(p, z)?;
        let (loss, dlogits) = classification_loss(tr.logits.view(), label.index())?;
        let probs = probabilities(tr.logits.view());
        let dz = g.map(|g| self.classifier.backward(p, g, &tr, dlogits.view()));
        Ok((loss.to_f64_lossy(), probs, dz))
    }

    /// Cross-entropy through the whole network. Encoder gradients are only
    /// accumulated when `train_encoder` is set.
    pub fn classification<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: Option<&mut ParameterStore<T>>,
        s: &Sample<T>,
        train_encoder: bool,
        train_embeddings: bool,
    ) -> Result<(f64, ClassProbabilities)> {
        let label = s
            .label
            .ok_or_else(|| Error::UnlabeledPair(s.pair_id.clone()))?;
        let enc = self.encode(p, s)?;
        match g {
            Some(g) => {
                let (loss, probs, dz) =
                    self.head_loss(p, Some(&mut *g), enc.embedding.view(), label)?;
                if train_encoder {
                    let dz = dz.expect("gradient requested");
                    self.encoder
                        .backward(p, g, &enc, dz.view(), train_embeddings);
                }
                Ok((loss, probs))
            }
            None => {
                let (loss, probs, _) = self.head_loss(p, None, enc.embedding.view(), label)?;
                Ok((loss, probs))
            }
        }
    }

    pub fn classify<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        s: &Sample<T>,
    ) -> Result<ClassProbabilities> {
        let z = self.embed(p, s)?;
        self.classifier.classify(p, z.view())
    }
}

pub fn image_input<T: Scalar>(backbone: Backbone, s: &Sample<T>) -> Result<ImageInput<'_, T>> {
    match backbone {
        Backbone::DeskCnn => Ok(ImageInput::Pixels(&s.pixels)),
        Backbone::ExternalFeatures => {
            s.features
                .as_ref()
                .map(ImageInput::Features)
                .ok_or_else(|| {
                    Error::Dataset(format!(
                        "pair {} has no precomputed image features",
                        s.pair_id
                    ))
                })
        }
    }
}
