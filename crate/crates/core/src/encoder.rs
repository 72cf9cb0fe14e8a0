//! Image-text encoder. A strided CNN gives the image feature, which then
//! conditions a hierarchical bidirectional GRU over the text; the two
//! features are concatenated into the article embedding.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};
use rand::Rng;

use crate::config::{Backbone, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::{
    leaky_relu_backward, leaky_relu_inplace, Attention, AttentionTrace, BiGru, BiGruTrace, Conv2d,
    ConvTrace, Linear, ParamId, ParameterStore,
};
use crate::scalar::Scalar;
use crate::vocab::TokenGrid;

/// Image side of the encoder input: raw pixels (`[3, H, W]`) for the
/// desk CNN, or a precomputed feature vector for the external backbone.
#[derive(Debug, Clone, Copy)]
pub enum ImageInput<'a, T> {
    Pixels(&'a Array3<T>),
    Features(&'a Array1<T>),
}

/// Five (by default) stride-2 3×3 conv blocks, global average pooling and
/// an affine map to `d_img`.
#[derive(Debug, Clone)]
pub struct ImageCnn {
    pub convs: Vec<Conv2d>,
    pub proj: Linear,
}

#[derive(Debug, Clone)]
pub struct ImageCnnTrace<T> {
    convs: Vec<ConvTrace<T>>,
    pre: Vec<Array3<T>>,
    pooled: Array1<T>,
    /// Spatial side lengths after each block.
    pub sizes: Vec<(usize, usize)>,
}

impl ImageCnn {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        channels: &[usize],
        d_img: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut convs = Vec::with_capacity(channels.len());
        let mut cin = 3;
        for (i, &c) in channels.iter().enumerate() {
            convs.push(Conv2d::new(p, &format!("{name}.conv{i}"), cin, c, 2, rng)?);
            cin = c;
        }
        let proj = Linear::new(p, &format!("{name}.proj"), cin, d_img, rng)?;
        Ok(Self { convs, proj })
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        x: &Array3<T>,
    ) -> (Array1<T>, ImageCnnTrace<T>) {
        let mut traces = Vec::with_capacity(self.convs.len());
        let mut pre = Vec::with_capacity(self.convs.len());
        let mut sizes = Vec::with_capacity(self.convs.len());
        let mut h = x.clone();
        for conv in &self.convs {
            let (mut out, tr) = conv.forward(p, &h);
            pre.push(leaky_relu_inplace(&mut out));
            traces.push(tr);
            let (_, hh, ww) = out.dim();
            sizes.push((hh, ww));
            h = out;
        }
        let (_, hh, ww) = h.dim();
        let area = T::lit((hh * ww) as f64);
        let pooled = h.sum_axis(Axis(2)).sum_axis(Axis(1)).mapv(|v| v / area);
        let feat = self.proj.forward(p, pooled.view());
        (
            feat,
            ImageCnnTrace {
                convs: traces,
                pre,
                pooled,
                sizes,
            },
        )
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        trace: &ImageCnnTrace<T>,
        dfeat: ArrayView1<'_, T>,
    ) {
        let dpooled = self.proj.backward(p, g, trace.pooled.view(), dfeat);
        let last = trace.pre.last().expect("at least one conv block");
        let (c, hh, ww) = last.dim();
        let area = T::lit((hh * ww) as f64);
        let mut d = Array3::from_shape_fn((c, hh, ww), |(ch, _, _)| dpooled[ch] / area);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            leaky_relu_backward(&mut d, &trace.pre[i]);
            match conv.backward(p, g, &trace.convs[i], &d, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

/// Hierarchical attention text encoder. Both attention levels score states
/// against a query that is an affine projection of the image feature.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub embed: ParamId,
    pub word_gru: BiGru,
    pub word_att: Attention,
    pub word_query: Linear,
    pub sent_gru: BiGru,
    pub sent_att: Attention,
    pub sent_query: Linear,
    pub d_txt: usize,
}

#[derive(Debug, Clone)]
pub struct SentenceTrace<T> {
    /// Row of the sentence in the token grid.
    pub index: usize,
    tokens: Vec<u32>,
    x: Array2<T>,
    gru: BiGruTrace<T>,
    pub attention: AttentionTrace<T>,
    pub vector: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct TextTrace<T> {
    q_word: Array1<T>,
    q_sent: Array1<T>,
    pub sentences: Vec<SentenceTrace<T>>,
    sent_in: Array2<T>,
    sent_gru: Option<BiGruTrace<T>>,
    pub sentence_attention: Option<AttentionTrace<T>>,
    pub feature: Array1<T>,
}

impl TextEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        embed: ParamId,
        word_dim: usize,
        word_hidden: usize,
        d_txt: usize,
        d_img: usize,
        att: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let word_gru = BiGru::new(p, &format!("{name}.word_gru"), word_dim, word_hidden, rng)?;
        let word_att = Attention::new(p, &format!("{name}.word_att"), 2 * word_hidden, att, rng)?;
        let word_query = Linear::new(p, &format!("{name}.word_query"), d_img, att, rng)?;
        let sent_gru = BiGru::new(
            p,
            &format!("{name}.sent_gru"),
            2 * word_hidden,
            d_txt / 2,
            rng,
        )?;
        let sent_att = Attention::new(p, &format!("{name}.sent_att"), d_txt, att, rng)?;
        let sent_query = Linear::new(p, &format!("{name}.sent_query"), d_img, att, rng)?;
        Ok(Self {
            embed,
            word_gru,
            word_att,
            word_query,
            sent_gru,
            sent_att,
            sent_query,
            d_txt,
        })
    }

    /// Only real (mask-true) cells are read; padding content is never touched.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        grid: &TokenGrid,
        image_feat: ArrayView1<'_, T>,
    ) -> TextTrace<T> {
        let emb = p.mat(self.embed);
        let q_word = self.word_query.forward(p, image_feat);
        let q_sent = self.sent_query.forward(p, image_feat);
        let wdim = self.word_gru.output_dim();
        let mut sentences = Vec::new();
        for s in 0..grid.dims().0 {
            let positions = grid.real_positions(s);
            if positions.is_empty() {
                continue;
            }
            let tokens: Vec<u32> = positions.iter().map(|&j| grid.ids[[s, j]]).collect();
            let x = Array2::from_shape_fn((tokens.len(), emb.ncols()), |(t, e)| {
                emb[[tokens[t] as usize, e]]
            });
            let gru = self.word_gru.forward(p, x.view());
            let (vector, attention) = self.word_att.forward(p, gru.out.view(), q_word.view());
            sentences.push(SentenceTrace {
                index: s,
                tokens,
                x,
                gru,
                attention,
                vector,
            });
        }
        let mut sent_in = Array2::zeros((sentences.len(), wdim));
        for (i, st) in sentences.iter().enumerate() {
            sent_in.row_mut(i).assign(&st.vector);
        }
        let (sent_gru, sentence_attention, feature) = if sentences.is_empty() {
            (None, None, Array1::zeros(self.d_txt))
        } else {
            let gru = self.sent_gru.forward(p, sent_in.view());
            let (feat, att) = self.sent_att.forward(p, gru.out.view(), q_sent.view());
            (Some(gru), Some(att), feat)
        };
        TextTrace {
            q_word,
            q_sent,
            sentences,
            sent_in,
            sent_gru,
            sentence_attention,
            feature,
        }
    }

    /// Returns the gradient w.r.t. the image feature (through both queries).
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        image_feat: ArrayView1<'_, T>,
        trace: &TextTrace<T>,
        dfeat: ArrayView1<'_, T>,
        train_embeddings: bool,
    ) -> Array1<T> {
        let mut dimg = Array1::zeros(image_feat.len());
        let (Some(sgru), Some(satt)) = (&trace.sent_gru, &trace.sentence_attention) else {
            return dimg;
        };
        let (dg, dq_sent) =
            self.sent_att
                .backward(p, g, sgru.out.view(), trace.q_sent.view(), satt, dfeat);
        let dsent_in = self
            .sent_gru
            .backward(p, g, trace.sent_in.view(), sgru, dg.view());
        let mut dq_word = Array1::zeros(trace.q_word.len());
        for (i, st) in trace.sentences.iter().enumerate() {
            let (dh, dq) = self.word_att.backward(
                p,
                g,
                st.gru.out.view(),
                trace.q_word.view(),
                &st.attention,
                dsent_in.row(i),
            );
            dq_word += &dq;
            let dx = self
                .word_gru
                .backward(p, g, st.x.view(), &st.gru, dh.view());
            if train_embeddings {
                let mut demb = g.mat_mut(self.embed);
                for (t, &id) in st.tokens.iter().enumerate() {
                    let mut row = demb.row_mut(id as usize);
                    row += &dx.row(t);
                }
            }
        }
        dimg += &self.sent_query.backward(p, g, image_feat, dq_sent.view());
        dimg += &self.word_query.backward(p, g, image_feat, dq_word.view());
        dimg
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub cnn: Option<ImageCnn>,
    pub text: TextEncoder,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    pub image: Option<ImageCnnTrace<T>>,
    pub image_feature: Array1<T>,
    pub text: TextTrace<T>,
    pub embedding: Array1<T>,
}

impl Encoder {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        cfg: &EncoderConfig,
        embed: ParamId,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let emb_dim = p.get(embed).shape()[1];
        if emb_dim != cfg.word_dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.word_dim,
                found: emb_dim,
            });
        }
        let cnn = match cfg.backbone {
            Backbone::DeskCnn => Some(ImageCnn::new(
                p,
                "encoder.cnn",
                &cfg.cnn_channels,
                cfg.d_img,
                rng,
            )?),
            Backbone::ExternalFeatures => None,
        };
        let text = TextEncoder::new(
            p,
            "encoder",
            embed,
            cfg.word_dim,
            cfg.word_hidden,
            cfg.d_txt,
            cfg.d_img,
            cfg.attention_dim,
            rng,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            cnn,
            text,
        })
    }

    fn check_grid(&self, grid: &TokenGrid) -> Result<()> {
        let want = (self.cfg.max_sentences, self.cfg.max_words);
        if grid.dims() != want {
            return Err(Error::ShapeMismatch(format!(
                "token grid {:?}, expected {want:?}",
                grid.dims()
            )));
        }
        Ok(())
    }

    /// Image feature vector (`d_img`).
    pub fn encode_image<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        image: ImageInput<'_, T>,
    ) -> Result<(Array1<T>, Option<ImageCnnTrace<T>>)> {
        match (image, &self.cnn) {
            (ImageInput::Pixels(x), Some(cnn)) => {
                let (c, h, w) = x.dim();
                let n = self.cfg.image_size;
                if (c, h, w) != (3, n, n) {
                    return Err(Error::ShapeMismatch(format!(
                        "image {:?}, expected {:?}",
                        (c, h, w),
                        (3, n, n)
                    )));
                }
                let (f, tr) = cnn.forward(p, x);
                Ok((f, Some(tr)))
            }
            (ImageInput::Features(f), None) => {
                if f.len() != self.cfg.d_img {
                    return Err(Error::FeatureDimMismatch {
                        expected: self.cfg.d_img,
                        found: f.len(),
                    });
                }
                Ok((f.clone(), None))
            }
            (ImageInput::Pixels(_), None) => Err(Error::InvalidArgument(
                "external_features backbone expects precomputed features".into(),
            )),
            (ImageInput::Features(_), Some(_)) => Err(Error::InvalidArgument(
                "desk_cnn backbone expects pixels".into(),
            )),
        }
    }

    /// Text feature vector (`d_txt`) conditioned on `image_feat`.
    pub fn encode_text<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        grid: &TokenGrid,
        image_feat: ArrayView1<'_, T>,
    ) -> Result<TextTrace<T>> {
        self.check_grid(grid)?;
        if image_feat.len() != self.cfg.d_img {
            return Err(Error::WidthMismatch {
                expected: self.cfg.d_img,
                found: image_feat.len(),
            });
        }
        Ok(self.text.forward(p, grid, image_feat))
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        image: ImageInput<'_, T>,
        grid: &TokenGrid,
    ) -> Result<EncoderTrace<T>> {
        self.check_grid(grid)?;
        let (image_feature, image_trace) = self.encode_image(p, image)?;
        let text = self.encode_text(p, grid, image_feature.view())?;
        let embedding = fuse(image_feature.view(), text.feature.view(), &self.cfg)?;
        Ok(EncoderTrace {
            image: image_trace,
            image_feature,
            text,
            embedding,
        })
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        trace: &EncoderTrace<T>,
        dz: ArrayView1<'_, T>,
        train_embeddings: bool,
    ) {
        let d_img = self.cfg.d_img;
        let mut dimg = dz.slice(s![..d_img]).to_owned();
        dimg += &self.text.backward(
            p,
            g,
            trace.image_feature.view(),
            &trace.text,
            dz.slice(s![d_img..]),
            train_embeddings,
        );
        if let (Some(cnn), Some(tr)) = (&self.cnn, &trace.image) {
            cnn.backward(p, g, tr, dimg.view());
        }
    }
}

/// Concatenation, image part first.
pub fn fuse<T: Scalar>(
    image_feat: ArrayView1<'_, T>,
    text_feat: ArrayView1<'_, T>,
    cfg: &EncoderConfig,
) -> Result<Array1<T>> {
    if image_feat.len() != cfg.d_img {
        return Err(Error::WidthMismatch {
            expected: cfg.d_img,
            found: image_feat.len(),
        });
    }
    if text_feat.len() != cfg.d_txt {
        return Err(Error::WidthMismatch {
            expected: cfg.d_txt,
            found: text_feat.len(),
        });
    }
    Ok(ndarray::concatenate(Axis(0), &[image_feat, text_feat]).expect("1-d concat"))
}

/// Converts an `H × W × 3` image to the `[3, H, W]` layout used by the CNN.
pub fn to_chw<T: Scalar>(pixels: &ndarray::Array3<f32>) -> Array3<T> {
    let (h, w, _) = pixels.dim();
    Array3::from_shape_fn((3, h, w), |(c, y, x)| T::lit(f64::from(pixels[[y, x, c]])))
}
