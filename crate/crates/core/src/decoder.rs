//! Reconstruction decoders: an upsampling convolutional image decoder and a
//! hierarchical LSTM text decoder with layer normalization.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::config::DecoderConfig;
use crate::error::{Error, Result};
use crate::nn::{
    leaky_relu_backward, leaky_relu_inplace, upsample_nearest, upsample_nearest_backward, Conv2d,
    ConvTrace, LayerNorm, LayerNormTrace, Linear, Lstm, LstmTrace, ParameterStore,
};
use crate::scalar::Scalar;
use crate::vocab::Vocabulary;

fn check_width(z: usize, cfg: &DecoderConfig) -> Result<()> {
    if z != cfg.input_width {
        return Err(Error::WidthMismatch {
            expected: cfg.input_width,
            found: z,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ImageDecoder {
    pub cfg: DecoderConfig,
    pub fc: Linear,
    /// One conv per stage; the last one produces the 3 output channels.
    pub convs: Vec<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct ImageDecoderTrace<T> {
    stages: Vec<StageTrace<T>>,
    /// Reconstruction in `[3, N, N]` layout, values in `(-1, 1)`.
    pub output: Array3<T>,
}

#[derive(Debug, Clone)]
struct StageTrace<T> {
    in_hw: (usize, usize),
    conv: ConvTrace<T>,
    pre: Option<Array3<T>>,
}

impl ImageDecoder {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        cfg: &DecoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let side = cfg.seed_side;
        let fc = Linear::new(
            p,
            &format!("{name}.fc"),
            cfg.input_width,
            cfg.seed_channels * side * side,
            rng,
        )?;
        let mut convs = Vec::new();
        let mut cin = cfg.seed_channels;
        for (i, &c) in cfg.channels.iter().enumerate() {
            convs.push(Conv2d::new(p, &format!("{name}.conv{i}"), cin, c, 1, rng)?);
            cin = c;
        }
        Ok(Self {
            cfg: cfg.clone(),
            fc,
            convs,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        z: ArrayView1<'_, T>,
    ) -> Result<ImageDecoderTrace<T>> {
        check_width(z.len(), &self.cfg)?;
        let side = self.cfg.seed_side;
        let mut h = self
            .fc
            .forward(p, z)
            .into_shape_with_order((self.cfg.seed_channels, side, side))
            .expect("seed reshape");
        let sizes = self.cfg.stage_sizes();
        let last = self.convs.len() - 1;
        let mut stages = Vec::with_capacity(self.convs.len());
        for (i, conv) in self.convs.iter().enumerate() {
            let (_, ih, iw) = h.dim();
            // Stage i upsamples before its conv; the final conv runs at full size.
            if i < last {
                let n = sizes[i + 1];
                h = upsample_nearest(&h, n, n);
            }
            let (mut out, tr) = conv.forward(p, &h);
            let pre = if i < last {
                Some(leaky_relu_inplace(&mut out))
            } else {
                out.mapv_inplace(|v| v.tanh());
                None
            };
            stages.push(StageTrace {
                in_hw: (ih, iw),
                conv: tr,
                pre,
            });
            h = out;
        }
        Ok(ImageDecoderTrace { stages, output: h })
    }

    /// Accumulates parameter gradients; returns `dL/dz`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        z: ArrayView1<'_, T>,
        trace: &ImageDecoderTrace<T>,
        dout: &Array3<T>,
    ) -> Array1<T> {
        let mut d = dout.clone();
        d.zip_mut_with(&trace.output, |d, &y| *d *= T::one() - y * y);
        let last = self.convs.len() - 1;
        for i in (0..self.convs.len()).rev() {
            let st = &trace.stages[i];
            if let Some(pre) = &st.pre {
                leaky_relu_backward(&mut d, pre);
            }
            d = self.convs[i]
                .backward(p, g, &st.conv, &d, true)
                .expect("input grad requested");
            if i < last {
                d = upsample_nearest_backward(&d, st.in_hw.0, st.in_hw.1);
            }
        }
        let flat = d.into_shape_with_order(self.fc.out_dim).expect("flatten");
        self.fc.backward(p, g, z, flat.view())
    }
}

#[derive(Debug, Clone)]
pub struct TextDecoder {
    pub cfg: DecoderConfig,
    pub sent_init: Linear,
    pub sent_lstm: Lstm,
    pub sent_norm: LayerNorm,
    pub word_init: Linear,
    pub word_lstm: Lstm,
    pub word_norm: LayerNorm,
    pub out: Linear,
}

#[derive(Debug, Clone)]
pub struct TextDecoderTrace<T> {
    ctx: Array2<T>,
    sent: LstmTrace<T>,
    sent_ln: LayerNormTrace<T>,
    /// Layer-normalized sentence features, `[S, Hs]`.
    pub sentences: Array2<T>,
    wctx: Array2<T>,
    word: LstmTrace<T>,
    word_ln: Vec<LayerNormTrace<T>>,
    word_feat: Vec<Array2<T>>,
    /// Predicted word vectors, `[S, W, E]`.
    pub output: Array3<T>,
}

impl<T: Scalar> TextDecoderTrace<T> {
    /// Normalised (pre gain/bias) word-level hidden states at step `k`.
    pub fn word_xhat(&self, k: usize) -> ArrayView2<'_, T> {
        self.word_ln[k].xhat.view()
    }

    pub fn sentence_xhat(&self) -> ArrayView2<'_, T> {
        self.sent_ln.xhat.view()
    }
}

impl TextDecoder {
    pub fn new<T: Scalar, R: Rng>(
        p: &mut ParameterStore<T>,
        name: &str,
        cfg: &DecoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let hs = cfg.sentence_hidden;
        let hw = cfg.word_hidden;
        Ok(Self {
            cfg: cfg.clone(),
            sent_init: Linear::new(p, &format!("{name}.sent_init"), cfg.input_width, hs, rng)?,
            sent_lstm: Lstm::new(p, &format!("{name}.sent_lstm"), hs, hs, rng)?,
            sent_norm: LayerNorm::new(p, &format!("{name}.sent_norm"), hs)?,
            word_init: Linear::new(p, &format!("{name}.word_init"), hs, hw, rng)?,
            word_lstm: Lstm::new(p, &format!("{name}.word_lstm"), hw, hw, rng)?,
            word_norm: LayerNorm::new(p, &format!("{name}.word_norm"), hw)?,
            out: Linear::new(p, &format!("{name}.out"), hw, cfg.word_dim, rng)?,
        })
    }

    /// Generates the first `sentences × words` cells of the grid. Each LSTM
    /// is fed its (constant) initial context at every step; generation never
    /// sees the target tokens.
    pub fn forward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        z: ArrayView1<'_, T>,
        sentences: usize,
        words: usize,
    ) -> Result<TextDecoderTrace<T>> {
        check_width(z.len(), &self.cfg)?;
        if sentences > self.cfg.max_sentences || words > self.cfg.max_words {
            return Err(Error::ShapeMismatch(format!(
                "requested {sentences}×{words} exceeds {}×{}",
                self.cfg.max_sentences, self.cfg.max_words
            )));
        }
        let ctx = self.sent_init.forward(p, z).insert_axis(Axis(0));
        let sent = self.sent_lstm.unroll(p, ctx.view(), ctx.view(), sentences);
        let mut hs = Array2::zeros((sentences, self.cfg.sentence_hidden));
        for k in 0..sentences {
            hs.row_mut(k).assign(&sent.hs[k + 1].row(0));
        }
        let (sent_feat, sent_ln) = self.sent_norm.forward(p, hs.view());
        let wctx = self.word_init.forward_rows(p, sent_feat.view());
        let word = self.word_lstm.unroll(p, wctx.view(), wctx.view(), words);
        let mut output = Array3::zeros((sentences, words, self.cfg.word_dim));
        let mut word_ln = Vec::with_capacity(words);
        let mut word_feat = Vec::with_capacity(words);
        for k in 0..words {
            let (feat, tr) = self.word_norm.forward(p, word.hs[k + 1].view());
            output
                .slice_mut(s![.., k, ..])
                .assign(&self.out.forward_rows(p, feat.view()));
            word_ln.push(tr);
            word_feat.push(feat);
        }
        Ok(TextDecoderTrace {
            ctx,
            sent,
            sent_ln,
            sentences: sent_feat,
            wctx,
            word,
            word_ln,
            word_feat,
            output,
        })
    }

    /// `dout` matches `trace.output`. Returns `dL/dz`.
    pub fn backward<T: Scalar>(
        &self,
        p: &ParameterStore<T>,
        g: &mut ParameterStore<T>,
        z: ArrayView1<'_, T>,
        trace: &TextDecoderTrace<T>,
        dout: &Array3<T>,
    ) -> Array1<T> {
        let (n_sent, n_words, _) = trace.output.dim();
        if n_sent == 0 {
            return Array1::zeros(z.len());
        }
        let mut dhs = Vec::with_capacity(n_words);
        for k in 0..n_words {
            let dfeat =
                self.out
                    .backward_rows(p, g, trace.word_feat[k].view(), dout.slice(s![.., k, ..]));
            dhs.push(
                self.word_norm
                    .backward(p, g, &trace.word_ln[k], dfeat.view()),
            );
        }
        let (dx, dh0) = self
            .word_lstm
            .backward(p, g, trace.wctx.view(), &trace.word, &dhs);
        let dwctx = dx + &dh0;
        let dsent_feat = self
            .word_init
            .backward_rows(p, g, trace.sentences.view(), dwctx.view());
        let dh = self
            .sent_norm
            .backward(p, g, &trace.sent_ln, dsent_feat.view());
        let sdhs: Vec<Array2<T>> = dh
            .axis_iter(Axis(0))
            .map(|r| r.to_owned().insert_axis(Axis(0)))
            .collect();
        let (dx, dh0) = self
            .sent_lstm
            .backward(p, g, trace.ctx.view(), &trace.sent, &sdhs);
        let dctx = (dx + &dh0).index_axis_move(Axis(0), 0);
        self.sent_init.backward(p, g, z, dctx.view())
    }
}

/// Full-size image reconstruction as `H × W × 3`.
pub fn decode_image<T: Scalar>(
    dec: &ImageDecoder,
    p: &ParameterStore<T>,
    z: ArrayView1<'_, T>,
) -> Result<Array3<T>> {
    let tr = dec.forward(p, z)?;
    Ok(tr
        .output
        .permuted_axes([1, 2, 0])
        .as_standard_layout()
        .to_owned())
}

/// Full `max_sentences × max_words × E` grid of predicted word vectors.
pub fn decode_text<T: Scalar>(
    dec: &TextDecoder,
    p: &ParameterStore<T>,
    z: ArrayView1<'_, T>,
) -> Result<Array3<T>> {
    let tr = dec.forward(p, z, dec.cfg.max_sentences, dec.cfg.max_words)?;
    Ok(tr.output)
}

/// Vocabulary token whose embedding row has the highest cosine similarity
/// with `v`; ties go to the lexicographically smallest token. Only real
/// vocabulary tokens are candidates, never `<unk>` or `<pad>`. Zero-norm
/// vectors (query or row) score 0.
pub fn nearest_token<'a, T: Scalar>(
    v: ArrayView1<'_, T>,
    table: ArrayView2<'_, T>,
    vocab: &'a Vocabulary,
) -> Option<&'a str> {
    let nv = v.dot(&v).sqrt();
    let mut best: Option<(T, &str)> = None;
    for id in 0..vocab.len() {
        let row = table.row(id);
        let nr = row.dot(&row).sqrt();
        let cos = if nv > T::zero() && nr > T::zero() {
            row.dot(&v) / (nv * nr)
        } else {
            T::zero()
        };
        let tok = vocab.token(id as u32);
        best = match best {
            Some((c, t)) if c > cos || (c == cos && t <= tok) => Some((c, t)),
            _ => Some((cos, tok)),
        };
    }
    best.map(|(_, t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn tiny(image: usize, seed: usize, up: Vec<f64>) -> DecoderConfig {
        DecoderConfig {
            input_width: 6,
            image_size: image,
            seed_side: seed,
            seed_channels: 4,
            channels: vec![4, 3, 2, 3],
            upsample: up,
            sentence_hidden: 5,
            word_hidden: 4,
            word_dim: 3,
            max_sentences: 3,
            max_words: 4,
        }
    }

    #[test]
    fn schedule_reaches_image_size() {
        let mut p = ParameterStore::<f32>::new();
        let cfg = tiny(60, 6, vec![2.5, 2.0, 2.0]);
        let dec = ImageDecoder::new(&mut p, "d", &cfg, &mut rng_for(1, "t")).unwrap();
        let z = Array1::from_elem(6, 0.3f32);
        let out = decode_image(&dec, &p, z.view()).unwrap();
        assert_eq!(out.dim(), (60, 60, 3));
        assert!(out.iter().all(|v| v.abs() < 1.0));
        assert_eq!(cfg.stage_sizes(), vec![6, 15, 30, 60]);
    }

    #[test]
    fn zero_parameters_give_zero_image() {
        let mut p = ParameterStore::<f64>::new();
        let cfg = tiny(10, 10, vec![1.0, 1.0, 1.0]);
        let dec = ImageDecoder::new(&mut p, "d", &cfg, &mut rng_for(1, "t")).unwrap();
        for id in p.ids().collect::<Vec<_>>() {
            p.fill(id, 0.0);
        }
        let out = decode_image(&dec, &p, Array1::from_elem(6, 1.0).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_width_is_rejected() {
        let mut p = ParameterStore::<f64>::new();
        let cfg = tiny(10, 10, vec![1.0, 1.0, 1.0]);
        let dec = ImageDecoder::new(&mut p, "d", &cfg, &mut rng_for(1, "t")).unwrap();
        let txt = TextDecoder::new(&mut p, "t", &cfg, &mut rng_for(2, "t")).unwrap();
        let z = Array1::zeros(5);
        assert!(matches!(
            dec.forward(&p, z.view()),
            Err(Error::WidthMismatch { .. })
        ));
        assert!(matches!(
            decode_text(&txt, &p, z.view()),
            Err(Error::WidthMismatch { .. })
        ));
    }

    #[test]
    fn text_grid_shape_normalisation_and_purity() {
        let mut p = ParameterStore::<f64>::new();
        let cfg = tiny(10, 10, vec![1.0, 1.0, 1.0]);
        let txt = TextDecoder::new(&mut p, "t", &cfg, &mut rng_for(3, "t")).unwrap();
        let z = Array1::linspace(-1.0, 1.0, 6);
        let tr = txt.forward(&p, z.view(), 3, 4).unwrap();
        assert_eq!(tr.output.dim(), (3, 4, 3));
        for k in 0..4 {
            for row in tr.word_xhat(k).rows() {
                let n = row.len() as f64;
                let mean = row.sum() / n;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
            }
        }
        let again = decode_text(&txt, &p, z.view()).unwrap();
        assert_eq!(again, tr.output);
        // Prefix generation agrees with the full unroll.
        let part = txt.forward(&p, z.view(), 2, 3).unwrap();
        assert_eq!(part.output, tr.output.slice(s![..2, ..3, ..]));
    }

    #[test]
    fn nearest_token_rules() {
        let text = crate::corpus::TokenizedText::from_sentences(&[&[
            "cat", "cat", "cat", "dog", "dog", "ant",
        ]]);
        let vocab = crate::vocab::build_vocab([&text], 10).unwrap();
        let table = ndarray::array![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 0.0], [0.0, 0.0]];
        assert_eq!(
            nearest_token(ndarray::array![1.0, 0.0].view(), table.view(), &vocab),
            Some("cat")
        );
        assert_eq!(
            nearest_token(ndarray::array![0.0, 0.0].view(), table.view(), &vocab),
            Some("ant")
        );
        assert_eq!(
            nearest_token(ndarray::array![0.1, 0.9].view(), table.view(), &vocab),
            Some("dog")
        );
    }
}
