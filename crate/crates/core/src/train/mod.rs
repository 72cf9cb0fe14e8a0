//! Autoencoder pretraining, the three classifier regimes, checkpoints and
//! the finite-difference gradient checker.
//!
//! In deterministic mode a batch is processed on the calling thread and
//! gradients accumulate in batch order, so a run is reproducible bit for bit
//! from its seed. Otherwise the batch is split into contiguous chunks that
//! run on the worker pool and are summed in chunk order.

mod checkpoint;
pub mod gradcheck;
mod optim;

use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, Manifest, ManifestEntry,
    CONFIG_FILE, HISTORY_FILE, MANIFEST_FILE, PARAMS_FILE,
};
pub use self::optim::{Adam, ADAM_EPS, BETA1, BETA2};

use crate::config::{Regime, TrainConfig};
use crate::error::{Error, Result};
use crate::model::{AbsNet, Sample};
use crate::nn::ParameterStore;
use crate::seed::rng_for;

/// One line of the metric log, averaged over a logging window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_cosine: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

/// Endless stream of minibatches; reshuffles at every epoch boundary.
#[derive(Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
    pub epoch: u64,
}

impl BatchSampler {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, "batches");
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            pos: 0,
            rng,
            epoch: 0,
        }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
                self.epoch += 1;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    image_mse: f64,
    text_cosine: f64,
    combined: f64,
    cls_loss: f64,
    correct: f64,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.image_mse += o.image_mse;
        self.text_cosine += o.text_cosine;
        self.combined += o.combined;
        self.cls_loss += o.cls_loss;
        self.correct += o.correct;
    }

    fn objective(&self, classify: bool) -> f64 {
        if classify {
            self.cls_loss
        } else {
            self.combined
        }
    }
}

/// Which parameter entries an update may touch.
pub fn trainable_mask(
    params: &ParameterStore<f32>,
    regime: Regime,
    unfreeze_embeddings: bool,
) -> Vec<bool> {
    params
        .entries()
        .iter()
        .map(|e| {
            let name = e.name.as_str();
            if name == crate::model::EMBEDDING_PARAM {
                return unfreeze_embeddings && regime != Regime::ClFreeze;
            }
            match regime {
                Regime::PretrainAe => !AbsNet::is_classifier_param(name),
                Regime::ClFreeze => AbsNet::is_classifier_param(name),
                Regime::ClScratch | Regime::ClTransfer => {
                    AbsNet::is_classifier_param(name) || AbsNet::is_encoder_param(name)
                }
            }
        })
        .collect()
}

struct Loop<'a> {
    net: &'a AbsNet,
    cfg: &'a TrainConfig,
    out: Option<&'a Path>,
    classify: bool,
}

impl Loop<'_> {
    fn run<F>(
        &self,
        params: &mut ParameterStore<f32>,
        n: usize,
        trainable: &[bool],
        per_sample: F,
    ) -> Result<Vec<MetricRecord>>
    where
        F: Fn(&ParameterStore<f32>, &mut ParameterStore<f32>, usize) -> Result<Stats> + Sync,
    {
        let cfg = self.cfg;
        let mut opt = Adam::new(params, cfg.learning_rate, cfg.clip_norm, cfg.weight_decay);
        let mut sampler = BatchSampler::new(n, cfg.seed);
        let mut history = Vec::new();
        let mut window = Stats::default();
        let mut window_n = 0usize;
        let mut window_start = 1u64;
        let mut grad_buf = params.zeros_like();
        for it in 1..=cfg.max_iterations {
            let batch = sampler.next_batch(cfg.batch_size);
            let (stats, grad) = if cfg.deterministic || rayon::current_num_threads() == 1 {
                grad_buf.zero();
                let mut stats = Stats::default();
                for &i in &batch {
                    stats.add(&per_sample(params, &mut grad_buf, i)?);
                }
                (stats, std::mem::take(&mut grad_buf))
            } else {
                let chunk = batch.len().div_ceil(rayon::current_num_threads());
                let parts: Vec<(Stats, ParameterStore<f32>)> = batch
                    .par_chunks(chunk)
                    .map(|idx| -> Result<_> {
                        let mut g = params.zeros_like();
                        let mut st = Stats::default();
                        for &i in idx {
                            st.add(&per_sample(params, &mut g, i)?);
                        }
                        Ok((st, g))
                    })
                    .collect::<Result<_>>()?;
                let mut parts = parts.into_iter();
                let (mut stats, mut grad) = parts.next().expect("non-empty batch");
                for (st, g) in parts {
                    stats.add(&st);
                    grad.add_assign(&g);
                }
                (stats, grad)
            };
            let inv = 1.0 / batch.len() as f64;
            let objective = stats.objective(self.classify) * inv;
            if !objective.is_finite() || !opt.grad_norm(params, &grad, trainable, inv).is_finite() {
                self.abort(params, &history, it)?;
                return Err(Error::NonFiniteLoss { iteration: it });
            }
            opt.step(params, &grad, trainable, inv);
            grad_buf = grad;
            window.add(&stats);
            window_n += batch.len();
            if it % cfg.log_interval.max(1) == 0 || it == cfg.max_iterations {
                let rec = self.record(it, &window, window_n);
                log::info!(
                    "[{}] iterations {window_start}-{it}: {}",
                    cfg.regime.tag(),
                    serde_json::to_string(&rec)?
                );
                history.push(rec);
                window = Stats::default();
                window_n = 0;
                window_start = it + 1;
            }
            if let Some(dir) = self.out {
                if cfg.checkpoint_interval > 0
                    && it % cfg.checkpoint_interval == 0
                    && it != cfg.max_iterations
                {
                    save_checkpoint(&self.checkpoint(params, &history, it), dir)?;
                }
            }
        }
        Ok(history)
    }

    fn record(&self, it: u64, s: &Stats, n: usize) -> MetricRecord {
        let d = n.max(1) as f64;
        if self.classify {
            MetricRecord {
                iteration: it,
                image_mse: None,
                text_cosine: None,
                combined: None,
                classifier_loss: Some(s.cls_loss / d),
                accuracy: Some(s.correct / d),
            }
        } else {
            MetricRecord {
                iteration: it,
                image_mse: Some(s.image_mse / d),
                text_cosine: Some(s.text_cosine / d),
                combined: Some(s.combined / d),
                classifier_loss: None,
                accuracy: None,
            }
        }
    }

    fn checkpoint(
        &self,
        params: &ParameterStore<f32>,
        history: &[MetricRecord],
        it: u64,
    ) -> Checkpoint<f32> {
        Checkpoint {
            params: params.clone(),
            meta: CheckpointMeta {
                model: self.net.cfg.clone(),
                train: Some(self.cfg.clone()),
                iteration: it,
            },
            history: history.to_vec(),
        }
    }

    /// Leaves a diagnostic checkpoint next to the output directory.
    fn abort(&self, params: &ParameterStore<f32>, history: &[MetricRecord], it: u64) -> Result<()> {
        if let Some(dir) = self.out {
            let diag = dir.join("diagnostic");
            save_checkpoint(&self.checkpoint(params, history, it), &diag)?;
            log::error!(
                "non-finite loss at iteration {it}; diagnostic checkpoint in {}",
                diag.display()
            );
        }
        Ok(())
    }
}

/// Minimises `w_img * image_mse + w_txt * text_cosine` over the data.
pub fn pretrain_autoencoder(
    net: &AbsNet,
    mut params: ParameterStore<f32>,
    data: &[Sample<f32>],
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<Checkpoint<f32>> {
    cfg.validate()?;
    if cfg.regime != Regime::PretrainAe {
        return Err(Error::InvalidArgument(format!(
            "pretraining needs regime pretrain_ae, got {}",
            cfg.regime.tag()
        )));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let trainable = trainable_mask(&params, cfg.regime, cfg.unfreeze_embeddings);
    let lp = Loop {
        net,
        cfg,
        out,
        classify: false,
    };
    let history = lp.run(&mut params, data.len(), &trainable, |p, g, i| {
        let l = net.reconstruction(
            p,
            Some(g),
            &data[i],
            cfg.w_img,
            cfg.w_txt,
            cfg.unfreeze_embeddings,
        )?;
        Ok(Stats {
            image_mse: l.image_mse,
            text_cosine: l.text_cosine,
            combined: l.combined,
            ..Stats::default()
        })
    })?;
    let ckpt = lp.checkpoint(&params, &history, cfg.max_iterations);
    if let Some(dir) = out {
        save_checkpoint(&ckpt, dir)?;
    }
    Ok(ckpt)
}

/// Trains the classification head under one of the three regimes.
///
/// `params` is a freshly initialised store for `net`. With an `init`
/// checkpoint every non-classifier entry is copied from it first, so the
/// head always starts from its own seeded initialisation.
pub fn train_classifier(
    net: &AbsNet,
    mut params: ParameterStore<f32>,
    data: &[Sample<f32>],
    cfg: &TrainConfig,
    init: Option<&Checkpoint<f32>>,
    out: Option<&Path>,
) -> Result<Checkpoint<f32>> {
    cfg.validate()?;
    if cfg.regime == Regime::PretrainAe {
        return Err(Error::InvalidArgument(
            "classifier training needs a cl_* regime".into(),
        ));
    }
    if cfg.regime.needs_init() && init.is_none() {
        return Err(Error::MissingInitCheckpoint(cfg.regime.tag().into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = data.iter().find(|s| s.label.is_none()) {
        return Err(Error::UnlabeledPair(s.pair_id.clone()));
    }
    if let Some(init) = init {
        init.check_layout(&params)?;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if !AbsNet::is_classifier_param(params.name(id)) {
                let src = init
                    .params
                    .by_name(params.name(id))
                    .expect("layout checked");
                params.get_mut(id).assign(src);
            }
        }
    }
    let trainable = trainable_mask(&params, cfg.regime, cfg.unfreeze_embeddings);
    let lp = Loop {
        net,
        cfg,
        out,
        classify: true,
    };
    let stats_of =
        |loss: f64, probs: crate::classifier::ClassProbabilities, s: &Sample<f32>| Stats {
            cls_loss: loss,
            correct: f64::from(u8::from(Some(probs.predict()) == s.label)),
            ..Stats::default()
        };
    let history = if cfg.regime == Regime::ClFreeze {
        // The encoder is fixed, so every embedding can be computed once.
        let embed = |s: &Sample<f32>| net.embed(&params, s);
        let zs: Vec<Array1<f32>> = if cfg.deterministic {
            data.iter().map(embed).collect::<Result<_>>()?
        } else {
            data.par_iter().map(embed).collect::<Result<_>>()?
        };
        let frozen = params.clone();
        let hist = lp.run(&mut params, data.len(), &trainable, |p, g, i| {
            let label = data[i].label.expect("checked above");
            let (loss, probs, _) = net.head_loss(p, Some(g), zs[i].view(), label)?;
            Ok(stats_of(loss, probs, &data[i]))
        })?;
        debug_assert!(params
            .entries()
            .iter()
            .zip(frozen.entries())
            .filter(|(e, _)| AbsNet::is_encoder_param(&e.name))
            .all(|(a, b)| a.value == b.value));
        hist
    } else {
        lp.run(&mut params, data.len(), &trainable, |p, g, i| {
            let (loss, probs) =
                net.classification(p, Some(g), &data[i], true, cfg.unfreeze_embeddings)?;
            Ok(stats_of(loss, probs, &data[i]))
        })?
    };
    let ckpt = lp.checkpoint(&params, &history, cfg.max_iterations);
    if let Some(dir) = out {
        save_checkpoint(&ckpt, dir)?;
    }
    Ok(ckpt)
}
