//! Glue shared by the command-line tool and the end-to-end tests: turning
//! stored pairs into network samples and building a freshly seeded model.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::config::{Backbone, ModelConfig, RunConfig};
use crate::corpus::ImageTextPair;
use crate::error::{Error, Result};
use crate::eval::{evaluate, metrics, write_report, MetricsReport};
use crate::model::{AbsNet, Sample, EMBEDDING_PARAM};
use crate::nn::ParameterStore;
use crate::seed::derive_seed;
use crate::train::Checkpoint;
use crate::vocab::{init_random_embeddings, load_embeddings, Vocabulary};

/// Precomputed image features keyed by pair id.
pub type FeatureMap = HashMap<String, Array1<f32>>;

/// Reads a feature file: one `pair_id v1 ... vd` line per pair.
pub fn load_features(path: &Path, width: usize) -> Result<FeatureMap> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (n, line) in body.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let values: Vec<f32> = fields
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedVectorFile {
                line: n + 1,
                reason: format!("{e}"),
            })?;
        if values.len() != width {
            return Err(Error::FeatureDimMismatch {
                expected: width,
                found: values.len(),
            });
        }
        out.insert(id.to_owned(), Array1::from(values));
    }
    Ok(out)
}

pub fn make_samples<'a>(
    pairs: impl IntoIterator<Item = &'a ImageTextPair>,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    features: Option<&FeatureMap>,
) -> Result<Vec<Sample<f32>>> {
    pairs
        .into_iter()
        .map(|pair| {
            let mut s = Sample::from_pair(pair, vocab, cfg);
            if cfg.encoder.backbone == Backbone::ExternalFeatures {
                let f = features.and_then(|m| m.get(&pair.pair_id)).ok_or_else(|| {
                    Error::Dataset(format!("no image features for pair {}", pair.pair_id))
                })?;
                s.features = Some(f.clone());
            }
            let size = cfg.encoder.image_size;
            if s.pixels.dim() != (3, size, size) {
                return Err(Error::ShapeMismatch(format!(
                    "pair {} has a {}x{} image, the model expects {size}x{size}",
                    pair.pair_id,
                    s.pixels.dim().1,
                    s.pixels.dim().2
                )));
            }
            Ok(s)
        })
        .collect()
}

/// Network and freshly initialised parameters; the embedding table comes
/// from the configured vector file or, failing that, a seeded random draw.
pub fn initial_model(cfg: &RunConfig, vocab: &Vocabulary) -> Result<(AbsNet, ParameterStore<f32>)> {
    cfg.validate()?;
    let table_seed = derive_seed(cfg.seed, "embeddings");
    let table = match &cfg.embeddings_path {
        Some(path) => load_embeddings(path, vocab, cfg.word_dim, table_seed)?,
        None => init_random_embeddings(vocab, cfg.word_dim, table_seed),
    };
    AbsNet::build(&cfg.model(), table.matrix, cfg.seed)
}

/// Rebuilds the network described by a checkpoint and hands back its
/// parameters. The layout must match what the stored config builds.
pub fn restore_model(ckpt: Checkpoint<f32>) -> Result<(AbsNet, ParameterStore<f32>)> {
    let table = ckpt
        .params
        .by_name(EMBEDDING_PARAM)
        .ok_or_else(|| Error::CorruptCheckpoint(format!("missing `{EMBEDDING_PARAM}`")))?;
    let shape = (table.shape()[0], *table.shape().get(1).unwrap_or(&0));
    let (net, fresh) = AbsNet::build(&ckpt.meta.model, Array2::zeros(shape), 0)?;
    ckpt.check_layout(&fresh)?;
    Ok((net, ckpt.params))
}

/// Evaluates on `test`, tags the report with `regime` and, given a
/// directory, writes the report files there.
pub fn evaluate_regime(
    net: &AbsNet,
    params: &ParameterStore<f32>,
    test: &[Sample<f32>],
    regime: &str,
    dir: Option<&Path>,
) -> Result<MetricsReport> {
    let ev = evaluate(net, params, test)?;
    let report = metrics(&ev.matrix)?.with_regime(regime);
    if let Some(dir) = dir {
        write_report(dir, &report, &ev.predictions)?;
    }
    Ok(report)
}

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const VOCAB_SUMMARY_FILE: &str = "vocab.json";

/// Writes `vocab.tsv` and its summary into `dir` (a dataset or checkpoint).
pub fn save_vocab(dir: &Path, vocab: &Vocabulary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tsv = dir.join(VOCAB_FILE);
    fs::write(&tsv, vocab.to_tsv()).map_err(|e| Error::io(tsv, e))?;
    let json = dir.join(VOCAB_SUMMARY_FILE);
    fs::write(
        &json,
        serde_json::to_string_pretty(&vocab.summary())? + "\n",
    )
    .map_err(|e| Error::io(json, e))
}

pub fn load_vocab(dir: &Path) -> Result<Vocabulary> {
    let tsv = dir.join(VOCAB_FILE);
    if !tsv.is_file() {
        return Err(Error::Dataset(format!(
            "{} has no {VOCAB_FILE}; build one with the `vocab` command",
            dir.display()
        )));
    }
    let json = dir.join(VOCAB_SUMMARY_FILE);
    let summary = serde_json::from_slice(&fs::read(&json).map_err(|e| Error::io(&json, e))?)?;
    let body = fs::read_to_string(&tsv).map_err(|e| Error::io(&tsv, e))?;
    Vocabulary::from_tsv(&body, &summary)
}

/// External image features named by the config, if the backbone needs them.
pub fn configured_features(cfg: &RunConfig) -> Result<Option<FeatureMap>> {
    if cfg.backbone != Backbone::ExternalFeatures {
        return Ok(None);
    }
    let path = cfg.features_path.as_ref().ok_or_else(|| {
        Error::InvalidArgument("backbone external_features needs features_path".into())
    })?;
    load_features(path, cfg.d_img).map(Some)
}
