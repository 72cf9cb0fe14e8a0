//! Run configuration with per-profile defaults and a flat key-value file
//! loader.
//!
//! The config file overrides profile defaults; command-line overrides win
//! over both.
//! Config files are TOML with flat top-level keys only, e.g.
//!
//! ```toml
//! d_img = 256
//! d_txt = 256
//! embedding_width = 512
//! learning_rate = 1e-3
//! decoder_channels = [32, 16, 8, 3]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TextCaps;
use crate::error::{Error, Result};
use crate::nn::upsample_size;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    DeskCnn,
    ExternalFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub backbone: Backbone,
    pub cnn_channels: Vec<usize>,
    pub d_img: usize,
    pub d_txt: usize,
    pub word_hidden: usize,
    pub attention_dim: usize,
    pub word_dim: usize,
    pub max_sentences: usize,
    pub max_words: usize,
}

impl EncoderConfig {
    pub fn embedding_width(&self) -> usize {
        self.d_img + self.d_txt
    }

    /// Per-direction hidden size of the sentence-level GRU.
    pub fn sentence_hidden(&self) -> usize {
        self.d_txt / 2
    }

    pub fn caps(&self) -> TextCaps {
        TextCaps {
            max_sentences: self.max_sentences,
            max_tokens: self.max_words,
        }
    }

    /// Spatial side lengths after each strided CNN block.
    pub fn cnn_sizes(&self) -> Vec<usize> {
        let mut n = self.image_size;
        self.cnn_channels
            .iter()
            .map(|_| {
                n = n.div_ceil(2);
                n
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConstraintViolation(m));
        if self.d_img == 0 || self.d_txt == 0 {
            return bad("d_img and d_txt must be positive".into());
        }
        if !self.d_txt.is_multiple_of(2) {
            return bad(format!(
                "d_txt ({}) must be even for the bidirectional encoder",
                self.d_txt
            ));
        }
        if self.word_hidden == 0 || self.attention_dim == 0 || self.word_dim == 0 {
            return bad("word_hidden, attention_dim and word_dim must be positive".into());
        }
        if self.max_sentences == 0 || self.max_words == 0 {
            return bad("max_sentences and max_words must be positive".into());
        }
        if self.backbone == Backbone::DeskCnn
            && (self.cnn_channels.is_empty() || self.cnn_channels.contains(&0))
        {
            return bad("cnn_channels must be a non-empty list of positive widths".into());
        }
        if self.image_size == 0 {
            return bad("image_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub input_width: usize,
    pub image_size: usize,
    pub seed_side: usize,
    pub seed_channels: usize,
    pub channels: Vec<usize>,
    pub upsample: Vec<f64>,
    pub sentence_hidden: usize,
    pub word_hidden: usize,
    pub word_dim: usize,
    pub max_sentences: usize,
    pub max_words: usize,
}

impl DecoderConfig {
    /// Side lengths: the seed, then after each upsampling stage.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut n = self.seed_side;
        let mut v = vec![n];
        for &f in &self.upsample {
            n = upsample_size(n, f);
            v.push(n);
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConstraintViolation(m));
        if self.channels.len() != self.upsample.len() + 1 {
            return bad(format!(
                "decoder_channels needs one more entry than upsample ({} vs {})",
                self.channels.len(),
                self.upsample.len()
            ));
        }
        if self.channels.last() != Some(&3) {
            return bad("final decoder channel count must be 3".into());
        }
        if self.channels.contains(&0) || self.seed_channels == 0 || self.seed_side == 0 {
            return bad("decoder widths must be positive".into());
        }
        if self.upsample.iter().any(|&f| !(f >= 1.0) || !f.is_finite()) {
            return bad("upsample factors must be >= 1".into());
        }
        let last = *self.stage_sizes().last().expect("non-empty");
        if last != self.image_size {
            return bad(format!(
                "seed side {} with upsample {:?} reaches {last}, not image size {}",
                self.seed_side, self.upsample, self.image_size
            ));
        }
        if self.sentence_hidden == 0 || self.word_hidden == 0 || self.word_dim == 0 {
            return bad("text decoder sizes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_width: usize,
    pub hidden: Vec<usize>,
}

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub classifier: ClassifierConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        let w = self.encoder.embedding_width();
        if self.decoder.input_width != w || self.classifier.input_width != w {
            return Err(Error::ConstraintViolation(format!(
                "decoder/classifier input widths ({}, {}) must equal the article embedding width {w}",
                self.decoder.input_width, self.classifier.input_width
            )));
        }
        if self.classifier.hidden.contains(&0) {
            return Err(Error::ConstraintViolation(
                "classifier widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PretrainAe,
    ClScratch,
    ClFreeze,
    ClTransfer,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::PretrainAe => "pretrain_ae",
            Regime::ClScratch => "cl_scratch",
            Regime::ClFreeze => "cl_freeze",
            Regime::ClTransfer => "cl_transfer",
        }
    }

    pub fn needs_init(self) -> bool {
        matches!(self, Regime::ClFreeze | Regime::ClTransfer)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" | "pretrain_ae" => Ok(Regime::PretrainAe),
            "scratch" | "cl_scratch" => Ok(Regime::ClScratch),
            "freeze" | "cl_freeze" => Ok(Regime::ClFreeze),
            "transfer" | "cl_transfer" => Ok(Regime::ClTransfer),
            _ => Err(Error::InvalidArgument(format!("unknown regime `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub batch_size: usize,
    pub max_iterations: u64,
    pub learning_rate: f64,
    pub w_img: f64,
    pub w_txt: f64,
    pub seed: u64,
    pub checkpoint_interval: u64,
    pub log_interval: u64,
    pub deterministic: bool,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub unfreeze_embeddings: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::ConstraintViolation("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::ConstraintViolation(
                "learning_rate must be > 0".into(),
            ));
        }
        if self.w_img < 0.0 || self.w_txt < 0.0 {
            return Err(Error::ConstraintViolation(
                "loss weights must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Desk,
    PaperScale,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper-scale" | "paper_scale" | "paper" => Ok(Profile::PaperScale),
            _ => Err(Error::InvalidArgument(format!("unknown profile `{s}`"))),
        }
    }
}

/// Flat, merged configuration. Every field is settable by its own name in a
/// config file or through a `key=value` override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: u64,
    pub deterministic: bool,
    pub threads: usize,

    pub image_size: usize,
    pub backbone: Backbone,
    pub cnn_channels: Vec<usize>,
    pub d_img: usize,
    pub d_txt: usize,
    pub embedding_width: usize,
    pub word_hidden: usize,
    pub attention_dim: usize,
    pub word_dim: usize,
    pub max_sentences: usize,
    pub max_words: usize,
    pub vocab_max: usize,
    pub embeddings_path: Option<PathBuf>,
    pub features_path: Option<PathBuf>,

    pub seed_side: usize,
    pub seed_channels: usize,
    pub decoder_channels: Vec<usize>,
    pub upsample: Vec<f64>,
    pub dec_sentence_hidden: usize,
    pub dec_word_hidden: usize,

    pub classifier_hidden: Vec<usize>,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub pretrain_iterations: u64,
    pub train_iterations: u64,
    pub w_img: f64,
    pub w_txt: f64,
    pub clip_norm: f64,
    pub weight_decay: f64,
    pub unfreeze_embeddings: bool,
    pub checkpoint_interval: u64,
    pub log_interval: u64,
    pub test_per_class: usize,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::PaperScale => Self::paper_scale(),
        }
    }

    pub fn desk() -> Self {
        Self {
            profile: Profile::Desk,
            seed: 1,
            deterministic: false,
            threads: 0,
            image_size: 60,
            backbone: Backbone::DeskCnn,
            cnn_channels: vec![16, 32, 64, 128, 256],
            d_img: 256,
            d_txt: 256,
            embedding_width: 512,
            word_hidden: 128,
            attention_dim: 64,
            word_dim: 64,
            max_sentences: 30,
            max_words: 50,
            vocab_max: 2000,
            embeddings_path: None,
            features_path: None,
            seed_side: 6,
            seed_channels: 32,
            decoder_channels: vec![32, 16, 8, 3],
            upsample: vec![2.5, 2.0, 2.0],
            dec_sentence_hidden: 128,
            dec_word_hidden: 128,
            classifier_hidden: vec![512, 512],
            batch_size: 8,
            learning_rate: 1e-3,
            pretrain_iterations: 5000,
            train_iterations: 5000,
            w_img: 1.0,
            w_txt: 1.0,
            clip_norm: 5.0,
            weight_decay: 0.0,
            unfreeze_embeddings: false,
            checkpoint_interval: 1000,
            log_interval: 50,
            test_per_class: 50,
        }
    }

    pub fn paper_scale() -> Self {
        Self {
            profile: Profile::PaperScale,
            image_size: 300,
            d_img: 1536,
            d_txt: 864,
            embedding_width: 2400,
            word_hidden: 432,
            attention_dim: 256,
            word_dim: 300,
            vocab_max: 25_000,
            seed_side: 30,
            seed_channels: 128,
            decoder_channels: vec![128, 64, 32, 3],
            dec_sentence_hidden: 512,
            dec_word_hidden: 512,
            batch_size: 15,
            learning_rate: 1e-4,
            pretrain_iterations: 360_000,
            train_iterations: 70_000,
            checkpoint_interval: 10_000,
            log_interval: 1000,
            test_per_class: 100,
            ..Self::desk()
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            image_size: self.image_size,
            backbone: self.backbone,
            cnn_channels: self.cnn_channels.clone(),
            d_img: self.d_img,
            d_txt: self.d_txt,
            word_hidden: self.word_hidden,
            attention_dim: self.attention_dim,
            word_dim: self.word_dim,
            max_sentences: self.max_sentences,
            max_words: self.max_words,
        }
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            input_width: self.embedding_width,
            image_size: self.image_size,
            seed_side: self.seed_side,
            seed_channels: self.seed_channels,
            channels: self.decoder_channels.clone(),
            upsample: self.upsample.clone(),
            sentence_hidden: self.dec_sentence_hidden,
            word_hidden: self.dec_word_hidden,
            word_dim: self.word_dim,
            max_sentences: self.max_sentences,
            max_words: self.max_words,
        }
    }

    pub fn classifier(&self) -> ClassifierConfig {
        ClassifierConfig {
            input_width: self.embedding_width,
            hidden: self.classifier_hidden.clone(),
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder(),
            decoder: self.decoder(),
            classifier: self.classifier(),
        }
    }

    pub fn caps(&self) -> TextCaps {
        self.encoder().caps()
    }

    pub fn train(&self, regime: Regime) -> TrainConfig {
        TrainConfig {
            regime,
            batch_size: self.batch_size,
            max_iterations: match regime {
                Regime::PretrainAe => self.pretrain_iterations,
                _ => self.train_iterations,
            },
            learning_rate: self.learning_rate,
            w_img: self.w_img,
            w_txt: self.w_txt,
            seed: self.seed,
            checkpoint_interval: self.checkpoint_interval,
            log_interval: self.log_interval,
            deterministic: self.deterministic,
            clip_norm: self.clip_norm,
            weight_decay: self.weight_decay,
            unfreeze_embeddings: self.unfreeze_embeddings,
        }
    }

    /// Re-checks every dimension constraint.
    pub fn validate(&self) -> Result<()> {
        if self.d_img + self.d_txt != self.embedding_width {
            return Err(Error::ConstraintViolation(format!(
                "d_img + d_txt = {} but embedding_width = {}",
                self.d_img + self.d_txt,
                self.embedding_width
            )));
        }
        if self.vocab_max == 0 || self.test_per_class == 0 {
            return Err(Error::ConstraintViolation(
                "vocab_max and test_per_class must be positive".into(),
            ));
        }
        self.model().validate()?;
        self.train(Regime::PretrainAe).validate()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        let mismatch =
            || Error::ConstraintViolation(format!("`{key}` has the wrong type ({value})"));
        let int = || -> Result<u64> {
            value
                .as_integer()
                .and_then(|v| u64::try_from(v).ok())
                .ok_or_else(mismatch)
        };
        let uint = || int().map(|v| v as usize);
        let float = || -> Result<f64> {
            value
                .as_float()
                .or_else(|| value.as_integer().map(|v| v as f64))
                .ok_or_else(mismatch)
        };
        let boolean = || value.as_bool().ok_or_else(mismatch);
        let string = || value.as_str().map(str::to_owned).ok_or_else(mismatch);
        let list = || -> Result<Vec<usize>> {
            value
                .as_array()
                .ok_or_else(mismatch)?
                .iter()
                .map(|v| {
                    v.as_integer()
                        .and_then(|i| usize::try_from(i).ok())
                        .ok_or_else(mismatch)
                })
                .collect()
        };
        let path = || -> Result<Option<PathBuf>> {
            let s = string()?;
            Ok((!s.is_empty()).then(|| PathBuf::from(s)))
        };
        match key {
            "profile" => self.profile = string()?.parse()?,
            "seed" => self.seed = int()?,
            "deterministic" => self.deterministic = boolean()?,
            "threads" => self.threads = uint()?,
            "image_size" => self.image_size = uint()?,
            "backbone" => {
                self.backbone = match string()?.as_str() {
                    "desk_cnn" => Backbone::DeskCnn,
                    "external_features" => Backbone::ExternalFeatures,
                    other => {
                        return Err(Error::ConstraintViolation(format!(
                            "unknown backbone `{other}`"
                        )))
                    }
                }
            }
            "cnn_channels" => self.cnn_channels = list()?,
            "d_img" => self.d_img = uint()?,
            "d_txt" => self.d_txt = uint()?,
            "embedding_width" => self.embedding_width = uint()?,
            "word_hidden" => self.word_hidden = uint()?,
            "attention_dim" => self.attention_dim = uint()?,
            "word_dim" => self.word_dim = uint()?,
            "max_sentences" => self.max_sentences = uint()?,
            "max_words" => self.max_words = uint()?,
            "vocab_max" => self.vocab_max = uint()?,
            "embeddings_path" => self.embeddings_path = path()?,
            "features_path" => self.features_path = path()?,
            "seed_side" => self.seed_side = uint()?,
            "seed_channels" => self.seed_channels = uint()?,
            "decoder_channels" => self.decoder_channels = list()?,
            "upsample" => {
                self.upsample = value
                    .as_array()
                    .ok_or_else(mismatch)?
                    .iter()
                    .map(|v| {
                        v.as_float()
                            .or_else(|| v.as_integer().map(|i| i as f64))
                            .ok_or_else(mismatch)
                    })
                    .collect::<Result<_>>()?
            }
            "dec_sentence_hidden" => self.dec_sentence_hidden = uint()?,
            "dec_word_hidden" => self.dec_word_hidden = uint()?,
            "classifier_hidden" => self.classifier_hidden = list()?,
            "batch_size" => self.batch_size = uint()?,
            "learning_rate" => self.learning_rate = float()?,
            "pretrain_iterations" => self.pretrain_iterations = int()?,
            "train_iterations" => self.train_iterations = int()?,
            "w_img" => self.w_img = float()?,
            "w_txt" => self.w_txt = float()?,
            "clip_norm" => self.clip_norm = float()?,
            "weight_decay" => self.weight_decay = float()?,
            "unfreeze_embeddings" => self.unfreeze_embeddings = boolean()?,
            "checkpoint_interval" => self.checkpoint_interval = int()?,
            "log_interval" => self.log_interval = int()?,
            "test_per_class" => self.test_per_class = uint()?,
            _ => return Err(Error::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    /// Applies every key of a flat TOML document.
    pub fn apply_toml(&mut self, src: &str) -> Result<()> {
        let table: toml::Table = src.parse().map_err(|e: toml::de::Error| {
            Error::ConstraintViolation(format!("config syntax: {e}"))
        })?;
        // `profile` first so that it only selects defaults for keys the file does not set
        if let Some(p) = table.get("profile") {
            let profile: Profile = p
                .as_str()
                .ok_or_else(|| Error::ConstraintViolation("`profile` must be a string".into()))?
                .parse()?;
            let (seed, det, threads) = (self.seed, self.deterministic, self.threads);
            *self = Self::profile(profile);
            (self.seed, self.deterministic, self.threads) = (seed, det, threads);
        }
        for (k, v) in &table {
            if k != "profile" {
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    /// Parses a `key=value` override; the value uses TOML syntax, with bare
    /// words accepted as strings.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("override `{kv}` is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        let doc = format!("v = {v}");
        let value = match doc.parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(v.to_owned()),
        };
        self.set(k, &value)
    }

    /// Every key accepted by [`RunConfig::set`].
    pub fn keys() -> Vec<String> {
        let v = serde_json::to_value(Self::desk()).expect("serializable");
        v.as_object().expect("struct").keys().cloned().collect()
    }
}

/// Profile defaults, then `path` (if any), then `overrides`; validated.
pub fn load_config(
    path: Option<&Path>,
    profile: Profile,
    overrides: &[String],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::profile(profile);
    if let Some(path) = path {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_toml(&src)?;
    }
    for kv in overrides {
        cfg.apply_override(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(src: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), src).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_desk_defaults() {
        let f = write("");
        let cfg = load_config(Some(f.path()), Profile::Desk, &[]).unwrap();
        assert_eq!(cfg, RunConfig::desk());
    }

    #[test]
    fn profiles_validate() {
        RunConfig::desk().validate().unwrap();
        RunConfig::paper_scale().validate().unwrap();
        assert_eq!(RunConfig::paper_scale().embedding_width, 2400);
    }

    #[test]
    fn width_sum_enforced() {
        let f = write("d_img = 100\nd_txt = 100\nembedding_width = 2400\n");
        assert!(matches!(
            load_config(Some(f.path()), Profile::Desk, &[]),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn unknown_key() {
        let f = write("learning_rat = 0.1\n");
        match load_config(Some(f.path()), Profile::Desk, &[]) {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "learning_rat"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precedence_and_determinism() {
        let f = write("batch_size = 4\nseed = 3\n");
        let ov = vec![
            "batch_size=2".to_owned(),
            "backbone=external_features".to_owned(),
        ];
        let a = load_config(Some(f.path()), Profile::Desk, &ov).unwrap();
        let b = load_config(Some(f.path()), Profile::Desk, &ov).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.batch_size, 2);
        assert_eq!(a.seed, 3);
        assert_eq!(a.backbone, Backbone::ExternalFeatures);
    }

    #[test]
    fn bad_schedule_rejected() {
        let mut c = RunConfig::desk();
        c.upsample = vec![2.0, 2.0, 2.0];
        assert!(c.validate().is_err());
        let mut c = RunConfig::desk();
        c.decoder_channels = vec![32, 16, 8, 4];
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let desk = serde_json::to_value(RunConfig::desk()).unwrap();
        for key in RunConfig::keys() {
            let key = key.as_str();
            let mut c = RunConfig::desk();
            let v: toml::Value = match &desk[key] {
                serde_json::Value::Null => toml::Value::String(String::new()),
                other => toml::Value::try_from(other.clone()).unwrap(),
            };
            c.set(key, &v).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
