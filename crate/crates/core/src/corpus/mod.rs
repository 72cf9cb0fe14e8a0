//! Article ingestion, preprocessing, synthetic corpus generation, splits and
//! on-disk dataset storage.

mod image;
mod split;
mod store;
mod synth;
mod text;
mod xml;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use self::image::{preprocess_image, PreprocessedImage, DEFAULT_IMAGE_SIZE};
pub use self::split::split_dataset;
pub use self::store::{
    load_dataset, save_dataset, write_manifest, Dataset, DatasetManifest, PairRecord,
};
pub use self::synth::{
    generate_synthetic_corpus, DrawnShape, ShapeKind, SynthOptions, COLORS, GENERATOR_VERSION,
};
pub use self::text::{
    clean_text, clean_text_with, split_sentences, strip_markup, tokenize, TextCaps, TokenizedText,
    FORMULA_TOKEN, MAX_SENTENCES, MAX_TOKENS,
};
pub use self::xml::{
    extract_pairs, parse_article, ArticleDocument, Figure, IngestWarning, Paragraph, WarningKind,
    XmlSchema,
};

/// Relative abstractness of the image with respect to its text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AbsLabel {
    /// The image is less abstract than the text.
    #[serde(rename = "I<aT")]
    ImageLessAbstract,
    /// The image is more abstract than the text.
    #[serde(rename = "I>aT")]
    ImageMoreAbstract,
    #[serde(rename = "I=aT")]
    EqualAbstractness,
}

impl AbsLabel {
    pub const ALL: [AbsLabel; 3] = [
        AbsLabel::ImageLessAbstract,
        AbsLabel::ImageMoreAbstract,
        AbsLabel::EqualAbstractness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AbsLabel::ImageLessAbstract => "I<aT",
            AbsLabel::ImageMoreAbstract => "I>aT",
            AbsLabel::EqualAbstractness => "I=aT",
        }
    }
}

impl fmt::Display for AbsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AbsLabel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| crate::Error::Dataset(format!("unknown label `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unsplit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTextPair {
    pub pair_id: String,
    pub image: PreprocessedImage,
    pub text: TokenizedText,
    pub label: Option<AbsLabel>,
    pub source: String,
    pub split: Split,
}
