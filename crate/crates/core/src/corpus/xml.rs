//! Article XML parsing and figure/paragraph pairing.
//!
//! Default schema (element names are configurable through [`XmlSchema`]):
//!
//! ```xml
//! <article id="A1" journal="MPE">
//!   <body>
//!     <p>Text mentioning Figure 1 ... <formula>x^2</formula> ...</p>
//!   </body>
//!   <fig id="f1" label="Figure 1">
//!     <caption>Caption text.</caption>
//!     <graphic>base64-encoded PNG or JPEG</graphic>
//!   </fig>
//! </article>
//! ```
//!
//! Paragraphs get 1-based positional ids in document order. A figure's
//! ordinal is the number in its `label` attribute, or its 1-based position
//! among figures when no label is present.

use std::collections::HashSet;
use std::sync::LazyLock;

use base64::Engine;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::image::preprocess_image;
use super::text::{clean_text_with, strip_markup, TextCaps};
use super::{ImageTextPair, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct XmlSchema {
    pub article: String,
    pub paragraph: String,
    pub figure: String,
    pub caption: String,
    pub graphic: String,
}

impl Default for XmlSchema {
    fn default() -> Self {
        Self {
            article: "article".into(),
            paragraph: "p".into(),
            figure: "fig".into(),
            caption: "caption".into(),
            graphic: "graphic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paragraph {
    pub id: usize,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Figure {
    pub figure_id: String,
    pub ordinal: usize,
    pub image: Vec<u8>,
    pub caption: String,
    pub referenced_by: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticleDocument {
    pub article_id: String,
    pub journal: String,
    pub paragraphs: Vec<Paragraph>,
    pub figures: Vec<Figure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarningKind {
    MissingFigurePayload,
    UndecodableImage,
}

/// Non-fatal problem: the affected figure or pair was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub article_id: String,
    pub figure_id: String,
    pub kind: WarningKind,
    pub message: String,
}

static FIG_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bfig(?:ure)?s?\.?\s*(\d+)").unwrap());
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());

pub fn parse_article(xml: &[u8]) -> Result<(ArticleDocument, Vec<IngestWarning>)> {
    parse_article_with(xml, &XmlSchema::default())
}

pub fn parse_article_with(
    xml: &[u8],
    schema: &XmlSchema,
) -> Result<(ArticleDocument, Vec<IngestWarning>)> {
    let text = std::str::from_utf8(xml).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::MalformedXml(e.to_string()))?;
    let root = doc
        .descendants()
        .find(|n| n.has_tag_name(schema.article.as_str()))
        .ok_or_else(|| Error::MalformedXml(format!("no <{}> element", schema.article)))?;
    let article_id = root.attribute("id").unwrap_or("unknown").to_owned();
    let journal = root.attribute("journal").unwrap_or("").to_owned();

    let in_figure = |n: roxmltree::Node<'_, '_>| {
        n.ancestors()
            .skip(1)
            .any(|a| a.has_tag_name(schema.figure.as_str()))
    };
    let paragraphs: Vec<Paragraph> = root
        .descendants()
        .filter(|n| n.has_tag_name(schema.paragraph.as_str()) && !in_figure(*n))
        .enumerate()
        .map(|(i, n)| Paragraph {
            id: i + 1,
            raw: inner_source(text, n).to_owned(),
        })
        .collect();

    let mentions: Vec<HashSet<usize>> = paragraphs
        .iter()
        .map(|p| {
            FIG_MENTION
                .captures_iter(&strip_markup(&p.raw))
                .filter_map(|c| c[1].parse().ok())
                .collect()
        })
        .collect();

    let mut warnings = Vec::new();
    let mut figures = Vec::new();
    let mut seen = HashSet::new();
    for (pos, fig) in root
        .descendants()
        .filter(|n| n.has_tag_name(schema.figure.as_str()))
        .enumerate()
    {
        let figure_id = fig
            .attribute("id")
            .map(str::to_owned)
            .unwrap_or_else(|| format!("fig{}", pos + 1));
        if !seen.insert(figure_id.clone()) {
            return Err(Error::MalformedXml(format!(
                "duplicate figure id `{figure_id}`"
            )));
        }
        let ordinal = fig
            .attribute("label")
            .and_then(|l| DIGITS.find(l))
            .and_then(|m| m.as_str().parse().ok())
            .unwrap_or(pos + 1);
        let caption = fig
            .children()
            .find(|c| c.has_tag_name(schema.caption.as_str()))
            .map(|c| inner_source(text, c).to_owned())
            .unwrap_or_default();
        let payload: String = fig
            .descendants()
            .find(|c| c.has_tag_name(schema.graphic.as_str()))
            .map(|g| {
                g.text()
                    .unwrap_or("")
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .collect()
            })
            .unwrap_or_default();
        let image = match base64::engine::general_purpose::STANDARD.decode(payload.as_bytes()) {
            Ok(bytes) if !bytes.is_empty() => bytes,
            Ok(_) => {
                warnings.push(IngestWarning {
                    article_id: article_id.clone(),
                    figure_id,
                    kind: WarningKind::MissingFigurePayload,
                    message: "figure has no image data".into(),
                });
                continue;
            }
            Err(e) => {
                warnings.push(IngestWarning {
                    article_id: article_id.clone(),
                    figure_id,
                    kind: WarningKind::MissingFigurePayload,
                    message: format!("image data is not valid base64: {e}"),
                });
                continue;
            }
        };
        let referenced_by = paragraphs
            .iter()
            .zip(&mentions)
            .filter(|(_, m)| m.contains(&ordinal))
            .map(|(p, _)| p.id)
            .collect();
        figures.push(Figure {
            figure_id,
            ordinal,
            image,
            caption,
            referenced_by,
        });
    }

    Ok((
        ArticleDocument {
            article_id,
            journal,
            paragraphs,
            figures,
        },
        warnings,
    ))
}

/// Source text between an element's start and end tags.
fn inner_source<'a>(src: &'a str, node: roxmltree::Node<'_, '_>) -> &'a str {
    let (Some(first), Some(last)) = (node.first_child(), node.last_child()) else {
        return "";
    };
    let start = first.range().start;
    let end = last.range().end;
    &src[start..end]
}

/// One pair per (figure, referencing paragraph); a figure nobody references
/// yields a single caption-only pair. Pairs with undecodable images are
/// skipped and reported.
pub fn extract_pairs(
    doc: &ArticleDocument,
    image_size: usize,
    caps: TextCaps,
) -> (Vec<ImageTextPair>, Vec<IngestWarning>) {
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for fig in &doc.figures {
        let image = match preprocess_image(&fig.image, image_size) {
            Ok(img) => img,
            Err(e) => {
                let n = fig.referenced_by.len().max(1);
                warnings.push(IngestWarning {
                    article_id: doc.article_id.clone(),
                    figure_id: fig.figure_id.clone(),
                    kind: WarningKind::UndecodableImage,
                    message: format!("{e}; skipped {n} pair(s)"),
                });
                continue;
            }
        };
        let caption = clean_text_with(&fig.caption, caps);
        let make = |suffix: String, text| ImageTextPair {
            pair_id: format!("{}-{}-{}", doc.article_id, fig.figure_id, suffix),
            image: image.clone(),
            text,
            label: None,
            source: doc.journal.clone(),
            split: Split::Unsplit,
        };
        if fig.referenced_by.is_empty() {
            pairs.push(make("caption".into(), caption.clone()));
            continue;
        }
        for &pid in &fig.referenced_by {
            let para = doc
                .paragraphs
                .iter()
                .find(|p| p.id == pid)
                .expect("referencing ids resolve to paragraphs");
            let text = caption
                .clone()
                .concat(clean_text_with(&para.raw, caps), caps);
            pairs.push(make(format!("p{pid}"), text));
        }
    }
    (pairs, warnings)
}
