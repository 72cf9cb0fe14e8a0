//! Dataset directory: `images/<pair>.png`, `pairs.jsonl`, `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::PreprocessedImage;
use super::text::TokenizedText;
use super::{AbsLabel, ImageTextPair, Split};
use crate::error::{Error, Result};
use crate::vocab::VocabSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub image_path: String,
    pub sentences: Vec<Vec<String>>,
    pub label: Option<AbsLabel>,
    pub source: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub generator_version: String,
    pub seed: Option<u64>,
    pub image_size: usize,
    pub total: usize,
    /// label (or `unlabeled`) → split → count.
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<VocabSummary>,
}

impl DatasetManifest {
    pub fn describe(
        pairs: &[ImageTextPair],
        generator: &str,
        version: &str,
        seed: Option<u64>,
    ) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for p in pairs {
            let label = p.label.map_or("unlabeled".to_owned(), |l| l.to_string());
            let split = split_name(p.split).to_owned();
            *counts.entry(label).or_default().entry(split).or_default() += 1;
        }
        Self {
            generator: generator.into(),
            generator_version: version.into(),
            seed,
            image_size: pairs.first().map_or(0, |p| p.image.height()),
            total: pairs.len(),
            counts,
            vocab: None,
        }
    }
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
        Split::Unsplit => "unsplit",
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub pairs: Vec<ImageTextPair>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ImageTextPair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }
}

fn file_stem(pair_id: &str) -> String {
    pair_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes (or overwrites) a dataset directory.
pub fn save_dataset(dir: &Path, pairs: &[ImageTextPair], manifest: &DatasetManifest) -> Result<()> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let jsonl = dir.join("pairs.jsonl");
    let file = fs::File::create(&jsonl).map_err(|e| Error::io(&jsonl, e))?;
    let mut out = BufWriter::new(file);
    for p in pairs {
        let rel = format!("images/{}.png", file_stem(&p.pair_id));
        let path = dir.join(&rel);
        fs::write(&path, p.image.to_png()).map_err(|e| Error::io(&path, e))?;
        let rec = PairRecord {
            pair_id: p.pair_id.clone(),
            image_path: rel,
            sentences: p.text.sentences.clone(),
            label: p.label,
            source: p.source.clone(),
            split: p.split,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(&jsonl, e))?;
    }
    out.flush().map_err(|e| Error::io(&jsonl, e))?;
    write_manifest(dir, manifest)
}

pub fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join("manifest.json");
    let manifest: DatasetManifest =
        serde_json::from_slice(&fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)?;
    let jsonl = dir.join("pairs.jsonl");
    let file = fs::File::open(&jsonl).map_err(|e| Error::io(&jsonl, e))?;
    let mut pairs = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&jsonl, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("pairs.jsonl line {}: {e}", n + 1)))?;
        let ipath = dir.join(&rec.image_path);
        let img = ::image::open(&ipath)
            .map_err(|e| Error::UndecodableImage(format!("{}: {e}", ipath.display())))?
            .to_rgb8();
        pairs.push(ImageTextPair {
            pair_id: rec.pair_id,
            image: PreprocessedImage::from_rgb(&img),
            text: TokenizedText {
                sentences: rec.sentences,
            },
            label: rec.label,
            source: rec.source,
            split: rec.split,
        });
    }
    Ok(Dataset {
        root: dir.to_path_buf(),
        manifest,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, split_dataset, SynthOptions};

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (mut pairs, _) = generate_synthetic_corpus(
            3,
            4,
            &SynthOptions {
                image_size: 12,
                ..Default::default()
            },
        )
        .unwrap();
        split_dataset(&mut pairs, 1, 2).unwrap();
        let manifest = DatasetManifest::describe(&pairs, "synth", "synth-1", Some(4));
        assert_eq!(manifest.counts["I<aT"]["test"], 1);
        save_dataset(dir.path(), &pairs, &manifest).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.pairs, pairs);
        assert_eq!(ds.manifest, manifest);
    }
}
