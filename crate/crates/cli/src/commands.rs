use std::fs;
use std::path::{Path, PathBuf};

use absnet::config::{Regime, RunConfig};
use absnet::corpus::{
    clean_text_with, extract_pairs, generate_synthetic_corpus, load_dataset, parse_article,
    preprocess_image, save_dataset, split_dataset, write_manifest, Dataset, DatasetManifest,
    ImageTextPair, PreprocessedImage, Split, SynthOptions, TokenizedText, GENERATOR_VERSION,
};
use absnet::decoder::{decode_image, decode_text, nearest_token};
use absnet::eval::compare_regimes;
use absnet::model::{AbsNet, Sample};
use absnet::nn::ParameterStore;
use absnet::pipeline::{
    configured_features, evaluate_regime, initial_model, load_vocab, make_samples, restore_model,
    save_vocab,
};
use absnet::seed::derive_seed;
use absnet::train::gradcheck::{check_block, BLOCKS};
use absnet::train::{load_checkpoint, pretrain_autoencoder, train_classifier, Checkpoint};
use absnet::vocab::build_vocab;
use absnet::{Error, Result};
use ndarray::Array1;

use crate::{resolve_config, Cli, Command, RegimeArg};

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if cfg.threads > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    match &cli.command {
        Command::Ingest { xml_dir, out } => ingest(&cfg, xml_dir, out),
        Command::Synth {
            out,
            per_class,
            test_per_class,
        } => synth(
            &cfg,
            out,
            *per_class,
            test_per_class.unwrap_or(cfg.test_per_class),
        ),
        Command::Vocab { dataset, max } => vocab(dataset, max.unwrap_or(cfg.vocab_max)),
        Command::Pretrain { dataset, out } => pretrain(&cfg, dataset, out.as_deref()),
        Command::Train {
            dataset,
            regime,
            init,
            out,
        } => train(&cfg, dataset, *regime, init.as_deref(), out.as_deref()),
        Command::Eval {
            dataset,
            ckpts,
            out,
        } => eval(&cfg, dataset, ckpts, out.as_deref()),
        Command::Predict {
            ckpt,
            image,
            text,
            features,
        } => predict(ckpt, image, text, features.as_deref()),
        Command::Gradcheck { block } => gradcheck(block.as_deref()),
        Command::DumpRecon {
            ckpt,
            n,
            dataset,
            out,
        } => dump_recon(&cfg, ckpt, *n, dataset, out.as_deref()),
    }
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn ingest(cfg: &RunConfig, xml_dir: &Path, out: &Path) -> Result<()> {
    let mut files: Vec<PathBuf> = io(xml_dir, fs::read_dir(xml_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("xml")))
        .collect();
    files.sort();
    let mut pairs = Vec::new();
    let mut warnings = Vec::new();
    for f in &files {
        let bytes = io(f, fs::read(f))?;
        let (doc, w) = parse_article(&bytes)
            .map_err(|e| Error::MalformedXml(format!("{}: {e}", f.display())))?;
        let (p, w2) = extract_pairs(&doc, cfg.image_size, cfg.caps());
        warnings.extend(w.into_iter().chain(w2));
        pairs.extend(p);
    }
    for w in &warnings {
        log::warn!("{}/{}: {}", w.article_id, w.figure_id, w.message);
    }
    let manifest = DatasetManifest::describe(&pairs, "ingest", GENERATOR_VERSION, None);
    save_dataset(out, &pairs, &manifest)?;
    let mut lines = String::new();
    for w in &warnings {
        lines.push_str(&serde_json::to_string(w)?);
        lines.push('\n');
    }
    let wpath = out.join("warnings.jsonl");
    io(&wpath, fs::write(&wpath, lines))?;
    println!(
        "{} articles, {} pairs, {} warnings",
        files.len(),
        pairs.len(),
        warnings.len()
    );
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path, per_class: usize, test_per_class: usize) -> Result<()> {
    let opts = SynthOptions {
        image_size: cfg.image_size,
        caps: cfg.caps(),
    };
    let (mut pairs, _) =
        generate_synthetic_corpus(per_class, derive_seed(cfg.seed, "synth"), &opts)?;
    split_dataset(&mut pairs, test_per_class, derive_seed(cfg.seed, "split"))?;
    let manifest = DatasetManifest::describe(&pairs, "synth", GENERATOR_VERSION, Some(cfg.seed));
    save_dataset(out, &pairs, &manifest)?;
    println!("{} pairs written to {}", pairs.len(), out.display());
    Ok(())
}

/// Training pairs: the train split, or every pair when nothing is split.
fn training_pairs(ds: &Dataset) -> Vec<&ImageTextPair> {
    let train: Vec<_> = ds.split(Split::Train).collect();
    if train.is_empty() {
        ds.pairs.iter().collect()
    } else {
        train
    }
}

fn vocab(dataset: &Path, max: usize) -> Result<()> {
    let mut ds = load_dataset(dataset)?;
    let vocab = build_vocab(training_pairs(&ds).into_iter().map(|p| &p.text), max)?;
    save_vocab(dataset, &vocab)?;
    ds.manifest.vocab = Some(vocab.summary());
    write_manifest(dataset, &ds.manifest)?;
    println!(
        "{} tokens kept of {} distinct, coverage {:.2}%",
        vocab.len(),
        vocab.summary().distinct_tokens,
        100.0 * vocab.coverage()
    );
    Ok(())
}

fn save_run(dir: &Path, dataset: &Path) -> Result<()> {
    // Checkpoints carry the vocabulary they were trained with.
    save_vocab(dir, &load_vocab(dataset)?)
}

fn pretrain(cfg: &RunConfig, dataset: &Path, out: Option<&Path>) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let vocab = load_vocab(dataset)?;
    let (net, params) = initial_model(cfg, &vocab)?;
    let data = make_samples(
        training_pairs(&ds),
        &vocab,
        &net.cfg,
        configured_features(cfg)?.as_ref(),
    )?;
    let out = out.map_or_else(
        || dataset.join("runs").join(Regime::PretrainAe.tag()),
        Path::to_path_buf,
    );
    let ck = pretrain_autoencoder(
        &net,
        params,
        &data,
        &cfg.train(Regime::PretrainAe),
        Some(&out),
    )?;
    save_run(&out, dataset)?;
    if let Some(last) = ck.history.last() {
        println!("{}", serde_json::to_string(last)?);
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn regime_of(r: RegimeArg) -> Regime {
    match r {
        RegimeArg::Scratch => Regime::ClScratch,
        RegimeArg::Freeze => Regime::ClFreeze,
        RegimeArg::Transfer => Regime::ClTransfer,
    }
}

fn train(
    cfg: &RunConfig,
    dataset: &Path,
    regime: RegimeArg,
    init: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let regime = regime_of(regime);
    if regime.needs_init() && init.is_none() {
        return Err(Error::MissingInitCheckpoint(regime.tag().into()));
    }
    let init: Option<Checkpoint<f32>> = init.map(load_checkpoint).transpose()?;
    let ds = load_dataset(dataset)?;
    let vocab = load_vocab(dataset)?;
    let (net, params) = initial_model(cfg, &vocab)?;
    let features = configured_features(cfg)?;
    let data = make_samples(training_pairs(&ds), &vocab, &net.cfg, features.as_ref())?;
    let out = out.map_or_else(
        || dataset.join("runs").join(regime.tag()),
        Path::to_path_buf,
    );
    let ck = train_classifier(
        &net,
        params,
        &data,
        &cfg.train(regime),
        init.as_ref(),
        Some(&out),
    )?;
    save_run(&out, dataset)?;
    let test: Vec<_> = ds.split(Split::Test).collect();
    if !test.is_empty() {
        let test = make_samples(test, &vocab, &net.cfg, features.as_ref())?;
        let report = evaluate_regime(&net, &ck.params, &test, regime.tag(), Some(&out))?;
        print!("{}", report.to_markdown());
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn eval(cfg: &RunConfig, dataset: &Path, ckpts: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let test: Vec<_> = ds.split(Split::Test).collect();
    if test.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has no test split",
            dataset.display()
        )));
    }
    if let Some(p) = test.iter().find(|p| p.label.is_none()) {
        return Err(Error::UnlabeledPair(p.pair_id.clone()));
    }
    let features = configured_features(cfg)?;
    let mut reports = Vec::new();
    for (i, path) in ckpts.iter().enumerate() {
        let ck = load_checkpoint::<f32>(path)?;
        let tag = ck
            .meta
            .train
            .as_ref()
            .map_or_else(|| format!("ckpt{i}"), |t| t.regime.tag().to_owned());
        let vocab = load_vocab(path)?;
        let (net, params) = restore_model(ck)?;
        let samples = make_samples(test.iter().copied(), &vocab, &net.cfg, features.as_ref())?;
        let dir = match (out, ckpts.len()) {
            (Some(o), 1) => o.to_path_buf(),
            (Some(o), _) => o.join(&tag),
            (None, _) => path.clone(),
        };
        let report = evaluate_regime(&net, &params, &samples, &tag, Some(&dir))?;
        print!("{}", report.to_markdown());
        reports.push(report);
    }
    if reports.len() > 1 {
        let cmp = compare_regimes(&reports);
        let dir = out.map_or_else(|| dataset.join("runs"), Path::to_path_buf);
        cmp.write(&dir)?;
        print!("{}", cmp.to_markdown());
    }
    Ok(())
}

fn read_vector(path: &Path) -> Result<Array1<f32>> {
    let body = io(path, fs::read_to_string(path))?;
    body.split_whitespace()
        .map(|v| v.parse::<f32>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(Array1::from)
        .map_err(|e| Error::MalformedVectorFile {
            line: 1,
            reason: e.to_string(),
        })
}

fn predict(ckpt: &Path, image: &Path, text: &Path, features: Option<&Path>) -> Result<()> {
    let vocab = load_vocab(ckpt)?;
    let (net, params) = restore_model(load_checkpoint(ckpt)?)?;
    let enc = &net.cfg.encoder;
    let pair = ImageTextPair {
        pair_id: "input".into(),
        image: preprocess_image(&io(image, fs::read(image))?, enc.image_size)?,
        text: clean_text_with(&io(text, fs::read_to_string(text))?, enc.caps()),
        label: None,
        source: String::new(),
        split: Split::Unsplit,
    };
    let mut sample = Sample::from_pair(&pair, &vocab, &net.cfg);
    if let Some(f) = features {
        sample.features = Some(read_vector(f)?);
    }
    let probs = net.classify(&params, &sample)?;
    let out = serde_json::json!({
        "label": probs.predict(),
        "probabilities": {
            "I<aT": probs.0[0],
            "I>aT": probs.0[1],
            "I=aT": probs.0[2],
        },
    });
    println!("{out}");
    Ok(())
}

fn gradcheck(block: Option<&str>) -> Result<()> {
    let blocks: Vec<&str> = match block {
        Some(b) => vec![b],
        None => BLOCKS.to_vec(),
    };
    let mut failed = Vec::new();
    for b in blocks {
        let rep = check_block(b)?;
        println!(
            "{:<26} max rel err {:.3e} over {} values ({})",
            b,
            rep.max_rel_err,
            rep.values_checked,
            if rep.passed() { "ok" } else { "FAILED" }
        );
        if !rep.passed() {
            failed.push(b.to_owned());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::GradientCheckFailed(failed.join(", ")))
    }
}

fn dump_recon(
    cfg: &RunConfig,
    ckpt: &Path,
    n: usize,
    dataset: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let vocab = load_vocab(ckpt)?;
    let (net, params) = restore_model(load_checkpoint(ckpt)?)?;
    let ds = load_dataset(dataset)?;
    let mut pairs: Vec<&ImageTextPair> = ds.split(Split::Test).collect();
    if pairs.is_empty() {
        pairs = ds.pairs.iter().collect();
    }
    pairs.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    pairs.truncate(n);
    let samples = make_samples(
        pairs.iter().copied(),
        &vocab,
        &net.cfg,
        configured_features(cfg)?.as_ref(),
    )?;
    let out = out.map_or_else(|| ckpt.join("recon"), Path::to_path_buf);
    io(&out, fs::create_dir_all(&out))?;
    for (pair, s) in pairs.iter().zip(&samples) {
        let z = net.embed(&params, s)?;
        write_recon(&out, pair, &net, &params, &vocab, s, z)?;
    }
    println!(
        "{} reconstructions written to {}",
        samples.len(),
        out.display()
    );
    Ok(())
}

fn write_recon(
    out: &Path,
    pair: &ImageTextPair,
    net: &AbsNet,
    params: &ParameterStore<f32>,
    vocab: &absnet::vocab::Vocabulary,
    s: &Sample<f32>,
    z: Array1<f32>,
) -> Result<()> {
    let stem: String = pair
        .pair_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let recon = PreprocessedImage {
        pixels: decode_image(&net.image_decoder, params, z.view())?,
    };
    let write = |name: String, bytes: Vec<u8>| {
        let p = out.join(name);
        io(&p, fs::write(&p, bytes))
    };
    write(format!("{stem}_original.png"), pair.image.to_png())?;
    write(format!("{stem}_recon.png"), recon.to_png())?;
    let grid = decode_text(&net.text_decoder, params, z.view())?;
    let table = params.mat(net.embed);
    let decoded: Vec<Vec<String>> = (0..s.grid.dims().0)
        .map(|i| {
            s.grid
                .real_positions(i)
                .into_iter()
                .filter_map(|j| {
                    nearest_token(grid.slice(ndarray::s![i, j, ..]), table, vocab)
                        .map(str::to_owned)
                })
                .collect()
        })
        .filter(|sent: &Vec<String>| !sent.is_empty())
        .collect();
    let render = |t: &TokenizedText| {
        t.sentences
            .iter()
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join(" | ")
    };
    let body = format!(
        "original: {}\nreconstructed: {}\n",
        render(&pair.text),
        render(&TokenizedText { sentences: decoded })
    );
    write(format!("{stem}.txt"), body.into_bytes())
}
