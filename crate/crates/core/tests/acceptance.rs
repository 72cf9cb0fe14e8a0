//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ABSNET_ACCEPTANCE=1,3,5` restricts the run to the listed criteria.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use absnet::config::{Regime, RunConfig};
use absnet::corpus::{
    clean_text, generate_synthetic_corpus, split_dataset, Split, SynthOptions, TokenizedText,
    MAX_SENTENCES, MAX_TOKENS,
};
use absnet::decoder::decode_image;
use absnet::eval::{compare_regimes, metrics, percent, ConfusionMatrix3};
use absnet::model::{AbsNet, Sample};
use absnet::nn::ParameterStore;
use absnet::pipeline::{evaluate_regime, initial_model, make_samples};
use absnet::seed::{derive_seed, rng_for};
use absnet::train::gradcheck::{check_block, BLOCKS, TOLERANCE};
use absnet::train::{load_checkpoint, pretrain_autoencoder, train_classifier};
use absnet::vocab::{build_vocab, encode_tokens};
use ndarray::{Array1, Array3};
use rand::seq::IndexedRandom;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- 1

fn metric_oracle() -> Outcome {
    let cm = ConfusionMatrix3::from_rows([[90, 7, 3], [14, 68, 18], [10, 7, 83]]);
    let m = ok(metrics(&cm))?;
    let p: Vec<String> = m.precision.iter().map(|r| percent(r.unwrap())).collect();
    let r: Vec<String> = m.recall.iter().map(|r| percent(r.unwrap())).collect();
    let a = percent(m.accuracy);
    ensure!(p == ["78.95", "82.93", "79.81"], "precision {p:?}");
    ensure!(r == ["90.00", "68.00", "83.00"], "recall {r:?}");
    ensure!(a == "80.33", "accuracy {a}");
    Ok(format!(
        "precision {p:?}, recall {r:?}, accuracy {a} (exact match at 2 decimals)"
    ))
}

// ---------------------------------------------------------------- 2

fn gradient_suite() -> Outcome {
    let mut worst = (String::new(), 0.0f64);
    let mut failed = Vec::new();
    for block in BLOCKS {
        let rep = ok(check_block(block))?;
        if !rep.passed() {
            failed.push(format!("{block} {:.2e}", rep.max_rel_err));
        }
        if rep.max_rel_err > worst.1 {
            worst = (block.to_string(), rep.max_rel_err);
        }
    }
    ensure!(failed.is_empty(), "blocks over {TOLERANCE:e}: {failed:?}");
    Ok(format!(
        "{} blocks, worst {} at {:.2e} (tolerance {TOLERANCE:e})",
        BLOCKS.len(),
        worst.0,
        worst.1
    ))
}

// ---------------------------------------------------------------- 3

fn random_grid_text<R: Rng>(rng: &mut R, words: &[&str]) -> TokenizedText {
    let n_sent = rng.random_range(1..=6);
    let sentences: Vec<Vec<String>> = (0..n_sent)
        .map(|_| {
            let n = rng.random_range(1..=9);
            (0..n)
                .map(|_| words.choose(rng).unwrap().to_string())
                .collect()
        })
        .collect();
    TokenizedText { sentences }
}

fn shapes_and_invariants() -> Outcome {
    // Paper-scale widths.
    let paper = RunConfig::paper_scale();
    let words = ["alpha", "beta", "gamma", "delta", "omega"];
    let texts = [TokenizedText::from_sentences(&[&words[..]])];
    let vocab = ok(build_vocab(texts.iter(), 10))?;
    let (net, params) = ok(initial_model(&paper, &vocab))?;
    let mut rng = rng_for(3, "acceptance.shapes");
    let grid = encode_tokens(&texts[0], &vocab, paper.caps());
    let sample = Sample::<f32> {
        pair_id: "paper".into(),
        pixels: Array3::zeros((3, paper.image_size, paper.image_size)),
        features: Some(Array1::from_shape_fn(paper.d_img, |_| {
            rng.random_range(-1.0..1.0)
        })),
        grid,
        label: None,
    };
    let z = ok(net.embed(&params, &sample))?;
    ensure!(z.len() == 2400, "paper-scale embedding width {}", z.len());
    let img = ok(decode_image(&net.image_decoder, &params, z.view()))?;
    ensure!(
        img.dim() == (300, 300, 3),
        "reconstruction shape {:?}",
        img.dim()
    );
    ensure!(
        img.iter().all(|v| v.abs() <= 1.0),
        "reconstruction outside [-1, 1]"
    );
    drop((net, params));

    // Attention normalisation and masked-position inertness at desk scale,
    // double precision.
    let desk = RunConfig::desk();
    let lexicon: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let lex: Vec<&str> = lexicon.iter().map(String::as_str).collect();
    let corpus: Vec<TokenizedText> = (0..30).map(|_| random_grid_text(&mut rng, &lex)).collect();
    let vocab = ok(build_vocab(corpus.iter(), 100))?;
    let (net, p32) = ok(initial_model(&desk, &vocab))?;
    let p64: ParameterStore<f64> = p32.cast();
    let mut worst_sum = 0.0f64;
    for text in &corpus {
        let grid = encode_tokens(text, &vocab, desk.caps());
        let pixels = Array3::from_shape_fn((3, 60, 60), |_| rng.random_range(-1.0..1.0));
        let s = Sample::<f64> {
            pair_id: String::new(),
            pixels,
            features: None,
            grid: grid.clone(),
            label: None,
        };
        let tr = ok(net.encode(&p64, &s))?;
        for st in &tr.text.sentences {
            ensure!(
                st.attention.weights.len() == grid.real_positions(st.index).len(),
                "word attention length"
            );
            worst_sum = worst_sum.max((st.attention.weights.sum() - 1.0).abs());
        }
        let sa = tr.text.sentence_attention.as_ref().expect("non-empty text");
        ensure!(
            sa.weights.len() == text.sentences.len(),
            "sentence attention length"
        );
        worst_sum = worst_sum.max((sa.weights.sum() - 1.0).abs());

        // Scribble over every padded cell; the embedding must not move a bit.
        let mut noisy = s.clone();
        for (id, &m) in noisy.grid.ids.iter_mut().zip(grid.mask.iter()) {
            if !m {
                *id = rng.random_range(0..vocab.num_ids() as u32);
            }
        }
        let a = ok(net.embed(&p64, &s))?;
        let b = ok(net.embed(&p64, &noisy))?;
        ensure!(
            a.iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()),
            "padding content changed the embedding"
        );
    }
    ensure!(worst_sum <= 1e-6, "attention sum off by {worst_sum:e}");

    // Truncation caps on fuzzed raw text.
    let mut worst = (0usize, 0usize);
    for _ in 0..10_000 {
        let raw = fuzz_text(&mut rng);
        let t = clean_text(&raw);
        let longest = t.sentences.iter().map(Vec::len).max().unwrap_or(0);
        worst = (worst.0.max(t.sentences.len()), worst.1.max(longest));
        ensure!(
            t.sentences.len() <= MAX_SENTENCES && longest <= MAX_TOKENS,
            "caps exceeded: {worst:?}"
        );
        let grid = encode_tokens(&t, &vocab, desk.caps());
        ensure!(
            grid.dims() == (MAX_SENTENCES, MAX_TOKENS),
            "grid dims {:?}",
            grid.dims()
        );
    }
    Ok(format!(
        "embedding 2400, reconstruction 300x300x3, attention |sum-1| <= {worst_sum:.1e}, \
         padding bit-inert, 10000 fuzzed texts max {} sentences / {} tokens",
        worst.0, worst.1
    ))
}

fn fuzz_text<R: Rng>(rng: &mut R) -> String {
    const PIECES: &[&str] = &[
        "word",
        "Fig.",
        "e.g.",
        "x",
        "α",
        "<b>",
        "</b>",
        "<formula>a+b</formula>",
        "&amp;",
        "&#955;",
        "...",
        "?",
        "!",
        ".",
        " ",
        "\n",
        "\t",
        "-",
        "3.14",
        "U.S.",
        "\u{200b}",
        "<p>",
        "</p>",
        "data",
        "é",
        "one two three four five six seven eight nine ten",
    ];
    let n = rng.random_range(0..4000);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(PIECES.choose(rng).unwrap());
        if rng.random_bool(0.6) {
            s.push(' ');
        }
    }
    s
}

// ---------------------------------------------------------------- 4

fn vocab_oracle() -> Outcome {
    let mut rng = rng_for(4, "acceptance.vocab");
    let mut checked_tokens = 0usize;
    for corpus_no in 0..50 {
        let distinct = rng.random_range(1..=1500);
        let lexicon: Vec<String> = (0..distinct).map(|i| format!("t{i:x}")).collect();
        let n_tokens = rng.random_range(1..=100_000usize);
        // Skewed draws so frequency ties and long tails both occur.
        let mut texts = Vec::new();
        let mut left = n_tokens;
        while left > 0 {
            let len = rng.random_range(1..=40).min(left);
            left -= len;
            let sentence: Vec<String> = (0..len)
                .map(|_| {
                    let u: f64 = rng.random();
                    lexicon[((u * u * u) * distinct as f64) as usize].clone()
                })
                .collect();
            texts.push(TokenizedText {
                sentences: vec![sentence],
            });
        }
        let max_size = rng.random_range(1..=distinct + 10);
        let vocab = ok(build_vocab(texts.iter(), max_size))?;

        // Brute force: count by linear scan, then rank each token by the
        // number of tokens that beat it.
        let all: Vec<&str> = texts.iter().flat_map(|t| t.tokens()).collect();
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for t in &all {
            *counts.entry(t).or_insert(0) += 1;
        }
        let items: Vec<(&str, u64)> = counts.into_iter().collect();
        let mut selected: Vec<(usize, &str, u64)> = Vec::new();
        for &(t, c) in &items {
            let rank = items
                .iter()
                .filter(|&&(u, d)| d > c || (d == c && u < t))
                .count();
            if rank < max_size {
                selected.push((rank, t, c));
            }
        }
        selected.sort();
        let want: Vec<&str> = selected.iter().map(|s| s.1).collect();
        ensure!(
            vocab.tokens() == want.as_slice(),
            "corpus {corpus_no}: selection differs"
        );
        for &(_, t, c) in &selected {
            ensure!(
                vocab.count(t) == Some(c),
                "corpus {corpus_no}: count of {t}"
            );
        }
        let covered: u64 = selected.iter().map(|s| s.2).sum();
        ensure!(
            vocab.covered_occurrences() == covered,
            "corpus {corpus_no}: covered"
        );
        ensure!(
            vocab.total_occurrences() == all.len() as u64,
            "corpus {corpus_no}: total"
        );
        ensure!(
            vocab.coverage_ratio() == num_rational::Ratio::new(covered, all.len() as u64),
            "corpus {corpus_no}: coverage"
        );
        checked_tokens += all.len();
    }
    Ok(format!(
        "50 corpora, {checked_tokens} tokens, selection/counts/coverage exact"
    ))
}

// ---------------------------------------------------------------- 5

fn overfit_eight() -> Outcome {
    let mut cfg = RunConfig::desk();
    cfg.deterministic = true;
    cfg.pretrain_iterations = 2000;
    let (pairs, _) = ok(generate_synthetic_corpus(
        3,
        derive_seed(cfg.seed, "overfit"),
        &SynthOptions::default(),
    ))?;
    let pairs = &pairs[..8];
    let vocab = ok(build_vocab(pairs.iter().map(|p| &p.text), cfg.vocab_max))?;
    let (net, params) = ok(initial_model(&cfg, &vocab))?;
    let data = ok(make_samples(pairs, &vocab, &net.cfg, None))?;
    let ck = ok(pretrain_autoencoder(
        &net,
        params,
        &data,
        &cfg.train(Regime::PretrainAe),
        None,
    ))?;
    let last = ck.history.last().ok_or("no history")?;
    let mse = last.image_mse.unwrap();
    let cos = last.text_cosine.unwrap();
    // Trailing windows: the last 1000 iterations as four blocks of 250.
    let combined: Vec<f64> = ck.history.iter().map(|r| r.combined.unwrap()).collect();
    let per_block = 250 / cfg.log_interval as usize;
    let tail = &combined[combined.len() - 4 * per_block..];
    let blocks: Vec<f64> = tail
        .chunks(per_block)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let monotone = blocks
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + WINDOW_SLACK));
    let detail = format!(
        "image_mse {mse:.4} (<= 0.02), text_cosine {cos:.4} (<= 0.10), trailing 250-iteration means {:?}",
        blocks.iter().map(|b| format!("{b:.4}")).collect::<Vec<_>>()
    );
    ensure!(mse <= 0.02 && cos <= 0.10 && monotone, "{detail}");
    Ok(detail)
}

/// Relative rise tolerated between consecutive trailing windows.
const WINDOW_SLACK: f64 = 0.01;

// ---------------------------------------------------------------- 6, 7

struct RegimeRun {
    accuracy: HashMap<String, String>,
    transfer: num_rational::Ratio<u64>,
}

fn regime_run(dir: &Path) -> Result<RegimeRun, String> {
    let mut cfg = RunConfig::desk();
    cfg.deterministic = true;
    let per_class = 200 + cfg.test_per_class;
    let (mut pairs, _) = ok(generate_synthetic_corpus(
        per_class,
        derive_seed(cfg.seed, "synth"),
        &SynthOptions::default(),
    ))?;
    ok(split_dataset(
        &mut pairs,
        cfg.test_per_class,
        derive_seed(cfg.seed, "split"),
    ))?;
    let train: Vec<_> = pairs
        .iter()
        .filter(|p| p.split == Split::Train)
        .cloned()
        .collect();
    let test: Vec<_> = pairs
        .iter()
        .filter(|p| p.split == Split::Test)
        .cloned()
        .collect();
    ensure!(
        train.len() == 600 && test.len() == 150,
        "split sizes {} / {}",
        train.len(),
        test.len()
    );
    let vocab = ok(build_vocab(train.iter().map(|p| &p.text), cfg.vocab_max))?;
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    fs::write(dir.join("vocab.tsv"), vocab.to_tsv()).map_err(|e| e.to_string())?;
    let (net, params) = ok(initial_model(&cfg, &vocab))?;
    let train = ok(make_samples(&train, &vocab, &net.cfg, None))?;
    let test = ok(make_samples(&test, &vocab, &net.cfg, None))?;

    let pre = ok(pretrain_autoencoder(
        &net,
        params.clone(),
        &train,
        &cfg.train(Regime::PretrainAe),
        Some(&dir.join("pretrain")),
    ))?;
    let mut reports = Vec::new();
    for regime in [Regime::ClScratch, Regime::ClFreeze, Regime::ClTransfer] {
        let init = regime.needs_init().then_some(&pre);
        let out = dir.join(regime.tag());
        let ck = ok(train_classifier(
            &net,
            params.clone(),
            &train,
            &cfg.train(regime),
            init,
            Some(&out),
        ))?;
        reports.push(ok(evaluate_regime(
            &net,
            &ck.params,
            &test,
            regime.tag(),
            Some(&out),
        ))?);
    }
    let cmp = compare_regimes(&reports);
    ok(cmp.write(dir))?;
    let transfer = reports
        .iter()
        .find(|r| r.regime.as_deref() == Some("cl_transfer"))
        .map(|r| r.accuracy)
        .ok_or("no transfer report")?;
    Ok(RegimeRun {
        accuracy: cmp
            .rows
            .iter()
            .map(|r| (r.regime.clone(), r.accuracy.clone()))
            .collect(),
        transfer,
    })
}

fn end_to_end(dir: &Path) -> Outcome {
    let run = regime_run(dir)?;
    for tag in ["cl_scratch", "cl_freeze", "cl_transfer"] {
        for f in [
            "report.json",
            "report.md",
            "predictions.jsonl",
            "params.bin",
        ] {
            ensure!(dir.join(tag).join(f).is_file(), "{tag}/{f} missing");
        }
    }
    ensure!(
        dir.join("comparison.md").is_file() && dir.join("comparison.json").is_file(),
        "comparison missing"
    );
    let acc = |t: &str| run.accuracy[t].clone();
    let ordering = format!(
        "transfer >= freeze: {}, transfer >= scratch: {} (reference 80.33 / 77.33 / 77.00, not asserted)",
        acc("cl_transfer").parse::<f64>().unwrap() >= acc("cl_freeze").parse::<f64>().unwrap(),
        acc("cl_transfer").parse::<f64>().unwrap() >= acc("cl_scratch").parse::<f64>().unwrap(),
    );
    let detail = format!(
        "accuracy transfer {} (>= 90.00), freeze {}, scratch {}; {ordering}",
        acc("cl_transfer"),
        acc("cl_freeze"),
        acc("cl_scratch")
    );
    ensure!(run.transfer >= num_rational::Ratio::new(9, 10), "{detail}");
    Ok(detail)
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(first: &Path, second: &Path) -> Outcome {
    if !first.join("comparison.json").is_file() {
        regime_run(first)?;
    }
    regime_run(second)?;
    let a = files_under(first);
    let b = files_under(second);
    ensure!(a == b, "file sets differ: {a:?} vs {b:?}");
    let mut bytes = 0usize;
    for f in &a {
        let x = fs::read(first.join(f)).map_err(|e| e.to_string())?;
        let y = fs::read(second.join(f)).map_err(|e| e.to_string())?;
        ensure!(x == y, "{} differs", f.display());
        bytes += x.len();
    }
    Ok(format!(
        "{} files, {bytes} bytes identical across reruns",
        a.len()
    ))
}

// ---------------------------------------------------------------- 8

fn parser_fixtures() -> Outcome {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut counts = Vec::new();
    let mut golden = None;
    for (name, want) in [
        ("article_a.xml", 3),
        ("article_b.xml", 5),
        ("article_c.xml", 3),
    ] {
        let xml = fs::read(root.join(name)).map_err(|e| e.to_string())?;
        let (doc, _) = ok(absnet::corpus::parse_article(&xml))?;
        let (pairs, _) = absnet::corpus::extract_pairs(&doc, 60, Default::default());
        ensure!(
            pairs.len() == want,
            "{name}: {} pairs, expected {want}",
            pairs.len()
        );
        counts.push(pairs.len());
        if let Some(p) = pairs.iter().find(|p| p.pair_id == "A-f1-p4") {
            golden = Some(p.text.clone());
        }
    }
    let golden = golden.ok_or("golden pair A-f1-p4 missing")?;
    let want = TokenizedText::from_sentences(&[
        &["temperature", "profile", "across", "the", "plate"][..],
        &[
            "as", "seen", "in", "fig", "1", "the", "kink", "sharpens", "when", "the", "ratio",
            "grows",
        ][..],
    ]);
    ensure!(golden == want, "golden pair tokens {:?}", golden.sentences);
    Ok(format!(
        "pairs per article {counts:?} (total {}), golden pair token-exact",
        counts.iter().sum::<usize>()
    ))
}

// ---------------------------------------------------------------- 9

fn freeze_contract() -> Outcome {
    let mut cfg = RunConfig::desk();
    cfg.deterministic = true;
    cfg.train_iterations = 30;
    cfg.pretrain_iterations = 5;
    let (pairs, _) = ok(generate_synthetic_corpus(
        4,
        derive_seed(cfg.seed, "freeze"),
        &SynthOptions::default(),
    ))?;
    let vocab = ok(build_vocab(pairs.iter().map(|p| &p.text), cfg.vocab_max))?;
    let (net, params) = ok(initial_model(&cfg, &vocab))?;
    let data = ok(make_samples(&pairs, &vocab, &net.cfg, None))?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pre = ok(pretrain_autoencoder(
        &net,
        params.clone(),
        &data,
        &cfg.train(Regime::PretrainAe),
        None,
    ))?;
    let encoder_bytes = |p: &ParameterStore<f32>| -> Vec<(String, Vec<u8>)> {
        p.entries()
            .iter()
            .filter(|e| AbsNet::is_encoder_param(&e.name))
            .map(|e| {
                (
                    e.name.clone(),
                    e.value.iter().flat_map(|v| v.to_le_bytes()).collect(),
                )
            })
            .collect()
    };
    let before = encoder_bytes(&pre.params);
    let mut out = Vec::new();
    for regime in [Regime::ClFreeze, Regime::ClTransfer] {
        let dir = tmp.path().join(regime.tag());
        ok(train_classifier(
            &net,
            params.clone(),
            &data,
            &cfg.train(regime),
            Some(&pre),
            Some(&dir),
        ))?;
        let saved = ok(load_checkpoint::<f32>(&dir))?;
        let after = encoder_bytes(&saved.params);
        let changed = before
            .iter()
            .zip(&after)
            .filter(|(a, b)| a.1 != b.1)
            .count();
        out.push(changed);
    }
    ensure!(out[0] == 0, "cl_freeze changed {} encoder tensors", out[0]);
    ensure!(
        out[1] > 0,
        "cl_transfer left every encoder tensor unchanged"
    );
    Ok(format!(
        "cl_freeze: 0 of {n} encoder tensors changed; cl_transfer: {} of {n} changed",
        out[1],
        n = before.len()
    ))
}

// ----------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ABSNET_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let selected = |n: u32| only.as_ref().is_none_or(|o| o.contains(&n));
    let scratch = tempfile::tempdir().expect("temp dir");
    let run1 = scratch.path().join("run1");
    let run2 = scratch.path().join("run2");

    let criteria: Vec<(u32, &str, u64, Box<dyn Fn() -> Outcome>)> = vec![
        (1, "metric oracle", 1, Box::new(metric_oracle)),
        (2, "gradient suite", 120, Box::new(gradient_suite)),
        (
            3,
            "shape/invariant suite",
            60,
            Box::new(shapes_and_invariants),
        ),
        (4, "vocabulary oracle", 30, Box::new(vocab_oracle)),
        (5, "overfit-8 capacity probe", 600, Box::new(overfit_eight)),
        (
            6,
            "end-to-end regime run",
            2700,
            Box::new(|| end_to_end(&run1)),
        ),
        (
            7,
            "determinism",
            2700,
            Box::new(|| determinism(&run1, &run2)),
        ),
        (8, "parser fixtures", 10, Box::new(parser_fixtures)),
        (9, "freeze contract", 120, Box::new(freeze_contract)),
    ];
    let mut failures = 0;
    for (n, name, budget, f) in &criteria {
        if !selected(*n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let in_budget = took <= Duration::from_secs(*budget);
        let (status, detail) = match (&result, in_budget) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over runtime budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "criterion {n} {status} {name}: {detail} [{:.1}s of {budget}s]",
            took.as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
}
