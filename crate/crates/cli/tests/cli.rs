use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_absnet");
const QUICK: &[&str] = &[
    "--deterministic",
    "--set",
    "pretrain_iterations=2",
    "--set",
    "train_iterations=2",
    "--set",
    "checkpoint_interval=0",
];

fn absnet(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("ABSNET_PROFILE")
        .output()
        .expect("binary runs")
}

fn quick(args: &[&str]) -> Output {
    let all: Vec<&str> = args.iter().chain(QUICK).copied().collect();
    absnet(&all)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path) {
    let o = quick(&["synth", p(dir), "--per-class", "3", "--test-per-class", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = quick(&["vocab", p(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn help_lists_every_subcommand_flag() {
    let o = absnet(&["--help"]);
    assert!(o.status.success());
    let help = String::from_utf8(o.stdout).unwrap();
    let index = help
        .split("Flags by command:")
        .nth(1)
        .expect("flag index present");
    for (sub, flags) in [
        ("synth", &["--per-class", "--test-per-class"][..]),
        ("vocab", &["--max"]),
        ("pretrain", &["--out"]),
        ("train", &["--regime", "--init", "--out"]),
        ("eval", &["--ckpt", "--out"]),
        ("predict", &["--ckpt", "--image", "--text", "--features"]),
        ("gradcheck", &["--block"]),
        ("dump-recon", &["--ckpt", "--n", "--dataset", "--out"]),
    ] {
        let line = index
            .lines()
            .find(|l| l.trim_start().starts_with(&format!("{sub} ")))
            .unwrap_or_else(|| panic!("no flag line for {sub}"));
        for f in flags {
            assert!(line.contains(f), "{sub} line lacks {f}: {line}");
        }
    }
    for g in [
        "--config",
        "--set",
        "--profile",
        "--seed",
        "--deterministic",
        "--threads",
    ] {
        assert!(help.contains(g), "missing {g}");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(absnet(&["synth", "x", "--bogus"]).status.code(), Some(1));
}

#[test]
fn bad_override_is_a_usage_error() {
    let o = absnet(&[
        "--set",
        "no_such_key=1",
        "gradcheck",
        "--block",
        "classifier",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = absnet(&["--set", "d_img=100", "--set", "d_txt=100", "gradcheck"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn freeze_without_init_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = quick(&["train", p(dir.path()), "--regime", "freeze"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--init"), "{}", stderr(&o));
}

#[test]
fn eval_on_unlabelled_test_pair_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let o = quick(&["train", p(dir.path()), "--regime", "scratch"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let pairs = dir.path().join("pairs.jsonl");
    let src = std::fs::read_to_string(&pairs).unwrap();
    let mut done = false;
    let edited: Vec<String> = src
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if !done && v["split"] == "test" {
                v.as_object_mut().unwrap().remove("label");
                done = true;
            }
            v.to_string()
        })
        .collect();
    assert!(done);
    std::fs::write(&pairs, edited.join("\n") + "\n").unwrap();

    let ckpt = dir.path().join("runs/cl_scratch");
    let o = quick(&["eval", p(dir.path()), "--ckpt", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = quick(&["pretrain", p(&dir.path().join("absent"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pipeline_wiring() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path();
    synth(ds);
    assert!(ds.join("vocab.tsv").is_file());

    let o = quick(&["pretrain", p(ds)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let init = ds.join("runs/pretrain_ae");
    for f in [
        "manifest.json",
        "params.bin",
        "config.json",
        "history.jsonl",
        "vocab.tsv",
    ] {
        assert!(init.join(f).is_file(), "pretrain lacks {f}");
    }

    for regime in ["freeze", "transfer"] {
        let o = quick(&["train", p(ds), "--regime", regime, "--init", p(&init)]);
        assert!(o.status.success(), "{regime}: {}", stderr(&o));
        let run = ds.join(format!("runs/cl_{regime}"));
        for f in ["report.json", "report.md", "predictions.jsonl"] {
            assert!(run.join(f).is_file(), "{regime} lacks {f}");
        }
    }

    let a = ds.join("runs/cl_freeze");
    let b = ds.join("runs/cl_transfer");
    let out = ds.join("cmp");
    let o = quick(&[
        "eval",
        p(ds),
        "--ckpt",
        p(&a),
        "--ckpt",
        p(&b),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap())
            .unwrap();
    assert_eq!(cmp["rows"].as_array().unwrap().len(), 2);

    let text = ds.join("t.txt");
    std::fs::write(&text, "a red circle sits near the top.").unwrap();
    let image = std::fs::read_dir(ds.join("images"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let o = quick(&[
        "predict",
        "--ckpt",
        p(&b),
        "--image",
        p(&image),
        "--text",
        p(&text),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let total: f64 = v["probabilities"]
        .as_object()
        .unwrap()
        .values()
        .map(|x| x.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-4);

    let recon = ds.join("recon");
    let o = quick(&[
        "dump-recon",
        "--ckpt",
        p(&init),
        "--n",
        "2",
        "--dataset",
        p(ds),
        "--out",
        p(&recon),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pngs = std::fs::read_dir(&recon).unwrap().filter(|e| {
        e.as_ref()
            .unwrap()
            .path()
            .extension()
            .is_some_and(|x| x == "png")
    });
    assert_eq!(pngs.count(), 4);
}

#[test]
fn ingest_fixtures() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = absnet(&["ingest", p(&fixtures), p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pairs = std::fs::read_to_string(out.join("pairs.jsonl")).unwrap();
    assert_eq!(pairs.lines().count(), 11);
    let warnings = std::fs::read_to_string(out.join("warnings.jsonl")).unwrap();
    assert!(warnings.contains("MissingFigurePayload"));
}
