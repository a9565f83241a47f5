#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_suma");

/// Small settings so every subcommand finishes in seconds.
pub const TINY: &str = "
corpus.docs = 300
tokenizer.vocab_size = 300
encoder.d_model = 32
encoder.n_heads = 4
encoder.mlp_hidden = 128
localizer.items = 20
localizer.k = 16
analyze.items = 16
analyze.ks = 8,16
sweep.d_model = 32
synth.n_stimuli = 40
synth.n_channels = 4
synth.n_subjects = 3
decoder.d_model = 16
decoder.heads = 2
decoder.k = 16
decoder.context = 16
decoder.steps = 20
decoder.epochs = 1
decoder.warmup = 5
decoder.eval_interval = 10
behave.words = 300
";

pub fn suma(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env("SUMA_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

pub fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs every subcommand under the tiny config into `root`.
pub fn run_all(root: &Path, threads: Option<&str>) {
    let cfg = root.join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    let dataset = root.join("synth/seed0/manifest.json");
    let dataset = dataset.to_str().unwrap().to_string();
    let mut runs: Vec<Vec<&str>> = vec![
        vec!["synth", "--seed", "0"],
        vec!["tokenize-train"],
        vec!["localize", "--seed", "0,1"],
        vec!["align", "--dataset", &dataset, "--seed", "0,1"],
        vec!["analyze"],
        vec!["sweep", "--heads", "1,2,4", "--dataset", &dataset, "--seed", "0,1"],
        vec!["train-decoder"],
        vec!["behave"],
        vec!["flops"],
    ];
    for args in runs.iter_mut() {
        args.extend(["--config", &cfg]);
        if let Some(t) = threads {
            args.extend(["--threads", t]);
        }
        let o = suma(args, root);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}


/// Byte comparison of two run roots. Temp-dir prefixes that the runs were
/// handed as inputs are stripped from manifests before comparing.
pub fn compare_runs(a: &Path, b: &Path) -> Result<usize, String> {
    let (fa, fb) = (files(a), files(b));
    if fa.keys().ne(fb.keys()) {
        return Err("runs produced different file sets".into());
    }
    let strip = |raw: &[u8]| {
        String::from_utf8_lossy(raw)
            .replace(a.to_str().unwrap(), "")
            .replace(b.to_str().unwrap(), "")
    };
    for (path, bytes) in &fa {
        if path.ends_with("tiny.cfg") {
            continue;
        }
        let other = &fb[path];
        let same = if path.file_name().is_some_and(|n| n == "manifest.json") {
            strip(bytes) == strip(other)
        } else {
            bytes == other
        };
        if !same {
            return Err(format!("{} differs", path.display()));
        }
    }
    Ok(fa.len())
}
