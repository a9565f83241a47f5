//! Effective configuration: built-in defaults, then the config file, then
//! `--set` pairs, then subcommand flags.

use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context as _};
use suma_core::config::KvConfig;
use suma_core::encoder::EncoderConfig;

/// Keys every run starts from. Encoder keys come from the default SUMA layout
/// minus `encoder.seed`, which always follows the run seed.
fn defaults() -> KvConfig {
    let mut kv = KvConfig::parse(
        "
        corpus.path =
        corpus.seed = 99
        corpus.docs = 2000
        corpus.min_words = 4
        corpus.max_words = 14
        tokenizer.kind = bpe
        tokenizer.vocab =
        tokenizer.vocab_size = 1000
        localizer.items = 120
        localizer.length = 10
        localizer.k = 64
        align.metric = linear
        align.controls = ORIGINAL,SHUFFLED,RANDOM_SAME_LENGTH
        align.units = localized
        align.folds = 10
        align.inner_folds = 5
        analyze.items = 64
        analyze.length = 10
        analyze.ks = 64,128,256
        analyze.splits = 10
        sweep.d_model = 512
        synth.n_stimuli = 200
        synth.n_channels = 16
        synth.n_subjects = 4
        synth.signal = reference
        synth.snr = 1
        synth.latent_dim = 8
        synth.binary = false
        decoder.input = localized-units
        decoder.encoder_depth = 1
        decoder.blocks = 1
        decoder.d_model = 64
        decoder.k = 64
        decoder.heads = 8
        decoder.context = 64
        decoder.lr = 0.005
        decoder.batch = 16
        decoder.warmup = 100
        decoder.epochs = 40
        decoder.steps = 500
        decoder.eval_interval = 100
        decoder.valid_fraction = 0.2
        behave.reading_times =
        behave.checkpoint =
        behave.planted_r = 0.5
        behave.words = 5000
        behave.story_sentences = 20
        flops.seq_lens = 128,512,2048
        ",
    )
    .expect("built-in defaults parse");
    let enc = EncoderConfig::suma(1000, 128, 16, 0).to_kv();
    for key in enc.keys().filter(|k| *k != "encoder.seed" && *k != "encoder.vocab_size") {
        kv.set(key, enc.get_str(key).unwrap_or_default());
    }
    kv
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub kv: KvConfig,
}

impl Settings {
    pub fn resolve(file: Option<&Path>, sets: &[String], flags: &[(&str, String)]) -> anyhow::Result<Self> {
        let mut kv = defaults();
        if let Some(path) = file {
            let from_file = KvConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
            check_keys(&kv, &from_file)?;
            kv.merge(&from_file);
        }
        let mut cli = KvConfig::new();
        for pair in sets {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {pair:?}"))?;
            cli.set(k.trim(), v.trim());
        }
        for (k, v) in flags {
            cli.set(k, v);
        }
        check_keys(&kv, &cli)?;
        kv.merge(&cli);
        Ok(Self { kv })
    }

    pub fn str(&self, key: &str) -> &str {
        self.kv.get_str(key).unwrap_or_default()
    }

    /// `None` for an empty value.
    pub fn opt_str(&self, key: &str) -> Option<&str> {
        Some(self.str(key)).filter(|s| !s.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> anyhow::Result<T> {
        self.kv
            .get::<T>(key)?
            .ok_or_else(|| anyhow!("missing config key {key}"))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> anyhow::Result<Vec<T>> {
        self.str(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| anyhow!("bad entry {s:?} in {key}")))
            .collect()
    }
}

fn check_keys(known: &KvConfig, incoming: &KvConfig) -> anyhow::Result<()> {
    for k in incoming.keys() {
        if known.get_str(k).is_none() {
            bail!("unknown config key {k:?}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "localizer.k = 10\nalign.metric = cka\n").unwrap();
        let s = Settings::resolve(Some(&file), &["localizer.k=20".into()], &[("align.metric", "rdm".into())]).unwrap();
        assert_eq!(s.get::<usize>("localizer.k").unwrap(), 20);
        assert_eq!(s.str("align.metric"), "rdm");
        assert_eq!(s.str("encoder.d_model"), "128");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(Settings::resolve(None, &["encoder.dmodel=3".into()], &[]).is_err());
        assert!(Settings::resolve(None, &["novalue".into()], &[]).is_err());
    }
}
