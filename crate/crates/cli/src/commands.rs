use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use serde_json::json;
use suma_core::alignment::{
    run_benchmark, BenchmarkResult, ConsistencyCache, ControlCondition, FeatureModel, Metric, PredictivityOptions,
    StimulusResponseDataset,
};
use suma_core::analyses::{
    generate_conditions_excluding, pattern_from_features, profile_from_features, Condition, ConditionFeatures,
    EncoderFeatures,
};
use suma_core::decoder::{
    behavioral_alignment, perplexity, planted_reading_times, train, word_surprisals, LanguageModel, ParamStore,
    ReadingRow, ReadingTimeDataset, UnigramModel,
};
use suma_core::encoder::{flops_estimate, Depth, Encoder, EncoderConfig};
use suma_core::synth::{generate_synthetic_dataset, synthetic_suite, SignalModel, SynthConfig};
use suma_core::{par, seeds, text};

use crate::output::RunOutput;
use crate::pipeline::{self, decoder_setup, encoder_config, ranking};
use crate::settings::Settings;

pub struct Context {
    command: &'static str,
    settings: Settings,
    seeds: Vec<u64>,
    out: RunOutput,
}

impl Context {
    pub fn new(command: &'static str, settings: Settings, seeds: Vec<u64>, root: &Path) -> anyhow::Result<Self> {
        if seeds.is_empty() {
            bail!("at least one seed is required");
        }
        let out = RunOutput::create(root, command)?;
        Ok(Self {
            command,
            settings,
            seeds,
            out,
        })
    }

    fn finish(self, details: serde_json::Value) -> anyhow::Result<()> {
        let dir = self.out.dir().display().to_string();
        self.out.finish(self.command, &self.settings, &self.seeds, details)?;
        println!("{}: wrote {dir}", self.command);
        Ok(())
    }
}

fn csv(header: &str, rows: &[String]) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

pub fn tokenize_train(mut ctx: Context) -> anyhow::Result<()> {
    let tok = pipeline::tokenizer(&ctx.settings)?;
    let vocab = tok.as_bpe().context("tokenize-train needs tokenizer.kind = bpe")?;
    ctx.out.write("vocab.txt", vocab.to_text())?;
    let details = json!({ "vocab_size": vocab.len(), "fingerprint": tok.fingerprint() });
    ctx.finish(details)
}

pub fn localize(mut ctx: Context) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let tok = pipeline::tokenizer(s)?;
    let k: usize = s.get("localizer.k")?;
    let mut units = 0;
    for &seed in &ctx.seeds {
        let enc = Encoder::new(encoder_config(s, &tok, seed)?)?;
        let (ranked, _) = ranking(s, &enc, &tok, seed)?;
        units = ranked.k();
        ctx.out.write(&format!("mask-seed{seed}.csv"), ranked.prefix(k)?.to_csv())?;
    }
    ctx.finish(json!({ "k": k, "n_units": units, "tokenizer": tok.fingerprint() }))
}

fn datasets(paths: &[PathBuf], seed: u64) -> anyhow::Result<Vec<StimulusResponseDataset>> {
    if paths.is_empty() {
        return Ok(synthetic_suite(seed)?);
    }
    paths
        .iter()
        .map(|p| StimulusResponseDataset::load(p).with_context(|| format!("loading dataset {}", p.display())))
        .collect()
}

fn predictivity_options(s: &Settings) -> anyhow::Result<PredictivityOptions> {
    Ok(PredictivityOptions {
        folds: s.get("align.folds")?,
        inner_folds: s.get("align.inner_folds")?,
        ..PredictivityOptions::default()
    })
}

/// Scores one encoder on every dataset and control condition.
#[allow(clippy::too_many_arguments)]
fn score_encoder(
    s: &Settings,
    enc: &Encoder,
    tok: &suma_core::tokenizer::Tokenizer,
    k: usize,
    sets: &[StimulusResponseDataset],
    controls: &[ControlCondition],
    seed: u64,
    cache: &ConsistencyCache,
) -> anyhow::Result<Vec<BenchmarkResult>> {
    let mask = match s.str("align.units") {
        "localized" => Some(ranking(s, enc, tok, seed)?.0.prefix(k)?),
        "all" => None,
        other => bail!("align.units must be localized or all, got {other:?}"),
    };
    let model = FeatureModel {
        encoder: enc,
        tokenizer: tok,
        mask: mask.as_ref(),
        aggregation: enc.config().aggregation,
    };
    let metric = Metric::parse(s.str("align.metric"))?;
    let opts = predictivity_options(s)?;
    let mut out = Vec::new();
    for ds in sets {
        for &control in controls {
            out.push(
                run_benchmark(&model, ds, metric, control, &opts, seed, cache)
                    .with_context(|| format!("dataset {} control {}", ds.name, control.label()))?,
            );
        }
    }
    Ok(out)
}

pub fn align(mut ctx: Context, paths: &[PathBuf]) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let tok = pipeline::tokenizer(s)?;
    let controls: Vec<ControlCondition> = s
        .list::<String>("align.controls")?
        .iter()
        .map(|c| ControlCondition::parse(c))
        .collect::<Result<_, _>>()?;
    let k: usize = s.get("localizer.k")?;
    let cache = ConsistencyCache::default();
    let mut results = Vec::new();
    for &seed in &ctx.seeds {
        let sets = datasets(paths, seed)?;
        let enc = Encoder::new(encoder_config(s, &tok, seed)?)?;
        results.extend(score_encoder(s, &enc, &tok, k, &sets, &controls, seed, &cache)?);
    }
    let rows: Vec<String> = results.iter().map(BenchmarkResult::csv_row).collect();
    ctx.out.write("results.csv", csv(BenchmarkResult::CSV_HEADER, &rows))?;
    ctx.out.write("results.json", serde_json::to_string_pretty(&results)? + "\n")?;
    let inputs: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    ctx.finish(json!({ "datasets": inputs }))
}

pub fn analyze(mut ctx: Context) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let tok = pipeline::tokenizer(s)?;
    let ks: Vec<usize> = s.list("analyze.ks")?;
    let splits: usize = s.get("analyze.splits")?;
    let mut profile_rows = Vec::new();
    let mut pattern_rows = Vec::new();
    for &seed in &ctx.seeds {
        let enc = Encoder::new(encoder_config(s, &tok, seed)?)?;
        let (ranked, sentences) = ranking(s, &enc, &tok, seed)?;
        let exclude = sentences.into_iter().collect();
        let conds = generate_conditions_excluding(seed, s.get("analyze.items")?, s.get("analyze.length")?, &exclude)?;
        let extractor = EncoderFeatures {
            encoder: &enc,
            tokenizer: &tok,
            mask: Some(&ranked),
        };
        let feats = ConditionFeatures::compute(&extractor, &conds)?;
        for &k in &ks {
            let f = feats.prefix(k)?;
            let p = profile_from_features(&[(seed, f.clone())], "localized", tok.kind().label())?;
            for (i, c) in Condition::ALL.iter().enumerate() {
                profile_rows.push(format!("{seed},{k},{},{:?},{:?}", c.label(), p.means[i], p.sds[i]));
            }
            let m = pattern_from_features(&f, seed, splits)?;
            pattern_rows.push(format!("{seed},{k},{:?},{:?},{}", m.lexical, m.syntactic, m.splits));
        }
    }
    ctx.out.write("profile.csv", csv("seed,k,condition,mean,sd", &profile_rows))?;
    ctx.out.write("pattern.csv", csv("seed,k,lexical,syntactic,splits", &pattern_rows))?;
    ctx.finish(json!({ "tokenizer": tok.kind().label() }))
}

#[derive(Clone, Debug)]
pub enum SweepAxis {
    Heads(Vec<usize>),
    Depth(Vec<usize>),
    K(Vec<usize>),
}

impl SweepAxis {
    fn name(&self) -> &'static str {
        match self {
            SweepAxis::Heads(_) => "heads",
            SweepAxis::Depth(_) => "depth",
            SweepAxis::K(_) => "k",
        }
    }

    fn values(&self) -> &[usize] {
        match self {
            SweepAxis::Heads(v) | SweepAxis::Depth(v) | SweepAxis::K(v) => v,
        }
    }
}

pub fn sweep(mut ctx: Context, axis: SweepAxis, paths: &[PathBuf]) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let tok = pipeline::tokenizer(s)?;
    let base_k: usize = s.get("localizer.k")?;
    let sweep_d: usize = s.get("sweep.d_model")?;
    let cache = ConsistencyCache::default();
    let tasks: Vec<(usize, u64)> = axis
        .values()
        .iter()
        .flat_map(|&v| ctx.seeds.iter().map(move |&seed| (v, seed)))
        .collect();
    // one independent task per (value, seed); results come back in task order
    let per_task = par::try_map_slice(&tasks, |&(v, seed)| -> anyhow::Result<Vec<String>> {
        let mut cfg: EncoderConfig = encoder_config(s, &tok, seed)?;
        let mut k = base_k;
        match axis {
            SweepAxis::Heads(_) => {
                cfg.d_model = sweep_d;
                cfg.mlp_hidden = 4 * sweep_d;
                cfg.n_heads = v;
            }
            SweepAxis::Depth(_) => cfg.depth = Depth::Fixed(v),
            SweepAxis::K(_) => k = v,
        }
        cfg.validate().with_context(|| format!("{} = {v}", axis.name()))?;
        let enc = Encoder::new(cfg)?;
        let sets = datasets(paths, seed)?;
        let results = score_encoder(s, &enc, &tok, k, &sets, &[ControlCondition::Original], seed, &cache)?;
        Ok(results
            .iter()
            .map(|r| {
                format!(
                    "{},{v},{seed},{},{},{:?},{:?},{:?}",
                    axis.name(),
                    r.dataset,
                    r.metric.label(),
                    r.raw,
                    r.consistency,
                    r.normalized
                )
            })
            .collect())
    })?;
    let rows: Vec<String> = per_task.into_iter().flatten().collect();
    ctx.out.write(
        "sweep.csv",
        csv("axis,value,seed,dataset,metric,raw,consistency,normalized", &rows),
    )?;
    let details = json!({ "axis": axis.name(), "values": axis.values() });
    ctx.finish(details)
}

pub fn train_decoder(mut ctx: Context) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let mut rows = Vec::new();
    for &seed in &ctx.seeds {
        let mut setup = decoder_setup(s, seed)?;
        let outcome = train(&mut setup.decoder, &setup.train, &setup.valid, &setup.train_config)?;
        let ppl = perplexity(&setup.decoder, &setup.valid)?;
        let unigram = UnigramModel::fit(&setup.train_tokens, setup.decoder.config().vocab_size)?;
        let valid_targets: Vec<u32> = setup.valid.targets.iter().flatten().copied().collect();
        let uni_ppl = unigram.perplexity(&valid_targets)?;
        ctx.out.write(&format!("curve-seed{seed}.csv"), outcome.curve_csv())?;
        let blob = format!("params-seed{seed}.bin");
        let header = format!("params-seed{seed}.json");
        let meta = json!({
            "decoder": setup.decoder.config(),
            "input_dim": setup.decoder.input_dim(),
            "optimizer": "adam",
            "best_step": outcome.best_step,
        });
        setup.decoder.params().save(&ctx.out.path(&blob), &ctx.out.path(&header), meta)?;
        ctx.out.record(&blob)?;
        ctx.out.record(&header)?;
        rows.push(format!(
            "{seed},{},{},{},{:?},{:?},{:?}",
            setup.decoder.config().input.label(),
            setup.decoder.params().n_scalars(),
            outcome.best_step,
            outcome.best_valid_loss,
            ppl,
            uni_ppl
        ));
    }
    ctx.out.write(
        "metrics.csv",
        csv(
            "seed,input,trainable_params,best_step,best_valid_loss,valid_perplexity,unigram_perplexity",
            &rows,
        ),
    )?;
    ctx.finish(json!({ "optimizer": "adam", "schedule": "linear warmup then linear decay" }))
}

/// Stories of `story_sentences` toy sentences until `words` words are reached.
fn planted_stories(seed: u64, words: usize, story_sentences: usize) -> ReadingTimeDataset {
    let mut rng = seeds::stream(seed, "cli.behave-stories");
    let mut rows = Vec::new();
    let mut story = 0;
    while rows.len() < words {
        let mut index = 0;
        for sentence in text::corpus(&mut rng, story_sentences, 5, 14) {
            for w in text::words(&sentence) {
                if rows.len() == words {
                    break;
                }
                rows.push(ReadingRow {
                    story_id: format!("story{story:03}"),
                    word_index: index,
                    word: w.to_string(),
                    mean_rt_ms: 0.0,
                });
                index += 1;
            }
        }
        story += 1;
    }
    ReadingTimeDataset { rows }
}

pub fn behave(mut ctx: Context) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let mut rows = Vec::new();
    for &seed in &ctx.seeds {
        let mut setup = decoder_setup(s, seed)?;
        match s.opt_str("behave.checkpoint") {
            Some(header) => {
                let header = PathBuf::from(header);
                let blob = header.with_extension("bin");
                let (params, _) = ParamStore::load(&blob, &header)?;
                setup.decoder.set_params(params)?;
            }
            None => {
                train(&mut setup.decoder, &setup.train, &setup.valid, &setup.train_config)?;
            }
        }
        let vocab = setup.tokenizer.as_bpe()?;
        let lm = LanguageModel::new(&setup.decoder, &setup.source);
        let dataset = match s.opt_str("behave.reading_times") {
            Some(path) => ReadingTimeDataset::load(Path::new(path))?,
            None => {
                let mut ds = planted_stories(seed, s.get("behave.words")?, s.get("behave.story_sentences")?);
                let (scores, _, _) = word_surprisals(&lm, vocab, &ds)?;
                let surprisal: Vec<f64> = scores.iter().map(|w| w.surprisal).collect();
                let rts = planted_reading_times(&surprisal, s.get("behave.planted_r")?, seed)?;
                let planted: HashMap<(&str, usize), f64> = scores
                    .iter()
                    .zip(rts)
                    .map(|(w, rt)| ((w.story_id.as_str(), w.word_index), rt))
                    .collect();
                // unscored words keep the baseline reading time
                let filled: Vec<f64> = ds
                    .rows
                    .iter()
                    .map(|r| planted.get(&(r.story_id.as_str(), r.word_index)).copied().unwrap_or(300.0))
                    .collect();
                for (row, rt) in ds.rows.iter_mut().zip(filled) {
                    row.mean_rt_ms = rt;
                }
                ctx.out.write(&format!("reading-times-seed{seed}.csv"), ds.to_csv()?)?;
                ds
            }
        };
        let result = behavioral_alignment(&lm, vocab, &dataset)?;
        let words: Vec<String> = result
            .words
            .iter()
            .map(|w| format!("{},{},{:?},{:?}", w.story_id, w.word_index, w.surprisal, w.mean_rt_ms))
            .collect();
        ctx.out.write(
            &format!("words-seed{seed}.csv"),
            csv("story_id,word_index,surprisal,mean_rt_ms", &words),
        )?;
        rows.push(format!(
            "{seed},{:?},{},{},{}",
            result.r, result.scored, result.misaligned, result.no_context
        ));
    }
    ctx.out.write("behave.csv", csv("seed,r,scored,misaligned,no_context", &rows))?;
    ctx.finish(json!({ "score": "pearson r between summed word surprisal and mean reading time" }))
}

pub fn synth(mut ctx: Context) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let binary: bool = s.get("synth.binary")?;
    for &seed in &ctx.seeds {
        let cfg = SynthConfig {
            name: format!("synth-seed{seed}"),
            seed,
            n_stimuli: s.get("synth.n_stimuli")?,
            n_channels: s.get("synth.n_channels")?,
            n_subjects: s.get("synth.n_subjects")?,
            signal: SignalModel::parse(s.str("synth.signal"))?,
            snr: s.get("synth.snr")?,
            latent_dim: s.get("synth.latent_dim")?,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic_dataset(&cfg)?;
        let rel = format!("seed{seed}");
        ds.write(&ctx.out.path(&rel), binary)?;
        ctx.out.record_dir(&rel)?;
    }
    ctx.finish(json!({}))
}

pub fn flops(mut ctx: Context) -> anyhow::Result<()> {
    let s = &ctx.settings;
    let lens: Vec<usize> = s.list("flops.seq_lens")?;
    let configured = EncoderConfig::from_kv(&s.kv, &EncoderConfig::suma(1, 128, 16, 0))?;
    let models = [
        ("configured", configured),
        ("suma-full-scale", EncoderConfig::suma_full_scale(32_000, 0)),
        ("full-block-full-scale", EncoderConfig::full_block(32_000, 4096, 32, 0)),
    ];
    let mut rows = Vec::new();
    for (name, cfg) in &models {
        for &t in &lens {
            rows.push(format!(
                "{name},{},{},{},{t},{}",
                cfg.d_model,
                cfg.n_heads,
                cfg.passes(t),
                flops_estimate(cfg, t)
            ));
        }
    }
    let body = csv("model,d_model,n_heads,passes,seq_len,flops", &rows);
    print!("{body}");
    ctx.out.write("flops.csv", body)?;
    ctx.finish(json!({}))
}

