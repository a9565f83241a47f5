//! Acceptance criteria, one result line each on stderr.
//!
//! Every criterion runs even when an earlier one fails. The test fails if any
//! criterion fails except those listed in `DOCUMENTED_FAILURES`, which are
//! still executed and reported as FAIL.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use suma_core::alignment::{
    linear_predictivity, normalize_score, run_benchmark, ConsistencyCache, ControlCondition, FeatureModel, Metric,
    PredictivityOptions,
};
use suma_core::analyses::{
    generate_conditions_excluding, pattern_from_features, profile_from_features, ConditionFeatures, EncoderFeatures,
    ProfileResult,
};
use suma_core::decoder::{
    behavioral_alignment, grad_check, perplexity, planted_reading_times, token_stream, train, word_surprisals,
    Decoder, DecoderConfig, FeatureSource, InputSource, LanguageModel, LrSchedule, PreparedSplit, ReadingRow,
    ReadingTimeDataset, TrainConfig, UnigramModel,
};
use suma_core::encoder::{
    aggregate, multihead_attention, Aggregation, AttentionWeights, Component, Depth, Encoder, EncoderConfig,
    UnitShape,
};
use suma_core::localizer::{
    generate_localizer_stimuli, localize, localize_scores, planted_selectivity_scores, rank_encoder_units,
    LocalizeOptions,
};
use suma_core::numerics::{linear_cka, rdm_similarity, ridge_fit, welch_t};
use suma_core::synth::synthetic_suite;
use suma_core::tokenizer::{bpe_train, Tokenizer, WordTokenizer};
use suma_core::{seeds, text, RealMatrix};

/// Criteria that do not hold in this implementation; see the README.
const DOCUMENTED_FAILURES: &[u32] = &[9, 12];

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn center_columns(m: &RealMatrix) -> RealMatrix {
    let n = m.rows() as f64;
    let means: Vec<f64> = (0..m.cols()).map(|j| (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n).collect();
    RealMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j) - means[j])
}

/// Conjugate gradient on `(XᵀX + λI) b = Xᵀy`, iterated to machine precision.
fn cg_ridge(x: &RealMatrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let d = x.cols();
    let apply = |v: &[f64]| -> Vec<f64> {
        let xv: Vec<f64> = (0..x.rows()).map(|i| x.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect();
        (0..d)
            .map(|j| (0..x.rows()).map(|i| x.get(i, j) * xv[i]).sum::<f64>() + lambda * v[j])
            .collect()
    };
    let rhs: Vec<f64> = (0..d).map(|j| (0..x.rows()).map(|i| x.get(i, j) * y[i]).sum()).collect();
    let mut b = vec![0.0; d];
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..10 * d {
        if rr.sqrt() < 1e-15 {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..d {
            b[j] += alpha * p[j];
            r[j] -= alpha * ap[j];
        }
        let next: f64 = r.iter().map(|v| v * v).sum();
        for j in 0..d {
            p[j] = r[j] + next / rr * p[j];
        }
        rr = next;
    }
    b
}

fn c01_ridge_oracle() -> Outcome {
    let mut rng = seeds::stream(1, "acceptance.ridge");
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(20..60);
        let d = rng.random_range(2..12);
        let lambda = 10f64.powf(rng.random_range(-2.0..2.0));
        let x = gaussian(&mut rng, n, d);
        let y = gaussian(&mut rng, n, 2);
        let fit = ridge_fit(&x, &y, lambda).unwrap();
        let xc = center_columns(&x);
        let yc = center_columns(&y);
        for v in 0..2 {
            let col: Vec<f64> = (0..n).map(|i| yc.get(i, v)).collect();
            let oracle = cg_ridge(&xc, &col, lambda);
            let got: Vec<f64> = (0..d).map(|j| fit.coefficients.get(j, v)).collect();
            worst = worst.max(max_abs_diff(&got, &oracle));
        }
    }
    outcome(worst <= 1e-8, format!("max coefficient gap {worst:.2e} over 50 systems"))
}

/// Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(rng: &mut impl Rng, d: usize) -> RealMatrix {
    let g = gaussian(rng, d, d);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| g.get(i, j)).collect();
        for q in &cols {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        cols.push(v);
    }
    RealMatrix::from_fn(d, d, |i, j| cols[j][i])
}

fn c02_metric_identities() -> Outcome {
    let mut rng = seeds::stream(2, "acceptance.metrics");
    let x = gaussian(&mut rng, 40, 12);
    let z = gaussian(&mut rng, 40, 7);
    let q = random_orthogonal(&mut rng, 12);
    let xq = x.matmul(&q).unwrap();
    let cka_self = linear_cka(&x, &x).unwrap();
    let rdm_self = rdm_similarity(&x, &x).unwrap();
    let rot = (linear_cka(&x, &z).unwrap() - linear_cka(&xq, &z).unwrap()).abs();
    let rot_self = (linear_cka(&x, &xq).unwrap() - 1.0).abs();
    let pass = (cka_self - 1.0).abs() <= 1e-10 && (rdm_self - 1.0).abs() <= 1e-10 && rot <= 1e-8 && rot_self <= 1e-8;
    outcome(
        pass,
        format!("cka(X,X)-1 = {:.1e}, rdm(X,X)-1 = {:.1e}, rotation gap {rot:.1e}", cka_self - 1.0, rdm_self - 1.0),
    )
}

fn c03_welch_oracle() -> Outcome {
    let (a, b) = ([2.0, 4.0, 6.0], [1.0, 3.0, 5.0]);
    let r = welch_t(&a, &b).unwrap();
    // means differ by 1, both variances 4: t = 1/sqrt(4/3 + 4/3), dof = (8/3)² / (2·(4/3)²/2)
    let t = 1.0 / (8.0f64 / 3.0).sqrt();
    let dof = (8.0f64 / 3.0).powi(2) / ((4.0f64 / 3.0).powi(2) / 2.0 * 2.0);
    let pass = (r.t - t).abs() <= 1e-10 && (r.dof - dof).abs() <= 1e-10 && (r.t - 0.6124).abs() < 1e-4 && dof == 4.0;
    outcome(pass, format!("t = {:.10}, dof = {:.10}", r.t, r.dof))
}

fn c04_localization_recovery() -> Outcome {
    let shape = UnitShape {
        layers: 2,
        taps: vec![Component::Ln1, Component::Attn],
        d_model: 250,
    };
    let mut worst: f64 = 1.0;
    for seed in SEEDS {
        let mut rng = seeds::stream(seed, "acceptance.planted-units");
        let mut planted: Vec<usize> = Vec::new();
        while planted.len() < 50 {
            let u = rng.random_range(0..shape.n_units());
            if !planted.contains(&u) {
                planted.push(u);
            }
        }
        let (s, n) = planted_selectivity_scores(seed, 240, shape.n_units(), &planted, 3.0);
        let mask = localize_scores(&s, &n, &shape, 50).unwrap();
        let found: HashSet<usize> = mask.unit_indices().into_iter().collect();
        let hit = planted.iter().filter(|u| found.contains(u)).count() as f64 / 50.0;
        worst = worst.min(hit);
    }
    outcome(worst >= 0.99, format!("worst recovery {:.1}% over 5 seeds", 100.0 * worst))
}

fn c05_encoder_cases() -> Outcome {
    let mut rng = seeds::stream(5, "acceptance.encoder");
    let d = 16;
    let w = AttentionWeights {
        wq: gaussian(&mut rng, d, d),
        wk: gaussian(&mut rng, d, d),
        wv: gaussian(&mut rng, d, d),
        wo: gaussian(&mut rng, d, d),
    };
    let x = gaussian(&mut rng, 1, d);
    let att = multihead_attention(&x, &w, 4, true).unwrap();
    let ovx = x.matmul(&w.wv).unwrap().matmul(&w.wo).unwrap();
    let single = max_abs_diff(att.data(), ovx.data());

    let mut cfg = EncoderConfig::full_block(300, d, 4, 5);
    cfg.causal = false;
    cfg.positional_encoding = false;
    cfg.aggregation = Aggregation::Mean;
    let enc = Encoder::new(cfg.clone()).unwrap();
    let ids: Vec<u32> = (0..12).map(|_| rng.random_range(0..300)).collect();
    let mut perm = ids.clone();
    perm.reverse();
    perm.swap(0, 5);
    let a = aggregate(&enc.forward_ids(&ids).unwrap(), Aggregation::Mean).unwrap();
    let b = aggregate(&enc.forward_ids(&perm).unwrap(), Aggregation::Mean).unwrap();
    let invariance = max_abs_diff(a.data(), b.data());

    let mut adaptive = EncoderConfig::suma(300, d, 4, 5);
    adaptive.depth = Depth::Adaptive;
    let enc = Encoder::new(adaptive).unwrap();
    let depth_ok = [1usize, 255, 256, 257, 512, 513, 700].iter().all(|&n| {
        let ids: Vec<u32> = (0..n).map(|i| (i % 300) as u32).collect();
        enc.forward_ids(&ids).unwrap().layers() == n.div_ceil(256)
    });
    outcome(
        single <= 1e-12 && invariance <= 1e-10 && depth_ok,
        format!("single-token gap {single:.1e}, permutation gap {invariance:.1e}, adaptive depth exact: {depth_ok}"),
    )
}

fn c06_linear_predictivity() -> Outcome {
    let opts = PredictivityOptions::default();
    let (mut worst_planted, mut worst_noise): (f64, f64) = (1.0, 0.0);
    for seed in SEEDS {
        let mut rng = seeds::stream(seed, "acceptance.predictivity");
        let x = gaussian(&mut rng, 200, 20);
        let w = gaussian(&mut rng, 20, 10);
        let y = x.matmul(&w).unwrap();
        worst_planted = worst_planted.min(linear_predictivity(&x, &y, &opts).unwrap().score);
        let noise = gaussian(&mut rng, 200, 10);
        worst_noise = worst_noise.max(linear_predictivity(&x, &noise, &opts).unwrap().score.abs());
    }
    outcome(
        worst_planted >= 0.99 && worst_noise <= 0.1,
        format!("planted min {worst_planted:.4}, noise max |score| {worst_noise:.4}"),
    )
}

fn c07_normalization() -> Outcome {
    let table: [(f64, f64, f64); 8] = [
        (0.2, 0.4, 0.5),
        (-0.1, 0.4, 0.0),
        (0.4, 0.2, 2.0),
        (0.0, 0.7, 0.0),
        (0.3, 0.3, 1.0),
        (-2.0, 0.9, 0.0),
        (0.9, 0.3, 0.9 / 0.3),
        (0.05, 0.6, 0.05 / 0.6),
    ];
    let bad = table
        .iter()
        .filter(|(raw, c, want)| normalize_score(*raw, *c).unwrap().to_bits() != want.to_bits())
        .count();
    let rejects = normalize_score(0.5, 0.0).is_err() && normalize_score(0.5, -0.1).is_err();
    outcome(bad == 0 && rejects, format!("{} rows exact, {bad} mismatches", table.len()))
}

fn bpe_toy() -> Tokenizer {
    let corpus = text::corpus(&mut seeds::stream(99, "corpus"), 2000, 4, 14);
    Tokenizer::Bpe(bpe_train(&corpus, 1000).unwrap())
}

fn c08_control_ordering(tok: &Tokenizer) -> Outcome {
    let Tokenizer::Bpe(v) = tok else { unreachable!() };
    let opts = PredictivityOptions::default();
    let cache = ConsistencyCache::default();
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let enc = Encoder::new(EncoderConfig::suma(v.len(), 128, 16, seed)).unwrap();
        let stim = generate_localizer_stimuli(seed, 120, 10, tok).unwrap();
        let mask = localize(&enc, tok, &stim, 256).unwrap();
        let model = FeatureModel {
            encoder: &enc,
            tokenizer: tok,
            mask: Some(&mask),
            aggregation: enc.config().aggregation,
        };
        let mut ok = true;
        for ds in synthetic_suite(seed).unwrap() {
            let score = |c| {
                run_benchmark(&model, &ds, Metric::Linear, c, &opts, seed, &cache)
                    .unwrap()
                    .normalized
            };
            let (orig, random) = (score(ControlCondition::Original), score(ControlCondition::RandomSameLength));
            notes.push(format!("{orig:.3}>{random:.3}"));
            ok &= orig > random;
        }
        wins += ok as usize;
    }
    outcome(wins == 5, format!("{wins}/5 seeds; ORIGINAL>RANDOM per dataset: {}", notes.join(" ")))
}

/// (univariate S-highest/N-lowest, lexical > syntactic) for one seed.
fn condition_orderings(tok: &Tokenizer, seed: u64) -> (bool, bool) {
    let mut cfg = match tok {
        Tokenizer::Bpe(v) => EncoderConfig::suma(v.len(), 128, 16, seed),
        Tokenizer::Word(_) => EncoderConfig::suma(1, 128, 16, seed).with_word_embeddings(),
    };
    cfg.seed = seed;
    let enc = Encoder::new(cfg).unwrap();
    let stim = generate_localizer_stimuli(seed, 120, 10, tok).unwrap();
    let ranking = rank_encoder_units(&enc, tok, &stim, LocalizeOptions::default()).unwrap();
    let exclude = stim.sentences.iter().cloned().collect();
    let conds = generate_conditions_excluding(seed + 1000, 64, 10, &exclude).unwrap();
    let extractor = EncoderFeatures {
        encoder: &enc,
        tokenizer: tok,
        mask: Some(&ranking),
    };
    // top 64 of 512 units
    let feats = ConditionFeatures::compute(&extractor, &conds).unwrap().prefix(64).unwrap();
    let profile = profile_from_features(&[(seed, feats.clone())], "localized", "").unwrap();
    let pattern = pattern_from_features(&feats, seed, 10).unwrap();
    (
        ProfileResult::s_highest_n_lowest(&profile.means),
        pattern.lexical > pattern.syntactic,
    )
}

fn c09_condition_replication(tok: &Tokenizer) -> Outcome {
    let word = Tokenizer::Word(WordTokenizer);
    let (mut uni, mut multi, mut word_fails) = (0, 0, 0);
    for seed in SEEDS {
        let (u, m) = condition_orderings(tok, seed);
        uni += u as usize;
        multi += m as usize;
        let (wu, wm) = condition_orderings(&word, seed);
        word_fails += !(wu && wm) as usize;
    }
    outcome(
        uni == 5 && multi == 5 && word_fails >= 3,
        format!("BPE univariate {uni}/5, multivariate {multi}/5; word control fails an ordering in {word_fails}/5 (need >= 3)"),
    )
}

fn c10_grad_check() -> Outcome {
    let mut rng = seeds::stream(10, "acceptance.grad-check");
    let mut cfg = DecoderConfig::new(13, 8, 2, InputSource::LocalizedUnits, 10);
    cfg.n_blocks = 2;
    cfg.context_length = 6;
    let dec = Decoder::new(cfg, 5).unwrap();
    let feats = gaussian(&mut rng, 6, 5);
    let targets: Vec<u32> = (0..6).map(|_| rng.random_range(0..13)).collect();
    let (_, grads) = dec.loss_and_grads(&feats, &targets).unwrap();
    let rep = grad_check(dec.params(), &grads, |p| dec.loss_with(p, &feats, &targets), 300, 10).unwrap();
    outcome(
        rep.max_relative_error <= 1e-4 && rep.checked >= 200,
        format!("max relative error {:.2e} over {} coordinates", rep.max_relative_error, rep.checked),
    )
}

fn c11_schedule() -> Outcome {
    let s = LrSchedule {
        peak: 5e-3,
        warmup: 500,
        total: 10_000,
    };
    let (a, b, c) = (s.lr(0), s.lr(500), s.lr(10_000));
    outcome(a == 0.0 && b == 5e-3 && c == 0.0, format!("lr(0) = {a}, lr(500) = {b}, lr(final) = {c}"))
}

struct ToyCorpus {
    tok: Tokenizer,
    vocab: usize,
    train: Vec<u32>,
    valid: Vec<u32>,
}

fn toy_corpus() -> ToyCorpus {
    let docs = text::corpus(&mut seeds::stream(7, "corpus"), 1500, 4, 14);
    let v = bpe_train(&docs[..1000], 400).unwrap();
    let vocab = v.len();
    let tok = Tokenizer::Bpe(v);
    ToyCorpus {
        train: token_stream(&tok, &docs[..1200]),
        valid: token_stream(&tok, &docs[1200..]),
        tok,
        vocab,
    }
}

const TOY_D: usize = 32;
const TOY_CTX: usize = 32;

fn toy_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 100,
        batch_size: 16,
        peak_lr: 5e-3,
        warmup_steps: 30,
        eval_interval: 100,
        max_steps: Some(400),
        seed,
        ..TrainConfig::default()
    }
}

/// Single-pass frozen encoder, `k = d_model` so neither variant needs a projection.
fn toy_decoder(toy: &ToyCorpus, input: InputSource, seed: u64) -> (FeatureSource, Decoder, f64, PreparedSplit) {
    let mut ec = EncoderConfig::suma(toy.vocab, TOY_D, 4, seed);
    ec.depth = Depth::Fixed(1);
    let enc = Encoder::new(ec).unwrap();
    let mask = (input == InputSource::LocalizedUnits).then(|| {
        let stim = generate_localizer_stimuli(seed, 120, 10, &toy.tok).unwrap();
        localize(&enc, &toy.tok, &stim, TOY_D).unwrap()
    });
    let source = FeatureSource::new(enc, input, mask).unwrap();
    let mut dc = DecoderConfig::new(toy.vocab, TOY_D, 4, input, seed);
    dc.context_length = TOY_CTX;
    let mut dec = Decoder::new(dc, source.dim()).unwrap();
    assert!(dec.projection().is_none());
    let tr = PreparedSplit::new(&source, &toy.train, TOY_CTX).unwrap();
    let va = PreparedSplit::new(&source, &toy.valid, TOY_CTX).unwrap();
    let out = train(&mut dec, &tr, &va, &toy_train_config(seed)).unwrap();
    (source, dec, out.best_valid_loss, va)
}

fn c12_localized_vs_embeddings(toy: &ToyCorpus) -> Outcome {
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let (_, e, emb, _) = toy_decoder(toy, InputSource::Embeddings, seed);
        let (_, l, loc, _) = toy_decoder(toy, InputSource::LocalizedUnits, seed);
        assert_eq!(e.params().n_scalars(), l.params().n_scalars());
        wins += (loc <= emb) as usize;
        notes.push(format!("{loc:.3}/{emb:.3}"));
    }
    outcome(
        wins >= 4,
        format!("localized <= embeddings in {wins}/5 seeds (localized/embeddings valid loss: {})", notes.join(" ")),
    )
}

fn c13_perplexity(toy: &ToyCorpus) -> Outcome {
    let (_, dec, _, va) = toy_decoder(toy, InputSource::LocalizedUnits, 0);
    let ppl = perplexity(&dec, &va).unwrap();
    let targets: Vec<u32> = va.targets.iter().flatten().copied().collect();
    let uni = UnigramModel::fit(&toy.train, toy.vocab).unwrap().perplexity(&targets).unwrap();
    outcome(ppl < uni, format!("decoder {ppl:.2} vs unigram {uni:.2}"))
}

fn stories(seed: u64, words: usize) -> ReadingTimeDataset {
    let mut rng = seeds::stream(seed, "acceptance.stories");
    let mut rows = Vec::new();
    let mut story = 0;
    while rows.len() < words {
        let mut index = 0;
        for s in text::corpus(&mut rng, 25, 5, 14) {
            for w in text::words(&s) {
                if rows.len() < words {
                    rows.push(ReadingRow {
                        story_id: format!("s{story}"),
                        word_index: index,
                        word: w.to_string(),
                        mean_rt_ms: 0.0,
                    });
                    index += 1;
                }
            }
        }
        story += 1;
    }
    ReadingTimeDataset { rows }
}

fn plant(ds: &mut ReadingTimeDataset, lm: &LanguageModel<'_>, vocab: &suma_core::tokenizer::Vocab, r: f64, seed: u64) {
    let (scores, _, _) = word_surprisals(lm, vocab, ds).unwrap();
    let s: Vec<f64> = scores.iter().map(|w| w.surprisal).collect();
    let rts = planted_reading_times(&s, r, seed).unwrap();
    for (w, rt) in scores.iter().zip(rts) {
        let row = ds
            .rows
            .iter_mut()
            .find(|row| row.story_id == w.story_id && row.word_index == w.word_index)
            .unwrap();
        row.mean_rt_ms = rt;
    }
}

fn c14_behavioral_oracle(toy: &ToyCorpus) -> Outcome {
    let Tokenizer::Bpe(vocab) = &toy.tok else { unreachable!() };
    let enc = Encoder::new(EncoderConfig::suma(toy.vocab, 16, 2, 14)).unwrap();
    let source = FeatureSource::new(enc, InputSource::FinalLayer, None).unwrap();
    let mut dc = DecoderConfig::new(toy.vocab, 16, 2, InputSource::FinalLayer, 14);
    dc.context_length = 16;
    let mut dec = Decoder::new(dc, 16).unwrap();
    let tr = PreparedSplit::new(&source, &toy.train, 16).unwrap();
    let va = PreparedSplit::new(&source, &toy.valid, 16).unwrap();
    let cfg = TrainConfig {
        max_steps: Some(60),
        warmup_steps: 6,
        eval_interval: 60,
        ..toy_train_config(14)
    };
    train(&mut dec, &tr, &va, &cfg).unwrap();
    let lm = LanguageModel::new(&dec, &source);

    let mut worst: f64 = 0.0;
    let mut rs = Vec::new();
    for seed in SEEDS {
        let mut ds = stories(seed, 5000);
        plant(&mut ds, &lm, vocab, 0.5, seed);
        let res = behavioral_alignment(&lm, vocab, &ds).unwrap();
        worst = worst.max((res.r - 0.5).abs());
        rs.push(format!("{:.3}", res.r));
    }
    let mut exact = stories(99, 1000);
    plant(&mut exact, &lm, vocab, 1.0, 99);
    let r1 = behavioral_alignment(&lm, vocab, &exact).unwrap().r;
    outcome(
        worst <= 0.05 && (r1 - 1.0).abs() < 1e-9,
        format!("planted 0.5 recovered as [{}], exact construction r = {r1:.12}", rs.join(", ")),
    )
}

fn c15_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    common::run_all(a.path(), None);
    common::run_all(b.path(), Some("1"));
    match common::compare_runs(a.path(), b.path()) {
        Ok(n) => outcome(true, format!("{n} files byte-identical across reruns (default and 1 thread)")),
        Err(e) => outcome(false, e),
    }
}

#[test]
fn acceptance_criteria() {
    let bpe = bpe_toy();
    let toy = toy_corpus();
    let criteria: Vec<(u32, &str, Duration, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "ridge oracle", Duration::from_secs(1), Box::new(c01_ridge_oracle)),
        (2, "metric identities", Duration::from_secs(1), Box::new(c02_metric_identities)),
        (3, "welch oracle", Duration::MAX, Box::new(c03_welch_oracle)),
        (4, "localization recovery", Duration::from_secs(30), Box::new(c04_localization_recovery)),
        (5, "encoder analytic cases", Duration::MAX, Box::new(c05_encoder_cases)),
        (6, "linear predictivity", Duration::from_secs(60), Box::new(c06_linear_predictivity)),
        (7, "normalization formula", Duration::MAX, Box::new(c07_normalization)),
        (8, "control ordering", Duration::from_secs(300), Box::new(|| c08_control_ordering(&bpe))),
        (9, "condition-level replication", Duration::from_secs(600), Box::new(|| c09_condition_replication(&bpe))),
        (10, "gradient check", Duration::from_secs(60), Box::new(c10_grad_check)),
        (11, "schedule fixture", Duration::MAX, Box::new(c11_schedule)),
        (12, "localized vs embeddings decoder", Duration::from_secs(1200), Box::new(|| c12_localized_vs_embeddings(&toy))),
        (13, "perplexity sanity", Duration::from_secs(300), Box::new(|| c13_perplexity(&toy))),
        (14, "behavioral oracle", Duration::from_secs(60), Box::new(|| c14_behavioral_oracle(&toy))),
        (15, "determinism", Duration::MAX, Box::new(c15_determinism)),
    ];
    let mut err = std::io::stderr();
    let mut unexpected = Vec::new();
    for (id, name, limit, run) in &criteria {
        let t0 = Instant::now();
        let o = run();
        let elapsed = t0.elapsed();
        let in_time = elapsed <= *limit;
        let pass = o.pass && in_time;
        let documented = DOCUMENTED_FAILURES.contains(id);
        let status = match (pass, documented) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented)",
            (false, false) => "FAIL",
        };
        let budget = if *limit == Duration::MAX {
            String::new()
        } else {
            format!(" / {}s", limit.as_secs())
        };
        let late = if in_time { "" } else { " [over time budget]" };
        // written to the raw handle so the lines show without --nocapture
        writeln!(
            err,
            "[acceptance] C{id:02} {status:<17} {name}: {} ({:.1}s{budget}){late}",
            o.detail,
            elapsed.as_secs_f64()
        )
        .unwrap();
        if !pass && !documented {
            unexpected.push(*id);
        }
        if pass && documented {
            writeln!(err, "[acceptance] C{id:02} now passes; remove it from DOCUMENTED_FAILURES").unwrap();
        }
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
