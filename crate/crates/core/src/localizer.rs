//! Functional localization: contrast sentences against non-word strings with a
//! per-unit Welch's t-test and keep the top-k most selective units.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::seq::index;
use rand_distr::{Distribution, Normal};

use crate::config::content_hash;
use crate::encoder::{Aggregation, ActivationRecord, Component, Encoder, UnitCoord, UnitShape};
use crate::numerics::welch_t;
use crate::tokenizer::Tokenizer;
use crate::{par, seeds, text, Error, RealMatrix, Result};

/// Sentences and token-length-matched non-word strings.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizerStimuli {
    pub sentences: Vec<String>,
    pub nonwords: Vec<String>,
}

impl LocalizerStimuli {
    pub fn new(sentences: Vec<String>, nonwords: Vec<String>) -> Result<Self> {
        if sentences.len() != nonwords.len() {
            return Err(Error::precondition(format!(
                "{} sentences but {} non-word strings",
                sentences.len(),
                nonwords.len()
            )));
        }
        Ok(Self { sentences, nonwords })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn content_hash(&self) -> String {
        let mut s = String::new();
        for x in self.sentences.iter().chain(&self.nonwords) {
            s.push_str(x);
            s.push('\n');
        }
        content_hash(s.as_bytes())
    }
}

/// Template-grammar sentences of `length` words paired with pronounceable
/// non-word strings whose token count under `tokenizer` is within ±1.
pub fn generate_localizer_stimuli(
    seed: u64,
    n_items: usize,
    length: usize,
    tokenizer: &Tokenizer,
) -> Result<LocalizerStimuli> {
    if n_items < 2 || length == 0 {
        return Err(Error::precondition("need at least 2 items of positive length"));
    }
    let mut rng = seeds::stream(seed, "localizer.stimuli");
    let lexicon = text::lexicon();
    let mut sentences = Vec::with_capacity(n_items);
    let mut nonwords = Vec::with_capacity(n_items);
    for _ in 0..n_items {
        let s = text::sentence(&mut rng, length.max(3));
        let target = tokenizer.encode(&s).len();
        let mut matched = None;
        for _ in 0..500 {
            let mut words: Vec<String> = Vec::new();
            let mut count = 0;
            while count + 1 < target {
                words.push(text::nonword(&mut rng, &lexicon));
                count = tokenizer.encode(&words.join(" ")).len();
            }
            if words.is_empty() {
                words.push(text::syllable(&mut rng));
                count = tokenizer.encode(&words[0]).len();
            }
            if count.abs_diff(target) <= 1 {
                matched = Some(words.join(" "));
                break;
            }
        }
        let n = matched.ok_or_else(|| {
            Error::precondition(format!("could not token-match a non-word string to {s:?}"))
        })?;
        sentences.push(s);
        nonwords.push(n);
    }
    LocalizerStimuli::new(sentences, nonwords)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskEntry {
    pub coord: UnitCoord,
    pub t_value: f64,
}

/// Where a mask came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSource {
    Localized,
    Random,
}

impl MaskSource {
    pub fn label(self) -> &'static str {
        match self {
            MaskSource::Localized => "localized",
            MaskSource::Random => "random",
        }
    }
}

/// Ordered set of selected units, most selective first.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitMask {
    entries: Vec<MaskEntry>,
    shape: UnitShape,
    source: MaskSource,
    seed: u64,
    config_hash: String,
}

impl UnitMask {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[MaskEntry] {
        &self.entries
    }

    pub fn shape(&self) -> &UnitShape {
        &self.shape
    }

    pub fn source(&self) -> MaskSource {
        self.source
    }

    pub fn coords(&self) -> impl Iterator<Item = UnitCoord> + '_ {
        self.entries.iter().map(|e| e.coord)
    }

    /// Flat unit indices in mask order.
    pub fn unit_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| self.shape.index(e.coord).expect("mask coordinates are validated"))
            .collect()
    }

    /// The first `k` entries.
    pub fn prefix(&self, k: usize) -> Result<UnitMask> {
        if k > self.entries.len() {
            return Err(Error::OutOfRange {
                index: k,
                limit: self.entries.len(),
            });
        }
        Ok(UnitMask {
            entries: self.entries[..k].to_vec(),
            ..self.clone()
        })
    }

    pub fn with_metadata(mut self, seed: u64, config_hash: &str) -> Self {
        self.seed = seed;
        self.config_hash = config_hash.to_string();
        self
    }

    /// CSV with a commented header carrying k, seed, encoder-config hash and layout.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# k={}", self.k()).unwrap();
        writeln!(s, "# seed={}", self.seed).unwrap();
        writeln!(s, "# config_hash={}", self.config_hash).unwrap();
        writeln!(s, "# source={}", self.source.label()).unwrap();
        writeln!(s, "# layers={}", self.shape.layers).unwrap();
        writeln!(
            s,
            "# taps={}",
            self.shape.taps.iter().map(|t| t.label()).collect::<Vec<_>>().join(",")
        )
        .unwrap();
        writeln!(s, "# d_model={}", self.shape.d_model).unwrap();
        s.push_str("layer,tap,channel,t_value\n");
        for e in &self.entries {
            writeln!(
                s,
                "{},{},{},{}",
                e.coord.layer,
                self.shape.taps[e.coord.tap].label(),
                e.coord.channel,
                e.t_value
            )
            .unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut header: HashMap<&str, &str> = HashMap::new();
        let mut body = Vec::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix("# ") {
                if let Some((k, v)) = h.split_once('=') {
                    header.insert(k, v);
                }
            } else if !line.is_empty() {
                body.push(line);
            }
        }
        let field = |k: &str| header.get(k).copied().ok_or_else(|| Error::parse(format!("mask header lacks {k}")));
        let num = |k: &str| -> Result<usize> {
            field(k)?.parse().map_err(|_| Error::parse(format!("bad {k} in mask header")))
        };
        let taps = field("taps")?
            .split(',')
            .filter(|t| !t.is_empty())
            .map(Component::parse)
            .collect::<Result<Vec<_>>>()?;
        let shape = UnitShape {
            layers: num("layers")?,
            taps,
            d_model: num("d_model")?,
        };
        let source = match field("source")? {
            "localized" => MaskSource::Localized,
            "random" => MaskSource::Random,
            other => return Err(Error::parse(format!("unknown mask source {other}"))),
        };
        if body.first() != Some(&"layer,tap,channel,t_value") {
            return Err(Error::parse("missing mask column header"));
        }
        let mut entries = Vec::with_capacity(body.len() - 1);
        for line in &body[1..] {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::parse(format!("bad mask row {line:?}")));
            }
            let tap_c = Component::parse(cols[1])?;
            let tap = shape
                .taps
                .iter()
                .position(|t| *t == tap_c)
                .ok_or_else(|| Error::parse(format!("tap {} not in layout", cols[1])))?;
            let coord = UnitCoord {
                layer: cols[0].parse().map_err(|_| Error::parse("bad layer"))?,
                tap,
                channel: cols[2].parse().map_err(|_| Error::parse("bad channel"))?,
            };
            shape.index(coord)?;
            let t_value: f64 = cols[3].parse().map_err(|_| Error::parse("bad t_value"))?;
            entries.push(MaskEntry { coord, t_value });
        }
        let k = num("k")?;
        if k != entries.len() {
            return Err(Error::parse(format!("header says k={k} but {} rows", entries.len())));
        }
        let mask = UnitMask {
            entries,
            shape,
            source,
            seed: field("seed")?.parse().map_err(|_| Error::parse("bad seed"))?,
            config_hash: field("config_hash")?.to_string(),
        };
        mask.check_unique()?;
        Ok(mask)
    }

    fn check_unique(&self) -> Result<()> {
        let mut seen = vec![false; self.shape.n_units()];
        for i in self.unit_indices() {
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::parse(format!("duplicate unit {i} in mask")));
            }
        }
        Ok(())
    }
}

/// Per-stimulus, per-unit scalars: stimuli × units, each unit reduced over
/// the stimulus's token positions.
pub fn unit_scores(
    encoder: &Encoder,
    tokenizer: &Tokenizer,
    texts: &[String],
    reduction: Aggregation,
) -> Result<(RealMatrix, UnitShape)> {
    let rows = par::try_map_range(texts.len(), |i| {
        let toks = tokenizer.encode(&texts[i]);
        let rec = encoder.forward(&toks)?;
        Ok::<_, Error>((rec.shape(), rec.aggregate_units(reduction, 0..rec.positions())?))
    })?;
    let shape = rows
        .first()
        .map(|r| r.0.clone())
        .ok_or_else(|| Error::precondition("no stimuli"))?;
    if rows.iter().any(|r| r.0 != shape) {
        return Err(Error::dims("stimuli produced different unit layouts (adaptive depth?)"));
    }
    let data: Vec<Vec<f64>> = rows.into_iter().map(|r| r.1).collect();
    Ok((RealMatrix::from_rows(&data)?, shape))
}

/// Full ranking of units by Welch t (sentences − non-words), descending;
/// ties broken by (layer, tap, channel).
pub fn rank_units(sentences: &RealMatrix, nonwords: &RealMatrix, shape: &UnitShape) -> Result<UnitMask> {
    let n_units = shape.n_units();
    if sentences.cols() != n_units || nonwords.cols() != n_units {
        return Err(Error::dims(format!(
            "score matrices have {} and {} units, layout has {n_units}",
            sentences.cols(),
            nonwords.cols()
        )));
    }
    if sentences.rows() < 2 || nonwords.rows() < 2 {
        return Err(Error::precondition(format!(
            "need at least 2 stimuli per condition, got {} and {}",
            sentences.rows(),
            nonwords.rows()
        )));
    }
    let st = sentences.transpose();
    let nt = nonwords.transpose();
    let t_values = par::try_map_range(n_units, |u| {
        // sorting makes the sums independent of stimulus presentation order
        let mut a = st.row(u).to_vec();
        let mut b = nt.row(u).to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        welch_t(&a, &b).map(|w| w.t)
    })?;
    let mut order: Vec<usize> = (0..n_units).collect();
    order.sort_by(|&i, &j| t_values[j].total_cmp(&t_values[i]).then(i.cmp(&j)));
    Ok(UnitMask {
        entries: order
            .into_iter()
            .map(|u| MaskEntry {
                coord: shape.coord(u),
                t_value: t_values[u],
            })
            .collect(),
        shape: shape.clone(),
        source: MaskSource::Localized,
        seed: 0,
        config_hash: String::new(),
    })
}

/// Top-k units from precomputed per-stimulus scores.
pub fn localize_scores(sentences: &RealMatrix, nonwords: &RealMatrix, shape: &UnitShape, k: usize) -> Result<UnitMask> {
    if k > shape.n_units() {
        return Err(Error::OutOfRange {
            index: k,
            limit: shape.n_units(),
        });
    }
    rank_units(sentences, nonwords, shape)?.prefix(k)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizeOptions {
    /// How a unit's response to a multi-token stimulus is reduced to one scalar.
    pub reduction: Aggregation,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        Self {
            reduction: Aggregation::Mean,
        }
    }
}

/// Full ranking for an encoder; `localize` takes a prefix of it.
pub fn rank_encoder_units(
    encoder: &Encoder,
    tokenizer: &Tokenizer,
    stimuli: &LocalizerStimuli,
    opts: LocalizeOptions,
) -> Result<UnitMask> {
    if stimuli.len() < 2 {
        return Err(Error::precondition("need at least 2 stimuli per condition"));
    }
    let (s, shape) = unit_scores(encoder, tokenizer, &stimuli.sentences, opts.reduction)?;
    let (n, nshape) = unit_scores(encoder, tokenizer, &stimuli.nonwords, opts.reduction)?;
    if shape != nshape {
        return Err(Error::dims("sentence and non-word layouts differ"));
    }
    Ok(rank_units(&s, &n, &shape)?.with_metadata(encoder.config().seed, &encoder.config().hash()))
}

/// Top-k language-selective units with token-mean reduction.
pub fn localize(encoder: &Encoder, tokenizer: &Tokenizer, stimuli: &LocalizerStimuli, k: usize) -> Result<UnitMask> {
    localize_with(encoder, tokenizer, stimuli, k, LocalizeOptions::default())
}

pub fn localize_with(
    encoder: &Encoder,
    tokenizer: &Tokenizer,
    stimuli: &LocalizerStimuli,
    k: usize,
    opts: LocalizeOptions,
) -> Result<UnitMask> {
    let shape = encoder.unit_shape(1);
    if k > shape.n_units() {
        return Err(Error::OutOfRange {
            index: k,
            limit: shape.n_units(),
        });
    }
    rank_encoder_units(encoder, tokenizer, stimuli, opts)?.prefix(k)
}

/// Masked features of one record in mask order, aggregated over `span`.
pub fn extract_span(
    record: &ActivationRecord,
    mask: &UnitMask,
    aggregation: Aggregation,
    span: std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    let shape = record.shape();
    if shape.layers != mask.shape.layers || shape.taps != mask.shape.taps || shape.d_model != mask.shape.d_model {
        return Err(Error::dims("mask layout does not match the activation record"));
    }
    let units = record.aggregate_units(aggregation, span)?;
    mask.entries
        .iter()
        .map(|e| shape.index(e.coord).map(|i| units[i]))
        .collect()
}

/// Masked features of one record over all positions.
pub fn extract(record: &ActivationRecord, mask: &UnitMask, aggregation: Aggregation) -> Result<Vec<f64>> {
    extract_span(record, mask, aggregation, 0..record.positions())
}

/// Masked per-position activations: positions × k.
pub fn extract_positions(record: &ActivationRecord, mask: &UnitMask) -> Result<RealMatrix> {
    let mut out = RealMatrix::zeros(record.positions(), mask.k());
    for (j, c) in mask.coords().enumerate() {
        record.shape().index(c)?;
        for p in 0..record.positions() {
            out.set(p, j, record.vector(c.layer, c.tap, p)[c.channel]);
        }
    }
    Ok(out)
}

/// Uniformly random k units without replacement.
pub fn random_mask(seed: u64, k: usize, shape: &UnitShape) -> Result<UnitMask> {
    let n = shape.n_units();
    if k > n {
        return Err(Error::OutOfRange { index: k, limit: n });
    }
    let mut rng = seeds::stream(seed, "localizer.random-mask");
    let picked = index::sample(&mut rng, n, k);
    Ok(UnitMask {
        entries: picked
            .into_iter()
            .map(|u| MaskEntry {
                coord: shape.coord(u),
                t_value: 0.0,
            })
            .collect(),
        shape: shape.clone(),
        source: MaskSource::Random,
        seed,
        config_hash: String::new(),
    })
}

/// Synthetic per-stimulus scores with planted sentence-selective units.
///
/// Every unit is standard normal noise; `planted` units get `+effect` on
/// sentence stimuli.
pub fn planted_selectivity_scores(
    seed: u64,
    n_per_condition: usize,
    n_units: usize,
    planted: &[usize],
    effect: f64,
) -> (RealMatrix, RealMatrix) {
    let mut rng = seeds::stream(seed, "localizer.planted");
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let mut s = RealMatrix::from_fn(n_per_condition, n_units, |_, _| unit.sample(&mut rng));
    let n = RealMatrix::from_fn(n_per_condition, n_units, |_, _| unit.sample(&mut rng));
    for r in 0..n_per_condition {
        for &u in planted {
            let v = s.get(r, u) + effect;
            s.set(r, u, v);
        }
    }
    (s, n)
}

/// In-memory (and optionally on-disk) cache of full unit rankings keyed by
/// a content hash of (encoder config, tokenizer, stimuli, reduction).
#[derive(Debug, Default)]
pub struct LocalizationCache {
    memory: Mutex<HashMap<String, UnitMask>>,
    dir: Option<PathBuf>,
}

impl LocalizationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            memory: Mutex::default(),
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn key(encoder: &Encoder, tokenizer: &Tokenizer, stimuli: &LocalizerStimuli, opts: LocalizeOptions) -> String {
        content_hash(
            format!(
                "{}|{}|{}|{}",
                encoder.config().hash(),
                tokenizer.fingerprint(),
                stimuli.content_hash(),
                opts.reduction.label()
            )
            .as_bytes(),
        )
    }

    pub fn localize(
        &self,
        encoder: &Encoder,
        tokenizer: &Tokenizer,
        stimuli: &LocalizerStimuli,
        k: usize,
        opts: LocalizeOptions,
    ) -> Result<UnitMask> {
        let key = Self::key(encoder, tokenizer, stimuli, opts);
        if let Some(m) = self.memory.lock().expect("cache lock").get(&key) {
            return m.prefix(k);
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("ranking-{key}.csv")));
        let ranking = match path.as_ref().filter(|p| p.exists()) {
            Some(p) => UnitMask::from_csv(&std::fs::read_to_string(p)?)?,
            None => {
                let r = rank_encoder_units(encoder, tokenizer, stimuli, opts)?;
                if let Some(p) = &path {
                    std::fs::write(p, r.to_csv())?;
                }
                r
            }
        };
        let out = ranking.prefix(k);
        self.memory.lock().expect("cache lock").insert(key, ranking);
        out
    }

    pub fn len(&self) -> usize {
        self.memory.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
