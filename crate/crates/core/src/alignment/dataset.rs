use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::content_hash;
use crate::{Error, RealMatrix, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    pub text: String,
    pub group: u32,
    /// Position within the group as declared by the dataset.
    pub position: u32,
}

/// Stimuli paired row-for-row with a stimuli × channels response matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StimulusResponseDataset {
    pub name: String,
    pub stimuli: Vec<Stimulus>,
    pub responses: RealMatrix,
    /// Subject id of every response channel.
    pub channel_subject: Vec<String>,
    /// Number of preceding same-group stimuli prepended as model context.
    pub context_window: usize,
}

/// On-disk description of a dataset; paths are relative to the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub context_window: usize,
    pub stimuli: String,
    pub responses: String,
    /// Present when `responses` is a flat f64 binary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responses_shape: Option<String>,
    pub channel_subjects: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ShapeSidecar {
    rows: usize,
    cols: usize,
    format: String,
}

impl StimulusResponseDataset {
    pub fn new(
        name: impl Into<String>,
        stimuli: Vec<Stimulus>,
        responses: RealMatrix,
        channel_subject: Vec<String>,
        context_window: usize,
    ) -> Result<Self> {
        let d = Self {
            name: name.into(),
            stimuli,
            responses,
            channel_subject,
            context_window,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stimuli.len() != self.responses.rows() {
            return Err(Error::dims(format!(
                "{} stimuli but {} response rows",
                self.stimuli.len(),
                self.responses.rows()
            )));
        }
        if self.channel_subject.len() != self.responses.cols() {
            return Err(Error::dims(format!(
                "{} channel subject ids for {} channels",
                self.channel_subject.len(),
                self.responses.cols()
            )));
        }
        // groups must occupy contiguous runs
        let mut closed = BTreeSet::new();
        for w in self.stimuli.windows(2) {
            if w[0].group != w[1].group && !closed.insert(w[0].group) {
                return Err(Error::precondition(format!("group {} is not contiguous", w[0].group)));
            }
        }
        if let Some(last) = self.stimuli.last() {
            if closed.contains(&last.group) {
                return Err(Error::precondition(format!("group {} is not contiguous", last.group)));
            }
        }
        Ok(())
    }

    pub fn n_stimuli(&self) -> usize {
        self.stimuli.len()
    }

    /// Distinct subject ids in first-appearance order.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.channel_subject {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        out
    }

    pub fn subject_channels(&self, subject: &str) -> Vec<usize> {
        self.channel_subject
            .iter()
            .enumerate()
            .filter(|(_, s)| s.as_str() == subject)
            .map(|(i, _)| i)
            .collect()
    }

    /// Stable hash over stimuli, responses and subject map.
    pub fn content_hash(&self) -> String {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(self.name.as_bytes());
        bytes.extend_from_slice(&(self.context_window as u64).to_le_bytes());
        for s in &self.stimuli {
            bytes.extend_from_slice(s.text.as_bytes());
            bytes.extend_from_slice(&s.group.to_le_bytes());
            bytes.extend_from_slice(&s.position.to_le_bytes());
        }
        for v in self.responses.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for c in &self.channel_subject {
            bytes.extend_from_slice(c.as_bytes());
            bytes.push(0);
        }
        content_hash(&bytes)
    }

    /// Writes manifest + stimuli CSV + responses (CSV or binary) + channel map into `dir`.
    pub fn write(&self, dir: &Path, binary_responses: bool) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("stimuli.csv"))?;
        w.write_record(["text", "group", "position"])?;
        for s in &self.stimuli {
            w.write_record([s.text.as_str(), &s.group.to_string(), &s.position.to_string()])?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join("channels.csv"))?;
        w.write_record(["channel", "subject"])?;
        for (i, s) in self.channel_subject.iter().enumerate() {
            w.write_record([i.to_string().as_str(), s])?;
        }
        w.flush()?;

        let (responses, responses_shape) = if binary_responses {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("responses.bin"))?);
            for v in self.responses.data() {
                f.write_all(&v.to_le_bytes())?;
            }
            f.flush()?;
            let side = ShapeSidecar {
                rows: self.responses.rows(),
                cols: self.responses.cols(),
                format: "f64-le".into(),
            };
            std::fs::write(dir.join("responses.shape.json"), serde_json::to_string_pretty(&side)? + "\n")?;
            ("responses.bin".to_string(), Some("responses.shape.json".to_string()))
        } else {
            let mut w = csv::Writer::from_path(dir.join("responses.csv"))?;
            let header: Vec<String> = (0..self.responses.cols()).map(|c| format!("ch{c}")).collect();
            w.write_record(&header)?;
            for r in 0..self.responses.rows() {
                w.write_record(self.responses.row(r).iter().map(|v| format!("{v:?}")))?;
            }
            w.flush()?;
            ("responses.csv".to_string(), None)
        };

        let manifest = DatasetManifest {
            name: self.name.clone(),
            context_window: self.context_window,
            stimuli: "stimuli.csv".into(),
            responses,
            responses_shape,
            channel_subjects: "channels.csv".into(),
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(manifest_path)?)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));

        let mut stimuli = Vec::new();
        let mut r = csv::Reader::from_path(base.join(&manifest.stimuli))?;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::parse("stimuli rows need text,group,position"));
            }
            stimuli.push(Stimulus {
                text: rec[0].to_string(),
                group: rec[1].trim().parse().map_err(|_| Error::parse("bad group id"))?,
                position: rec[2].trim().parse().map_err(|_| Error::parse("bad position"))?,
            });
        }

        let mut channel_subject = Vec::new();
        let mut r = csv::Reader::from_path(base.join(&manifest.channel_subjects))?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let ch: usize = rec
                .get(0)
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| Error::parse("bad channel index"))?;
            if ch != i {
                return Err(Error::parse(format!("channel map row {i} names channel {ch}")));
            }
            channel_subject.push(rec.get(1).ok_or_else(|| Error::parse("missing subject"))?.to_string());
        }

        let responses = match &manifest.responses_shape {
            Some(shape_file) => {
                let side: ShapeSidecar = serde_json::from_str(&std::fs::read_to_string(base.join(shape_file))?)?;
                if side.format != "f64-le" {
                    return Err(Error::parse(format!("unsupported response format {}", side.format)));
                }
                let bytes = std::fs::read(base.join(&manifest.responses))?;
                if bytes.len() != side.rows * side.cols * 8 {
                    return Err(Error::parse("response payload does not match its shape"));
                }
                let data = bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                RealMatrix::new(side.rows, side.cols, data)?
            }
            None => {
                let mut rows: Vec<Vec<f64>> = Vec::new();
                let mut r = csv::Reader::from_path(base.join(&manifest.responses))?;
                for rec in r.records() {
                    let rec = rec?;
                    rows.push(
                        rec.iter()
                            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::parse(format!("bad response {v:?}"))))
                            .collect::<Result<_>>()?,
                    );
                }
                RealMatrix::from_rows(&rows)?
            }
        };
        Self::new(manifest.name, stimuli, responses, channel_subject, manifest.context_window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> StimulusResponseDataset {
        let stimuli = (0..4)
            .map(|i| Stimulus {
                text: format!("the dog, number {i}"),
                group: i / 2,
                position: i % 2 + 1,
            })
            .collect();
        let responses = RealMatrix::from_fn(4, 3, |i, j| i as f64 * 0.1 - j as f64 / 3.0);
        StimulusResponseDataset::new("toy", stimuli, responses, vec!["a".into(), "a".into(), "b".into()], 1).unwrap()
    }

    #[test]
    fn round_trip_csv_and_binary() {
        let d = toy();
        for binary in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            let m = d.write(dir.path(), binary).unwrap();
            assert_eq!(StimulusResponseDataset::load(&m).unwrap(), d);
        }
    }

    #[test]
    fn subjects_in_order() {
        let d = toy();
        assert_eq!(d.subjects(), vec!["a", "b"]);
        assert_eq!(d.subject_channels("a"), vec![0, 1]);
    }

    #[test]
    fn rejects_misaligned_and_split_groups() {
        let mut d = toy();
        d.channel_subject.pop();
        assert!(d.validate().is_err());
        let mut d = toy();
        d.stimuli[3].group = 0;
        assert!(d.validate().is_err());
    }
}
