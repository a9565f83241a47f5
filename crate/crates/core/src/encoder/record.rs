use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Aggregation, Component};
use crate::{Error, RealMatrix, Result};

/// Unit coordinate: which pass, which tap within the pass, which channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UnitCoord {
    pub layer: usize,
    pub tap: usize,
    pub channel: usize,
}

/// Layout of the units an encoder exposes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitShape {
    pub layers: usize,
    pub taps: Vec<Component>,
    pub d_model: usize,
}

impl UnitShape {
    pub fn n_units(&self) -> usize {
        self.layers * self.taps.len() * self.d_model
    }

    /// Flat index in (layer, tap, channel) lexicographic order.
    pub fn index(&self, c: UnitCoord) -> Result<usize> {
        if c.layer >= self.layers || c.tap >= self.taps.len() || c.channel >= self.d_model {
            return Err(Error::OutOfRange {
                index: c.layer * self.taps.len() * self.d_model + c.tap * self.d_model + c.channel,
                limit: self.n_units(),
            });
        }
        Ok((c.layer * self.taps.len() + c.tap) * self.d_model + c.channel)
    }

    pub fn coord(&self, index: usize) -> UnitCoord {
        let d = self.d_model;
        let per_layer = self.taps.len() * d;
        UnitCoord {
            layer: index / per_layer,
            tap: (index % per_layer) / d,
            channel: index % d,
        }
    }
}

/// Activations at every tap of every pass for every token position.
///
/// Stored flat in (layer, tap, position, channel) order.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationRecord {
    layers: usize,
    taps: Vec<Component>,
    positions: usize,
    d_model: usize,
    data: Vec<f64>,
    /// Residual stream after the last pass (seq × d_model).
    pub final_hidden: RealMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordSidecar {
    format: String,
    order: Vec<String>,
    layers: usize,
    taps: Vec<String>,
    positions: usize,
    d_model: usize,
}

impl ActivationRecord {
    pub(crate) fn new(layers: usize, taps: Vec<Component>, positions: usize, d_model: usize) -> Self {
        let n = layers * taps.len() * positions * d_model;
        Self {
            layers,
            taps,
            positions,
            d_model,
            data: vec![0.0; n],
            final_hidden: RealMatrix::zeros(positions, d_model),
        }
    }

    /// Builds a record from explicit values in (layer, tap, position, channel) order.
    pub fn from_values(
        layers: usize,
        taps: Vec<Component>,
        positions: usize,
        d_model: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != layers * taps.len() * positions * d_model {
            return Err(Error::dims("activation data length does not match its shape"));
        }
        Ok(Self {
            layers,
            taps,
            positions,
            d_model,
            data,
            final_hidden: RealMatrix::zeros(positions, d_model),
        })
    }

    pub(crate) fn write_tap(&mut self, layer: usize, tap: usize, values: &RealMatrix) {
        let start = self.offset(layer, tap, 0);
        self.data[start..start + self.positions * self.d_model].copy_from_slice(values.data());
    }

    #[inline]
    fn offset(&self, layer: usize, tap: usize, pos: usize) -> usize {
        ((layer * self.taps.len() + tap) * self.positions + pos) * self.d_model
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn taps(&self) -> &[Component] {
        &self.taps
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn d_model(&self) -> usize {
        self.d_model
    }

    pub fn shape(&self) -> UnitShape {
        UnitShape {
            layers: self.layers,
            taps: self.taps.clone(),
            d_model: self.d_model,
        }
    }

    pub fn n_units(&self) -> usize {
        self.layers * self.taps.len() * self.d_model
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Activation vector at one (layer, tap, position).
    pub fn vector(&self, layer: usize, tap: usize, pos: usize) -> &[f64] {
        let o = self.offset(layer, tap, pos);
        &self.data[o..o + self.d_model]
    }

    /// One unit's activation at every position.
    pub fn unit_trace(&self, c: UnitCoord) -> Vec<f64> {
        (0..self.positions)
            .map(|p| self.vector(c.layer, c.tap, p)[c.channel])
            .collect()
    }

    /// Aggregates every unit over `span`, returning a flat vector in unit order.
    pub fn aggregate_units(&self, mode: Aggregation, span: Range<usize>) -> Result<Vec<f64>> {
        if span.is_empty() || span.end > self.positions {
            return Err(Error::precondition(format!(
                "aggregation span {span:?} invalid for {} positions",
                self.positions
            )));
        }
        let d = self.d_model;
        let mut out = vec![0.0; self.n_units()];
        for l in 0..self.layers {
            for t in 0..self.taps.len() {
                let dst = &mut out[(l * self.taps.len() + t) * d..][..d];
                match mode {
                    Aggregation::LastToken => dst.copy_from_slice(self.vector(l, t, span.end - 1)),
                    Aggregation::Mean => {
                        for p in span.clone() {
                            for (o, v) in dst.iter_mut().zip(self.vector(l, t, p)) {
                                *o += v;
                            }
                        }
                        let n = span.len() as f64;
                        dst.iter_mut().for_each(|v| *v /= n);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Writes the flat little-endian f64 payload and a JSON sidecar next to it.
    pub fn export(&self, bin_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(bin_path)?);
        for v in &self.data {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        let side = RecordSidecar {
            format: "f64-le".into(),
            order: ["layer", "tap", "position", "channel"].map(String::from).to_vec(),
            layers: self.layers,
            taps: self.taps.iter().map(|c| c.label().to_string()).collect(),
            positions: self.positions,
            d_model: self.d_model,
        };
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    pub fn import(bin_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let side: RecordSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        if side.format != "f64-le" {
            return Err(Error::parse(format!("unsupported format {}", side.format)));
        }
        let taps = side
            .taps
            .iter()
            .map(|t| Component::parse(t))
            .collect::<Result<Vec<_>>>()?;
        let mut bytes = Vec::new();
        std::fs::File::open(bin_path)?.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::parse("payload is not a whole number of f64 values"));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_values(side.layers, taps, side.positions, side.d_model, data)
    }
}

/// Per-tap aggregated vectors over the whole sequence: (layers·taps) × d_model.
pub fn aggregate(record: &ActivationRecord, mode: Aggregation) -> Result<RealMatrix> {
    aggregate_span(record, mode, 0..record.positions())
}

/// Per-tap aggregated vectors over a position span.
pub fn aggregate_span(record: &ActivationRecord, mode: Aggregation, span: Range<usize>) -> Result<RealMatrix> {
    let flat = record.aggregate_units(mode, span)?;
    RealMatrix::new(record.layers() * record.taps().len(), record.d_model(), flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ActivationRecord {
        // 1 layer, 1 tap, 3 positions, 2 channels
        ActivationRecord::from_values(1, vec![Component::Attn], 3, 2, vec![1.0, 2.0, 3.0, 5.0, 8.0, -1.0]).unwrap()
    }

    #[test]
    fn mean_is_hand_average() {
        let m = aggregate(&toy(), Aggregation::Mean).unwrap();
        assert_eq!(m.row(0), &[4.0, 2.0]);
        let l = aggregate(&toy(), Aggregation::LastToken).unwrap();
        assert_eq!(l.row(0), &[8.0, -1.0]);
    }

    #[test]
    fn single_token_modes_agree() {
        let r = ActivationRecord::from_values(2, vec![Component::Ln1, Component::Attn], 1, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(
            aggregate(&r, Aggregation::Mean).unwrap(),
            aggregate(&r, Aggregation::LastToken).unwrap()
        );
    }

    #[test]
    fn constant_positions_mean_equals_any_position() {
        let r = ActivationRecord::from_values(1, vec![Component::Ln1], 4, 2, [0.5, -2.0].repeat(4)).unwrap();
        let m = aggregate(&r, Aggregation::Mean).unwrap();
        assert_eq!(m.row(0), r.vector(0, 0, 2));
    }

    #[test]
    fn coordinates_round_trip() {
        let s = UnitShape {
            layers: 2,
            taps: vec![Component::Ln1, Component::Attn],
            d_model: 5,
        };
        for i in 0..s.n_units() {
            assert_eq!(s.index(s.coord(i)).unwrap(), i);
        }
        assert!(s.index(UnitCoord { layer: 2, tap: 0, channel: 0 }).is_err());
    }

    #[test]
    fn export_import() {
        let dir = tempfile::tempdir().unwrap();
        let r = toy();
        let (b, j) = (dir.path().join("a.bin"), dir.path().join("a.json"));
        r.export(&b, &j).unwrap();
        let back = ActivationRecord::import(&b, &j).unwrap();
        assert_eq!(back.data(), r.data());
        assert_eq!(std::fs::metadata(&b).unwrap().len(), 48);
    }
}
