//! `TEXGEN1` model container: magic, little-endian u32 header length, JSON
//! header, then little-endian f32 arrays.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{GeneratorModel, Mapper};
use crate::{ChartMask, Error, Result};

pub const MAGIC: &[u8; 8] = b"TEXGEN1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the data section.
    offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    side: usize,
    d_w: usize,
    d_z: usize,
    mapper_seed: u64,
    arrays: Vec<ArrayEntry>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::Container(message.into())
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl GeneratorModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim();
        let (d_w, d_z) = (self.d_w(), self.d_z());
        let arrays: Vec<(&str, Vec<usize>, Vec<f64>)> = vec![
            ("mean", vec![dim], self.mean.clone()),
            ("basis", vec![d_w, dim], self.basis.clone()),
            ("sigma", vec![d_w], self.sigma.clone()),
            ("mapper_a1", vec![d_z, d_z], row_major(&self.mapper.a1)),
            ("mapper_a2", vec![d_w, d_z], row_major(&self.mapper.a2)),
            ("mapper_bias", vec![d_w], self.mapper.bias.as_slice().to_vec()),
            ("chart", vec![self.side, self.side], self.chart.as_weights()),
        ];
        let mut offset = 0;
        let mut entries = Vec::new();
        for (name, shape, values) in &arrays {
            entries.push(ArrayEntry {
                name: name.to_string(),
                shape: shape.clone(),
                offset,
            });
            offset += 4 * values.len();
        }
        let header = serde_json::to_vec(&Header {
            side: self.side,
            d_w,
            d_z,
            mapper_seed: self.mapper.seed,
            arrays: entries,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, _, values) in &arrays {
            for &v in values {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing TEXGEN1 magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let data_start = 12usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad(format!("header length {hlen} exceeds file size")))?;
        let header: Header =
            serde_json::from_slice(&bytes[12..data_start]).map_err(|e| bad(format!("header: {e}")))?;
        let data = &bytes[data_start..];
        let dim = header.side * header.side * 3;
        let array = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let e = header
                .arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| bad(format!("array `{name}` missing")))?;
            if e.shape != shape {
                return Err(bad(format!("array `{name}` has shape {:?}, expected {shape:?}", e.shape)));
            }
            let len: usize = shape.iter().product();
            let end = e
                .offset
                .checked_add(4 * len)
                .filter(|&end| end <= data.len())
                .ok_or_else(|| bad(format!("array `{name}` runs past the end of the file")))?;
            let values: Vec<f64> = data[e.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            if !values.iter().all(|v| v.is_finite()) {
                return Err(bad(format!("array `{name}` has non-finite values")));
            }
            Ok(values)
        };
        let (d_w, d_z) = (header.d_w, header.d_z);
        let mean = array("mean", &[dim])?;
        let basis = array("basis", &[d_w, dim])?;
        let sigma = array("sigma", &[d_w])?;
        let a1 = array("mapper_a1", &[d_z, d_z])?;
        let a2 = array("mapper_a2", &[d_w, d_z])?;
        let bias = array("mapper_bias", &[d_w])?;
        let chart = array("chart", &[header.side, header.side])?;
        if sigma.iter().any(|&s| s <= 0.0) || sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(bad("sigma must be positive and non-increasing"));
        }
        Ok(GeneratorModel {
            side: header.side,
            mean,
            basis,
            sigma,
            mapper: Mapper {
                a1: DMatrix::from_row_slice(d_z, d_z, &a1),
                a2: DMatrix::from_row_slice(d_w, d_z, &a2),
                bias: DVector::from_vec(bias),
                seed: header.mapper_seed,
            },
            chart: ChartMask {
                side: header.side,
                covered: chart.iter().map(|&v| v >= 0.5).collect(),
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
