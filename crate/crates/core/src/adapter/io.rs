//! Adapter file: `dim × dim` float32 weights (row-major) followed by `dim`
//! float32 biases, little-endian, plus a JSON sidecar at `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::AdapterParams;
use crate::corpus::{read_f32_file, write_f32_file};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterFileMeta {
    pub version: u32,
    pub dim: usize,
    pub layout: String,
    #[serde(default)]
    pub loss_trace: Vec<f64>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl AdapterFileMeta {
    pub fn new(dim: usize, loss_trace: Vec<f64>, config: serde_json::Value) -> Self {
        Self {
            version: 1,
            dim,
            layout: "f32le: weight[dim*dim] row-major, then bias[dim]".into(),
            loss_trace,
            config,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_adapter(path: &Path, params: &AdapterParams<f32>, meta: &AdapterFileMeta) -> Result<()> {
    let mut values = params.weight.clone();
    values.extend_from_slice(&params.bias);
    write_f32_file(path, &values)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::json("adapter metadata", e))?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

/// Read an adapter; the dimension comes from the sidecar when present and is
/// otherwise inferred from the file length.
pub fn read_adapter(path: &Path) -> Result<(AdapterParams<f32>, Option<AdapterFileMeta>)> {
    let values = read_f32_file(path)?;
    let side = sidecar_path(path);
    let meta: Option<AdapterFileMeta> = if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::json(side.display().to_string(), e))?)
    } else {
        None
    };
    let dim = match &meta {
        Some(m) => m.dim,
        None => infer_dim(values.len()).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}: {} values is not d² + d for any d",
                path.display(),
                values.len()
            ))
        })?,
    };
    if values.len() != dim * dim + dim {
        return Err(Error::Dimension {
            expected: dim * dim + dim,
            got: values.len(),
        });
    }
    let bias = values[dim * dim..].to_vec();
    let mut weight = values;
    weight.truncate(dim * dim);
    Ok((AdapterParams::from_parts(dim, weight, bias)?, meta))
}

fn infer_dim(n: usize) -> Option<usize> {
    let d = ((n as f64).sqrt()).floor() as usize;
    (d.saturating_sub(1)..=d + 1).find(|&d| d > 0 && d * d + d == n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_and_without_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adapter.bin");
        let p = AdapterParams::from_parts(2, vec![0.5, -1.0, 0.25, 2.0], vec![0.1, 0.2]).unwrap();
        write_adapter(&path, &p, &AdapterFileMeta::new(2, vec![-0.6], serde_json::Value::Null)).unwrap();
        let (back, meta) = read_adapter(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(meta.unwrap().loss_trace, vec![-0.6]);
        assert_eq!(fs::metadata(&path).unwrap().len(), 6 * 4);

        fs::remove_file(sidecar_path(&path)).unwrap();
        assert_eq!(read_adapter(&path).unwrap().0, p);
    }

    #[test]
    fn infers_dimension() {
        assert_eq!(infer_dim(6), Some(2));
        assert_eq!(infer_dim(512 * 512 + 512), Some(512));
        assert_eq!(infer_dim(7), None);
    }
}
