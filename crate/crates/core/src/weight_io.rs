//! Weight-bundle interchange format.
//!
//! A bundle is a directory holding `manifest.json` plus one raw little-endian,
//! row-major, headerless binary per layer (and optionally one per layer's
//! initialization snapshot):
//!
//! ```text
//! <bundle>/manifest.json
//! <bundle>/<layer>.bin
//! <bundle>/<layer>.init.bin
//! ```
//!
//! `f32` payloads are widened to `f64` on read. The layer remembers its
//! on-disk dtype so that writing it back reproduces the original bytes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// One 2-D weight matrix, row-major, with an optional initialization snapshot
/// of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrix {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    init_values: Option<Vec<f64>>,
    depth_index: usize,
    dtype: Dtype,
}

impl LayerMatrix {
    pub fn new(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        depth_index: usize,
    ) -> Result<Self> {
        let name = name.into();
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "layer `{name}`: shape {rows}x{cols} has a zero dimension"
            )));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::invalid(format!("layer `{name}`: shape overflows")))?;
        if values.len() != len {
            return Err(Error::invalid(format!(
                "layer `{name}`: {} values for shape {rows}x{cols}",
                values.len()
            )));
        }
        check_finite(&name, &values)?;
        Ok(Self {
            name,
            rows,
            cols,
            values,
            init_values: None,
            depth_index,
            dtype: Dtype::F64,
        })
    }

    pub fn with_init(mut self, init: Vec<f64>) -> Result<Self> {
        if init.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "layer `{}`: init has {} values, weights have {}",
                self.name,
                init.len(),
                self.values.len()
            )));
        }
        check_finite(&self.name, &init)?;
        self.init_values = Some(init);
        Ok(self)
    }

    /// Marks the layer for `f32` storage. Fails if any value would not survive
    /// the narrowing exactly.
    pub fn with_dtype(mut self, dtype: Dtype) -> Result<Self> {
        if dtype == Dtype::F32 {
            let lossy = |v: &[f64]| v.iter().any(|&x| (x as f32) as f64 != x);
            if lossy(&self.values) || self.init_values.as_deref().is_some_and(lossy) {
                return Err(Error::invalid(format!(
                    "layer `{}`: values are not exactly representable as f32",
                    self.name
                )));
            }
        }
        self.dtype = dtype;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn init_values(&self) -> Option<&[f64]> {
        self.init_values.as_deref()
    }
    pub fn depth_index(&self) -> usize {
        self.depth_index
    }
    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    /// Compression ratio max(m,n)/min(m,n).
    pub fn compression_ratio(&self) -> f64 {
        self.rows.max(self.cols) as f64 / self.rows.min(self.cols) as f64
    }

    /// Number of eigenvalues that carry information, min(m,n).
    pub fn resolution(&self) -> usize {
        self.rows.min(self.cols)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same layer with every entry multiplied by `c` (init untouched).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        check_finite(&out.name, &out.values)?;
        out.dtype = Dtype::F64;
        Ok(out)
    }

    /// Transposed copy (init transposed too).
    pub fn transposed(&self) -> Self {
        let t = |v: &[f64]| {
            let mut out = vec![0.0; v.len()];
            for i in 0..self.rows {
                for j in 0..self.cols {
                    out[j * self.rows + i] = v[i * self.cols + j];
                }
            }
            out
        };
        Self {
            name: self.name.clone(),
            rows: self.cols,
            cols: self.rows,
            values: t(&self.values),
            init_values: self.init_values.as_deref().map(t),
            depth_index: self.depth_index,
            dtype: self.dtype,
        }
    }
}

fn check_finite(layer: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            layer: layer.to_owned(),
            index,
        }),
        None => Ok(()),
    }
}

/// A model's layers in forward order plus free-form text metadata
/// (`noise_fraction`, `test_accuracy`, `seed`, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    model_id: String,
    layers: Vec<LayerMatrix>,
    metadata: BTreeMap<String, String>,
}

impl WeightBundle {
    /// Validates uniqueness of names and depth indices and sorts layers by depth.
    pub fn new(
        model_id: impl Into<String>,
        mut layers: Vec<LayerMatrix>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut names = HashSet::new();
        let mut depths = HashSet::new();
        for l in &layers {
            if !names.insert(l.name.as_str()) {
                return Err(Error::DuplicateLayer(l.name.clone()));
            }
            if !depths.insert(l.depth_index) {
                return Err(Error::DuplicateDepth(l.depth_index));
            }
        }
        layers.sort_by_key(|l| l.depth_index);
        Ok(Self {
            model_id: model_id.into(),
            layers,
            metadata,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }
    pub fn layers(&self) -> &[LayerMatrix] {
        &self.layers
    }
    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }
    pub fn layer(&self, name: &str) -> Option<&LayerMatrix> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Parses a numeric metadata entry.
    pub fn metadata_f64(&self, key: &str) -> Result<Option<f64>> {
        self.metadata
            .get(key)
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::invalid(format!("metadata `{key}` = {s:?} is not a number"))
                })
            })
            .transpose()
    }
}

/// On-disk manifest. Field names and order are part of the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model_id: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub layers: Vec<ManifestLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLayer {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub depth_index: usize,
    pub dtype: Dtype,
    pub file: String,
    #[serde(default)]
    pub init_file: Option<String>,
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        what: "manifest.json",
        message: e.to_string(),
    })
}

/// Decodes a headerless little-endian payload holding exactly `rows * cols`
/// elements of `dtype`.
pub fn decode_values(
    bytes: &[u8],
    dtype: Dtype,
    rows: usize,
    cols: usize,
    layer: &str,
    file: &str,
) -> Result<Vec<f64>> {
    let expected = rows as u128 * cols as u128 * dtype.size() as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::ShapeMismatch {
            layer: layer.to_owned(),
            file: file.to_owned(),
            rows,
            cols,
            dtype: dtype.as_str(),
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    check_finite(layer, &values)?;
    Ok(values)
}

pub fn encode_values(values: &[f64], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.size());
    match dtype {
        Dtype::F32 => values
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => values
            .iter()
            .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

/// File names referenced by a manifest must stay inside the bundle directory.
fn check_file_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name == "."
        || name == ".."
        || name.contains(['/', '\\', '\0'])
        || name == MANIFEST_FILE;
    if bad {
        return Err(Error::Parse {
            what: "manifest.json",
            message: format!("file name {name:?} is not a plain file in the bundle"),
        });
    }
    Ok(())
}

/// Builds a bundle from manifest bytes, fetching layer payloads through `fetch`.
///
/// This is the whole read path minus the filesystem, so it can be driven from
/// memory.
pub fn decode_bundle<F>(manifest_bytes: &[u8], mut fetch: F) -> Result<WeightBundle>
where
    F: FnMut(&str) -> Result<Vec<u8>>,
{
    let manifest = parse_manifest(manifest_bytes)?;
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        check_file_name(&entry.file)?;
        if entry.rows == 0 || entry.cols == 0 {
            return Err(Error::invalid(format!(
                "layer `{}`: shape {}x{} has a zero dimension",
                entry.name, entry.rows, entry.cols
            )));
        }
        let raw = fetch(&entry.file)?;
        let values = decode_values(
            &raw,
            entry.dtype,
            entry.rows,
            entry.cols,
            &entry.name,
            &entry.file,
        )?;
        let mut layer = LayerMatrix::new(
            entry.name.clone(),
            entry.rows,
            entry.cols,
            values,
            entry.depth_index,
        )?;
        if let Some(init_file) = &entry.init_file {
            check_file_name(init_file)?;
            let raw = fetch(init_file)?;
            let init = decode_values(
                &raw,
                entry.dtype,
                entry.rows,
                entry.cols,
                &entry.name,
                init_file,
            )?;
            layer = layer.with_init(init)?;
        }
        // f32 payloads are exactly representable by construction
        layer.dtype = entry.dtype;
        layers.push(layer);
    }
    WeightBundle::new(manifest.model_id, layers, manifest.metadata)
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let dir = path.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    decode_bundle(&manifest, |file| {
        let p = dir.join(file);
        fs::read(&p).map_err(|e| Error::io(&p, e))
    })
}

fn file_stem_for(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if stem.is_empty() || stem.chars().all(|c| c == '.') {
        "layer".to_owned()
    } else {
        stem
    }
}

/// Manifest plus the payloads it references, in memory.
pub fn encode_bundle(bundle: &WeightBundle) -> Result<(Manifest, Vec<(String, Vec<u8>)>)> {
    let mut taken = HashSet::new();
    let mut files = Vec::new();
    let mut entries = Vec::with_capacity(bundle.layers.len());
    for layer in &bundle.layers {
        let mut stem = file_stem_for(&layer.name);
        if !taken.insert(stem.clone()) {
            stem = format!("{stem}-{}", layer.depth_index);
            if !taken.insert(stem.clone()) {
                return Err(Error::invalid(format!(
                    "cannot derive a unique file name for layer `{}`",
                    layer.name
                )));
            }
        }
        let file = format!("{stem}.bin");
        files.push((file.clone(), encode_values(&layer.values, layer.dtype)));
        let init_file = layer.init_values.as_ref().map(|init| {
            let f = format!("{stem}.init.bin");
            files.push((f.clone(), encode_values(init, layer.dtype)));
            f
        });
        entries.push(ManifestLayer {
            name: layer.name.clone(),
            rows: layer.rows,
            cols: layer.cols,
            depth_index: layer.depth_index,
            dtype: layer.dtype,
            file,
            init_file,
        });
    }
    Ok((
        Manifest {
            model_id: bundle.model_id.clone(),
            metadata: bundle.metadata.clone(),
            layers: entries,
        },
        files,
    ))
}

pub fn write_bundle(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<()> {
    let dir = path.as_ref();
    // Re-check invariants; the bundle may have been assembled by hand.
    WeightBundle::new(
        bundle.model_id.clone(),
        bundle.layers.clone(),
        bundle.metadata.clone(),
    )?;
    let (manifest, files) = encode_bundle(bundle)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, bytes) in files {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    let p = dir.join(MANIFEST_FILE);
    fs::write(&p, json).map_err(|e| Error::io(&p, e))
}
