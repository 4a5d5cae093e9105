//! On-disk activation datasets: a JSON manifest, one binary norm file per
//! layer, ground-truth labels and the teacher model's predictions.
//!
//! Binary layouts (all integers and floats little-endian):
//!
//! * `<layer>.norms`: `"EATN"`, u32 version (= 1), u32 n_samples, u32 n_kernels,
//!   then `n_samples * n_kernels` f32 values, sample-major.
//! * `labels.bin`: `"EATL"`, u32 n, then one u16 class index per sample.
//! * `teacher.bin`: `"EATP"`, same layout as the labels file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::NormMatrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.bin";
pub const TEACHER_FILE: &str = "teacher.bin";
/// Name of the final layer, whose "kernels" are the model's output classes.
pub const OUTPUT_LAYER: &str = "output";

pub const FORMAT_VERSION: u32 = 1;

const NORM_MAGIC: &[u8; 4] = b"EATN";
const LABEL_MAGIC: &[u8; 4] = b"EATL";
const TEACHER_MAGIC: &[u8; 4] = b"EATP";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub name: String,
    pub n_kernels: usize,
    #[serde(default)]
    pub pooled: bool,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_samples: usize,
    pub class_names: Vec<String>,
    pub splits: BTreeMap<String, Vec<usize>>,
    /// Shallow to deep; the last entry is always the `output` layer.
    pub layers: Vec<LayerMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_refs: Option<Vec<String>>,
    /// Free-form producer notes (preprocessing, model reference, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Manifest(format!("unsupported version {}", self.version)));
        }
        if self.class_names.len() < 2 {
            return Err(Error::Manifest("at least two classes are required".into()));
        }
        let mut seen = BTreeSet::new();
        for c in &self.class_names {
            if !seen.insert(c.as_str()) {
                return Err(Error::Manifest(format!("duplicate class name {c:?}")));
            }
        }
        let Some(out) = self.layers.last() else {
            return Err(Error::Manifest("no layers".into()));
        };
        if out.name != OUTPUT_LAYER {
            return Err(Error::Manifest(format!(
                "last layer must be {OUTPUT_LAYER:?}, found {:?}",
                out.name
            )));
        }
        if out.n_kernels != self.class_names.len() {
            return Err(Error::Manifest(format!(
                "output layer has {} kernels but there are {} classes",
                out.n_kernels,
                self.class_names.len()
            )));
        }
        let mut names = BTreeSet::new();
        for l in &self.layers {
            if !names.insert(l.name.as_str()) {
                return Err(Error::Manifest(format!("duplicate layer name {:?}", l.name)));
            }
            if l.n_kernels == 0 {
                return Err(Error::Manifest(format!("layer {:?} has no kernels", l.name)));
            }
            if l.file.is_empty() || l.file.contains("..") || Path::new(&l.file).is_absolute() {
                return Err(Error::Manifest(format!("bad file reference {:?}", l.file)));
            }
        }
        let mut used = BTreeSet::new();
        for (split, idx) in &self.splits {
            for &i in idx {
                if i >= self.n_samples {
                    return Err(Error::Manifest(format!(
                        "split {split:?} references sample {i} >= {}",
                        self.n_samples
                    )));
                }
                if !used.insert(i) {
                    return Err(Error::Manifest(format!(
                        "sample {i} appears in more than one split (or twice in {split:?})"
                    )));
                }
            }
        }
        if let Some(refs) = &self.image_refs {
            if refs.len() != self.n_samples {
                return Err(Error::Manifest(format!(
                    "{} image refs for {} samples",
                    refs.len(),
                    self.n_samples
                )));
            }
        }
        Ok(())
    }

    /// Position of a layer in network order.
    pub fn layer_index(&self, name: &str) -> Result<usize> {
        self.layers
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn layer(&self, name: &str) -> Result<&LayerMeta> {
        self.layer_index(name).map(|i| &self.layers[i])
    }

    /// Convolutional (non-output) layers.
    pub fn conv_layers(&self) -> &[LayerMeta] {
        &self.layers[..self.layers.len().saturating_sub(1)]
    }
}

/// A validated, immutable activation dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    manifest: Manifest,
    norms: Vec<NormMatrix<f32>>,
    labels: Vec<usize>,
    teacher: Vec<usize>,
}

impl Dataset {
    /// `norms` holds one matrix per convolutional layer, in manifest order.
    pub fn new(
        manifest: Manifest,
        norms: Vec<NormMatrix<f32>>,
        labels: Vec<usize>,
        teacher: Vec<usize>,
    ) -> Result<Self> {
        manifest.validate()?;
        let n = manifest.n_samples;
        let conv = manifest.conv_layers();
        if norms.len() != conv.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} norm matrices for {} convolutional layers",
                norms.len(),
                conv.len()
            )));
        }
        for (meta, m) in conv.iter().zip(&norms) {
            if m.n_samples() != n || m.n_kernels() != meta.n_kernels {
                return Err(Error::ShapeMismatch(format!(
                    "layer {:?} is {}x{}, manifest declares {}x{}",
                    meta.name,
                    m.n_samples(),
                    m.n_kernels(),
                    n,
                    meta.n_kernels
                )));
            }
        }
        let n_classes = manifest.class_names.len();
        for (what, v) in [("labels", &labels), ("teacher predictions", &teacher)] {
            if v.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} {what} for {n} samples",
                    v.len()
                )));
            }
            if let Some(pos) = v.iter().position(|&c| c >= n_classes) {
                return Err(Error::InvalidDataset(format!(
                    "{what}[{pos}] = {} but there are {n_classes} classes",
                    v[pos]
                )));
            }
        }
        Ok(Self {
            manifest,
            norms,
            labels,
            teacher,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn n_samples(&self) -> usize {
        self.manifest.n_samples
    }

    pub fn n_classes(&self) -> usize {
        self.manifest.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.manifest.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn teacher(&self) -> &[usize] {
        &self.teacher
    }

    /// Norm matrix of a convolutional layer.
    pub fn norms(&self, layer: &str) -> Result<&NormMatrix<f32>> {
        let idx = self.manifest.layer_index(layer)?;
        self.norms
            .get(idx)
            .ok_or_else(|| Error::InvalidParam(format!("layer {layer:?} carries no norms")))
    }

    pub fn split(&self, name: &str) -> Result<&[usize]> {
        self.manifest
            .splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownSplit(name.to_string()))
    }

    pub fn train(&self) -> Result<&[usize]> {
        let t = self.split("train")?;
        if t.is_empty() {
            return Err(Error::EmptyTrainingSplit);
        }
        Ok(t)
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    manifest.validate()?;

    let n = manifest.n_samples;
    let mut norms = Vec::with_capacity(manifest.conv_layers().len());
    for meta in manifest.conv_layers() {
        norms.push(read_norms(&dir.join(&meta.file), n, meta.n_kernels)?);
    }
    let labels = read_classes(&dir.join(LABELS_FILE), LABEL_MAGIC, n)?;
    let out = manifest.layers.last().expect("validated");
    let teacher = read_classes(&dir.join(&out.file), TEACHER_MAGIC, n)?;
    Dataset::new(manifest, norms, labels, teacher)
}

pub fn save_dataset(d: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = d.manifest();
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    write_file(&manifest_path, text.as_bytes())?;
    for (meta, norms) in m.conv_layers().iter().zip(&d.norms) {
        write_norms(&dir.join(&meta.file), norms)?;
    }
    write_classes(&dir.join(LABELS_FILE), LABEL_MAGIC, d.labels())?;
    let out = m.layers.last().expect("validated");
    write_classes(&dir.join(&out.file), TEACHER_MAGIC, d.teacher())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn write_norms(path: &Path, m: &NormMatrix<f32>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * m.as_slice().len());
    buf.extend_from_slice(NORM_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&u32_len(m.n_samples())?.to_le_bytes());
    buf.extend_from_slice(&u32_len(m.n_kernels())?.to_le_bytes());
    for v in m.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_file(path, &buf)
}

fn write_classes(path: &Path, magic: &[u8; 4], classes: &[usize]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 2 * classes.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&u32_len(classes.len())?.to_le_bytes());
    for &c in classes {
        let c = u16::try_from(c).map_err(|_| Error::OutOfRange {
            index: c,
            limit: u16::MAX as usize,
        })?;
        buf.extend_from_slice(&c.to_le_bytes());
    }
    write_file(path, &buf)
}

fn u32_len(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::OutOfRange {
        index: n,
        limit: u32::MAX as usize,
    })
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::ShapeMismatch(format!(
                "{} is truncated at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let bad = || Error::BadMagic {
            path: self.path.to_path_buf(),
            expected: String::from_utf8_lossy(expected).into_owned(),
        };
        if self.bytes.len() < 4 {
            return Err(bad());
        }
        if self.take(4)? != expected {
            return Err(bad());
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} has {} trailing bytes",
                self.path.display(),
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_norms(path: &Path, n_samples: usize, n_kernels: usize) -> Result<NormMatrix<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(NORM_MAGIC)?;
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::InvalidDataset(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
    if rows != n_samples || cols != n_kernels {
        return Err(Error::ShapeMismatch(format!(
            "{} declares {rows}x{cols}, manifest expects {n_samples}x{n_kernels}",
            path.display()
        )));
    }
    let raw = r.take(rows * cols * 4)?;
    r.finish()?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    NormMatrix::new(rows, cols, data)
}

fn read_classes(path: &Path, magic: &[u8; 4], n_samples: usize) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        path,
        bytes: &bytes,
        pos: 0,
    };
    r.magic(magic)?;
    let n = r.u32()? as usize;
    if n != n_samples {
        return Err(Error::ShapeMismatch(format!(
            "{} declares {n} samples, manifest expects {n_samples}",
            path.display()
        )));
    }
    let raw = r.take(2 * n)?;
    r.finish()?;
    Ok(raw
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect())
}
