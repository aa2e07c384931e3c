//! On-disk dataset layout.
//!
//! A dataset directory holds `manifest.json` plus little-endian binaries:
//!
//! | file      | layout                                                        |
//! |-----------|---------------------------------------------------------------|
//! | embedding | `TRSTEMB1`, u32 rows, u32 cols, rows×cols f32 (row-major)     |
//! | labels    | `TRSTLBL1`, u32 n, n × u32                                    |
//! | mask      | `TRSTMSK1`, u32 n, n bytes each 0 or 1                        |
//!
//! Values are promoted to `f64` on load.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DatasetParts, Domain, EmbeddingDataset};
use crate::error::{Result, TrustError};
use crate::numerics::Matrix;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"TRSTEMB1";
pub const LABELS_MAGIC: &[u8; 8] = b"TRSTLBL1";
pub const MASK_MAGIC: &[u8; 8] = b"TRSTMSK1";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDims {
    pub image: usize,
    pub caption: usize,
    pub clip: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub image: String,
    pub caption: String,
    pub clip_img: String,
    pub clip_txt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub domain: Domain,
    pub n: usize,
    pub c: usize,
    pub dims: ManifestDims,
    pub files: ManifestFiles,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn encode_header(magic: &[u8; 8], dims: &[usize], path: &Path) -> Result<Vec<u8>> {
    let mut out = magic.to_vec();
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| TrustError::format(path, None, format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| TrustError::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| TrustError::io(path, e))
}

pub fn encode_embedding(m: &Matrix, path: &Path) -> Result<Vec<u8>> {
    let mut out = encode_header(EMBEDDING_MAGIC, &[m.rows(), m.cols()], path)?;
    out.reserve(m.len() * 4);
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn write_embedding_file(path: &Path, m: &Matrix) -> Result<()> {
    let bytes = encode_embedding(m, path)?;
    write_bytes(path, &bytes)
}

pub fn write_labels_file(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = encode_header(LABELS_MAGIC, &[labels.len()], path)?;
    for &l in labels {
        let l = u32::try_from(l).map_err(|_| TrustError::format(path, None, "label exceeds u32"))?;
        out.extend_from_slice(&l.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn write_mask_file(path: &Path, mask: &[bool]) -> Result<()> {
    let mut out = encode_header(MASK_MAGIC, &[mask.len()], path)?;
    out.extend(mask.iter().map(|&b| u8::from(b)));
    write_bytes(path, &out)
}

/// Byte cursor that reports offsets in its errors.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Reader { path, bytes, pos: 0 }
    }

    fn err(&self, offset: usize, msg: impl Into<String>) -> TrustError {
        TrustError::format(self.path, Some(offset as u64), msg)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(
                self.bytes.len(),
                format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let got = self.take(8, "magic")?;
        if got != expected {
            return Err(self.err(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn expect_exact(&self, payload: usize, what: &str) -> Result<()> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < payload {
            return Err(self.err(
                self.bytes.len(),
                format!("truncated {what}: expected {payload} payload bytes, found {remaining}"),
            ));
        }
        if remaining > payload {
            return Err(self.err(
                self.pos + payload,
                format!("{} trailing bytes after {what}", remaining - payload),
            ));
        }
        Ok(())
    }
}

pub fn decode_embedding(path: &Path, bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader::new(path, bytes);
    r.magic(EMBEDDING_MAGIC)?;
    let rows = r.u32("row count")? as usize;
    let cols = r.u32("column count")? as usize;
    let count = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| r.err(8, "dimensions overflow"))?;
    r.expect_exact(count, "embedding payload")?;
    let start = r.pos;
    let mut data = Vec::with_capacity(rows * cols);
    for (k, chunk) in bytes[start..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(r.err(
                start + 4 * k,
                format!("non-finite value at row {}, col {}", k / cols.max(1), k % cols.max(1)),
            ));
        }
        data.push(f64::from(v));
    }
    Matrix::new(rows, cols, data)
}

pub fn read_embedding_file(path: &Path) -> Result<Matrix> {
    decode_embedding(path, &read_bytes(path)?)
}

pub fn read_labels_file(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_bytes(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(LABELS_MAGIC)?;
    let n = r.u32("label count")? as usize;
    r.expect_exact(n * 4, "labels payload")?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(r.u32("label")? as usize);
    }
    Ok(out)
}

pub fn read_mask_file(path: &Path) -> Result<Vec<bool>> {
    let bytes = read_bytes(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(MASK_MAGIC)?;
    let n = r.u32("mask count")? as usize;
    r.expect_exact(n, "mask payload")?;
    let start = r.pos;
    bytes[start..]
        .iter()
        .enumerate()
        .map(|(k, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(r.err(start + k, format!("mask byte {other} is not 0 or 1"))),
        })
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| TrustError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| TrustError::format(&path, None, format!("invalid manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TrustError::format(
            &path,
            None,
            format!("unsupported format_version {}", manifest.format_version),
        ));
    }
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Writes `dataset` under `dir`, creating the directory if needed.
pub fn save_dataset(dataset: &EmbeddingDataset, dir: &Path) -> Result<()> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        domain: dataset.domain(),
        n: dataset.len(),
        c: dataset.num_classes(),
        dims: ManifestDims {
            image: dataset.dim_image(),
            caption: dataset.dim_caption(),
            clip: dataset.dim_clip(),
        },
        files: ManifestFiles {
            image: "image.emb".into(),
            caption: "caption.emb".into(),
            clip_img: "clip_img.emb".into(),
            clip_txt: "clip_txt.emb".into(),
            labels: dataset.labels().map(|_| "labels.lbl".into()),
            corrupted: dataset.corrupted_mask().map(|_| "corrupted.msk".into()),
        },
        seed: dataset.seed(),
    };
    // Encode everything before touching the filesystem.
    let blobs = [
        (&manifest.files.image, encode_embedding(dataset.image(), dir)?),
        (&manifest.files.caption, encode_embedding(dataset.caption(), dir)?),
        (&manifest.files.clip_img, encode_embedding(dataset.clip_img(), dir)?),
        (&manifest.files.clip_txt, encode_embedding(dataset.clip_txt(), dir)?),
    ];
    fs::create_dir_all(dir).map_err(|e| TrustError::io(dir, e))?;
    for (name, bytes) in &blobs {
        write_bytes(&dir.join(name), bytes)?;
    }
    if let (Some(name), Some(labels)) = (&manifest.files.labels, dataset.labels()) {
        write_labels_file(&dir.join(name), labels)?;
    }
    if let (Some(name), Some(mask)) = (&manifest.files.corrupted, dataset.corrupted_mask()) {
        write_mask_file(&dir.join(name), mask)?;
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

fn check_dims(path: &Path, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(TrustError::format(
            path,
            Some(8),
            format!(
                "header declares {}x{}, manifest declares {rows}x{cols}",
                m.rows(),
                m.cols()
            ),
        ));
    }
    Ok(())
}

fn resolve(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<EmbeddingDataset> {
    let manifest = read_manifest(dir)?;
    let n = manifest.n;
    let d = &manifest.dims;

    let load = |name: &str, cols: usize| -> Result<Matrix> {
        let path = resolve(dir, name);
        let m = read_embedding_file(&path)?;
        check_dims(&path, &m, n, cols)?;
        Ok(m)
    };
    let image = load(&manifest.files.image, d.image)?;
    let caption = load(&manifest.files.caption, d.caption)?;
    let clip_img = load(&manifest.files.clip_img, d.clip)?;
    let clip_txt = load(&manifest.files.clip_txt, d.clip)?;

    let labels = match &manifest.files.labels {
        Some(name) => {
            let path = resolve(dir, name);
            let labels = read_labels_file(&path)?;
            if labels.len() != n {
                return Err(TrustError::format(
                    &path,
                    Some(8),
                    format!("{} labels, manifest declares n = {n}", labels.len()),
                ));
            }
            if let Some((k, l)) = labels.iter().enumerate().find(|(_, &l)| l >= manifest.c) {
                return Err(TrustError::format(
                    &path,
                    Some(12 + 4 * k as u64),
                    format!("label {l} outside [0, {})", manifest.c),
                ));
            }
            Some(labels)
        }
        None => None,
    };
    let corrupted = match &manifest.files.corrupted {
        Some(name) => {
            let path = resolve(dir, name);
            let mask = read_mask_file(&path)?;
            if mask.len() != n {
                return Err(TrustError::format(
                    &path,
                    Some(8),
                    format!("{} mask entries, manifest declares n = {n}", mask.len()),
                ));
            }
            Some(mask)
        }
        None => None,
    };
    if manifest.domain == Domain::Source && labels.is_none() {
        return Err(TrustError::format(
            dir.join(MANIFEST_FILE),
            None,
            "source dataset has no labels file",
        ));
    }

    EmbeddingDataset::new(DatasetParts {
        domain: manifest.domain,
        num_classes: manifest.c,
        image,
        caption,
        clip_img,
        clip_txt,
        labels,
        corrupted,
        seed: manifest.seed,
    })
}

/// Summary returned by a successful validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationSummary {
    pub ok: bool,
    pub domain: Domain,
    pub n: usize,
    pub c: usize,
    pub dims: ManifestDims,
    pub has_labels: bool,
    pub has_corrupted_mask: bool,
}

pub fn validate_dataset_dir(dir: &Path) -> Result<ValidationSummary> {
    let ds = load_dataset(dir)?;
    Ok(ValidationSummary {
        ok: true,
        domain: ds.domain(),
        n: ds.len(),
        c: ds.num_classes(),
        dims: ManifestDims {
            image: ds.dim_image(),
            caption: ds.dim_caption(),
            clip: ds.dim_clip(),
        },
        has_labels: ds.labels().is_some(),
        has_corrupted_mask: ds.corrupted_mask().is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> EmbeddingDataset {
        let m = |cols: usize, base: f64| {
            Matrix::new(n, cols, (0..n * cols).map(|k| base + k as f64 * 0.25).collect()).unwrap()
        };
        EmbeddingDataset::new(DatasetParts {
            domain: Domain::Target,
            num_classes: 3,
            image: m(4, 0.5),
            caption: m(3, -1.0),
            clip_img: m(2, 2.0),
            clip_txt: m(2, -3.0),
            labels: Some((0..n).map(|i| i % 3).collect()),
            corrupted: Some((0..n).map(|i| i % 2 == 0).collect()),
            seed: Some(11),
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample(5);
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample(0);
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim_image(), 4);
        assert_eq!(fs::read(dir.path().join("image.emb")).unwrap().len(), 16);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(2), dir.path()).unwrap();
        let p = dir.path().join("image.emb");
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        fs::write(&p, bytes).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn rejects_header_manifest_dim_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(2), dir.path()).unwrap();
        let mpath = dir.path().join(MANIFEST_FILE);
        let mut manifest = read_manifest(dir.path()).unwrap();
        manifest.dims.image = 5;
        write_json(&mpath, &manifest).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("header declares"), "{err}");
    }

    #[test]
    fn rejects_nan_payload_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(2), dir.path()).unwrap();
        let p = dir.path().join("caption.emb");
        let mut bytes = fs::read(&p).unwrap();
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        match load_dataset(dir.path()).unwrap_err() {
            TrustError::Format { offset, msg, .. } => {
                assert_eq!(offset, Some(20));
                assert!(msg.contains("non-finite"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_truncated_and_trailing() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(2), dir.path()).unwrap();
        let p = dir.path().join("clip_txt.emb");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("truncated"));
        let mut longer = bytes.clone();
        longer.push(0);
        fs::write(&p, longer).unwrap();
        assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn rejects_bad_mask_byte() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(2), dir.path()).unwrap();
        let p = dir.path().join("corrupted.msk");
        let mut bytes = fs::read(&p).unwrap();
        bytes[12] = 7;
        fs::write(&p, bytes).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample(2), dir.path()).unwrap();
        fs::remove_file(dir.path().join("clip_img.emb")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(TrustError::Io { .. })));
    }

    #[test]
    fn header_layout_is_little_endian() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let bytes = encode_embedding(&m, Path::new("x")).unwrap();
        assert_eq!(&bytes[..8], b"TRSTEMB1");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[3, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
    }
}
