//! Dataset ingestion and shard assignment.
//!
//! MNIST-style datasets arrive as IDX files (big-endian magic, dimension
//! header, raw payload), optionally gzip-compressed when the filename ends
//! in `.gz`. Parsing is strict: a bad magic number, a truncated payload,
//! trailing bytes, or an out-of-range label all fail with the offending
//! file and byte offset rather than producing a silently wrong dataset.
//!
//! Each worker trains on its own shard: a fixed-size subset drawn without
//! replacement from the training set using that worker's shard stream, so
//! shards are reproducible per seed and different workers' draws are
//! independent (overlap between workers is allowed and expected).
//!
//! The synthetic quadratic problem generates per-worker center clouds and
//! returns the exact global minimizer, which downstream convergence checks
//! rely on.

use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as index_sample;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::ParamVector;
use crate::rng::{stream_rng, Stream};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// One labeled sample; features are already scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f32>,
    pub label: u8,
}

/// One worker's local training data.
#[derive(Debug, Clone, PartialEq)]
pub enum Shard {
    /// Labeled samples for classification problems.
    Labeled(Vec<Sample>),
    /// Quadratic centers for the synthetic problem.
    Centers(Vec<Vec<f64>>),
}

impl Shard {
    pub fn len(&self) -> usize {
        match self {
            Shard::Labeled(s) => s.len(),
            Shard::Centers(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A loaded train/test split.
pub struct MnistDataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub rows: usize,
    pub cols: usize,
}

impl MnistDataset {
    pub fn feature_dim(&self) -> usize {
        self.rows * self.cols
    }
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into()
    });
    let raw: Vec<u8> = match raw {
        Ok(r) => r,
        Err(e) => return Err(e),
    };
    if path.extension().is_some_and(|e| e == "gz") {
        let mut out = Vec::new();
        flate2::read::MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::ingestion(path, 0, format!("gzip decode failed: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct IdxReader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    pos: usize,
}

impl<'a> IdxReader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        Ok(IdxReader {
            path,
            bytes: read_file_bytes(path)?,
            pos: 0,
        })
    }

    fn err(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::ingestion(self.path, offset as u64, reason)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(self.err(self.bytes.len(), format!("file truncated reading {what}")));
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn expect_magic(&mut self, magic: u32, kind: &str) -> Result<()> {
        let got = self.read_u32("magic number")?;
        if got != magic {
            return Err(self.err(
                0,
                format!("bad magic for {kind} file: expected {magic:#010x}, found {got:#010x}"),
            ));
        }
        Ok(())
    }

    fn payload(&self, expected: usize) -> Result<&[u8]> {
        let have = self.bytes.len() - self.pos;
        if have < expected {
            return Err(self.err(
                self.bytes.len(),
                format!("file truncated: payload needs {expected} bytes, found {have}"),
            ));
        }
        if have > expected {
            return Err(self.err(
                self.pos + expected,
                format!("{} trailing bytes after payload", have - expected),
            ));
        }
        Ok(&self.bytes[self.pos..])
    }
}

/// Parse an IDX image file into per-image `[0, 1]` feature vectors.
pub fn load_idx_images(path: &Path) -> Result<(Vec<Vec<f32>>, usize, usize)> {
    let mut r = IdxReader::open(path)?;
    r.expect_magic(IMAGES_MAGIC, "images")?;
    let count = r.read_u32("image count")? as usize;
    let rows = r.read_u32("row count")? as usize;
    let cols = r.read_u32("column count")? as usize;
    if rows == 0 || cols == 0 || rows > 4096 || cols > 4096 {
        return Err(r.err(8, format!("implausible image shape {rows}x{cols}")));
    }
    let px = rows * cols;
    let payload = r.payload(count * px)?;
    let images = payload
        .chunks_exact(px)
        .map(|chunk| chunk.iter().map(|&b| b as f32 / 255.0).collect())
        .collect();
    Ok((images, rows, cols))
}

/// Parse an IDX label file; labels must lie in `0..=9`.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = IdxReader::open(path)?;
    r.expect_magic(LABELS_MAGIC, "labels")?;
    let count = r.read_u32("label count")? as usize;
    let payload = r.payload(count)?;
    for (i, &l) in payload.iter().enumerate() {
        if l > 9 {
            return Err(r.err(8 + i, format!("label {l} out of range 0..=9")));
        }
    }
    Ok(payload.to_vec())
}

/// Resolve `name` inside `dir`, accepting a `.gz` variant.
fn resolve_idx(dir: &Path, name: &str) -> Result<PathBuf> {
    let plain = dir.join(name);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("dataset file not found: {} (also tried .gz)", plain.display()),
    )
    .into())
}

fn zip_split(path: &Path, images: Vec<Vec<f32>>, labels: Vec<u8>) -> Result<Vec<Sample>> {
    if images.len() != labels.len() {
        return Err(Error::ingestion(
            path,
            4,
            format!(
                "label count {} does not match image count {}",
                labels.len(),
                images.len()
            ),
        ));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(features, label)| Sample { features, label })
        .collect())
}

/// Load the standard four-file MNIST layout from `dir`.
pub fn load_mnist(dir: &Path) -> Result<MnistDataset> {
    let (train_images, rows, cols) = load_idx_images(&resolve_idx(dir, "train-images-idx3-ubyte")?)?;
    let train_labels_path = resolve_idx(dir, "train-labels-idx1-ubyte")?;
    let train_labels = load_idx_labels(&train_labels_path)?;
    let (test_images, t_rows, t_cols) = load_idx_images(&resolve_idx(dir, "t10k-images-idx3-ubyte")?)?;
    let test_labels_path = resolve_idx(dir, "t10k-labels-idx1-ubyte")?;
    let test_labels = load_idx_labels(&test_labels_path)?;
    if (t_rows, t_cols) != (rows, cols) {
        return Err(Error::ingestion(
            dir.join("t10k-images-idx3-ubyte"),
            8,
            format!("test image shape {t_rows}x{t_cols} does not match train {rows}x{cols}"),
        ));
    }
    Ok(MnistDataset {
        train: zip_split(&train_labels_path, train_images, train_labels)?,
        test: zip_split(&test_labels_path, test_images, test_labels)?,
        rows,
        cols,
    })
}

/// Draw one tick's minibatch: `min(batch_size, len)` distinct indices
/// into a shard of `len` points.
pub fn sample_minibatch(len: usize, batch_size: usize, rng: &mut ChaCha12Rng) -> Vec<usize> {
    assert!(len > 0, "cannot sample from an empty shard");
    assert!(batch_size > 0, "batch size must be positive");
    index_sample(rng, len, batch_size.min(len)).into_vec()
}

/// Per-worker index draws: `m` indices into a dataset of `len` samples,
/// without replacement within a worker, independent across workers.
pub fn shard_indices(len: usize, workers: usize, m: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(m <= len, "shard size {m} exceeds dataset size {len}");
    (0..workers)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Shard(i));
            let mut idx = index_sample(&mut rng, len, m).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Materialize per-worker labeled shards from the training set.
pub fn build_shards(train: &[Sample], workers: usize, m: usize, seed: u64) -> Vec<Shard> {
    shard_indices(train.len(), workers, m, seed)
        .into_iter()
        .map(|idx| Shard::Labeled(idx.into_iter().map(|i| train[i].clone()).collect()))
        .collect()
}

/// Generate the synthetic quadratic problem: `m` centers per worker with
/// iid `N(0, spread^2)` components, plus the exact global minimizer (the
/// mean of every generated center).
pub fn gen_quadratic(
    workers: usize,
    m: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> (Vec<Shard>, ParamVector) {
    assert!(workers > 0 && m > 0 && dim > 0);
    let normal = Normal::new(0.0, spread).expect("spread must be finite and non-negative");
    let mut total = vec![0.0; dim];
    let shards: Vec<Shard> = (0..workers)
        .map(|i| {
            let mut rng = stream_rng(seed, Stream::Centers(i));
            let centers: Vec<Vec<f64>> = (0..m)
                .map(|_| {
                    let c: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
                    for (t, v) in total.iter_mut().zip(&c) {
                        *t += v;
                    }
                    c
                })
                .collect();
            Shard::Centers(centers)
        })
        .collect();
    let count = (workers * m) as f64;
    let w_star = ParamVector(total.into_iter().map(|t| t / count).collect());
    (shards, w_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: u32, cols: u32) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&rows.to_be_bytes());
        bytes.extend_from_slice(&cols.to_be_bytes());
        for img in images {
            bytes.extend_from_slice(img);
        }
        std::fs::write(path, bytes).unwrap();
    }

    fn write_idx_labels(path: &Path, labels: &[u8]) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn parses_tiny_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("imgs");
        let lbl_path = dir.path().join("lbls");
        write_idx_images(&img_path, &[vec![0, 128, 255, 51], vec![1, 2, 3, 4]], 2, 2);
        write_idx_labels(&lbl_path, &[7, 3]);
        let (images, rows, cols) = load_idx_images(&img_path).unwrap();
        assert_eq!((rows, cols), (2, 2));
        assert_eq!(images.len(), 2);
        assert!((images[0][1] - 128.0 / 255.0).abs() < 1e-7);
        assert!((images[0][2] - 1.0).abs() < 1e-7);
        assert_eq!(load_idx_labels(&lbl_path).unwrap(), vec![7, 3]);
    }

    #[test]
    fn gzip_variant_loads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("imgs");
        write_idx_images(&plain, &[vec![9, 8, 7, 6]], 2, 2);
        let gz_path = dir.path().join("imgs.idx.gz");
        let raw = std::fs::read(&plain).unwrap();
        let mut enc =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        std::fs::write(&gz_path, enc.finish().unwrap()).unwrap();
        assert_eq!(
            load_idx_images(&plain).unwrap(),
            load_idx_images(&gz_path).unwrap()
        );
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        std::fs::write(&path, 0x12345678u32.to_be_bytes()).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        match err {
            Error::Ingestion { offset, reason, .. } => {
                assert_eq!(offset, 0);
                assert!(reason.contains("magic"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]); // needs 8
        std::fs::write(&path, &bytes).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        match err {
            Error::Ingestion { offset, reason, .. } => {
                assert_eq!(offset, bytes.len() as u64);
                assert!(reason.contains("truncated"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_range_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lbl");
        write_idx_labels(&path, &[1, 10]);
        let err = load_idx_labels(&path).unwrap_err();
        match err {
            Error::Ingestion { offset, reason, .. } => {
                assert_eq!(offset, 9);
                assert!(reason.contains("out of range"), "{reason}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn shards_are_reproducible_and_replacement_free() {
        let a = shard_indices(100, 4, 30, 7);
        let b = shard_indices(100, 4, 30, 7);
        assert_eq!(a, b);
        let c = shard_indices(100, 4, 30, 8);
        assert_ne!(a, c);
        for idx in &a {
            assert_eq!(idx.len(), 30);
            let mut sorted = idx.clone();
            sorted.dedup();
            assert_eq!(sorted.len(), 30, "duplicate index inside one shard");
            assert!(idx.iter().all(|&i| i < 100));
        }
        // Different workers draw independent subsets; with these sizes the
        // chance of two identical draws is negligible.
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn quadratic_minimizer_is_exact_center_mean() {
        let (shards, w_star) = gen_quadratic(3, 5, 4, 2.0, 11);
        let mut mean = vec![0.0; 4];
        let mut count = 0.0;
        for shard in &shards {
            let Shard::Centers(centers) = shard else {
                panic!("wrong shard kind")
            };
            assert_eq!(centers.len(), 5);
            for c in centers {
                for (m, v) in mean.iter_mut().zip(c) {
                    *m += v;
                }
                count += 1.0;
            }
        }
        for (m, w) in mean.iter().zip(w_star.iter()) {
            assert!((m / count - w).abs() < 1e-12);
        }
        let again = gen_quadratic(3, 5, 4, 2.0, 11);
        assert_eq!(again.1, w_star);
    }
}
