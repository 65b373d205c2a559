//! Datasets: MNIST IDX files and synthetic Gaussian blobs.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::netgen::{std_normal, stream_rng};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Per-coordinate mean and variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Labelled inputs stored row-major in single precision.
#[derive(Debug)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    inputs: Vec<f32>,
    labels: Vec<u8>,
    moments: OnceLock<Moments>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            classes: self.classes,
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
            moments: OnceLock::new(),
        }
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.classes == other.classes
            && self.labels == other.labels
            && self.inputs.len() == other.inputs.len()
            && self
                .inputs
                .iter()
                .zip(&other.inputs)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Dataset {
    pub fn new(inputs: Vec<f32>, dim: usize, labels: Vec<u8>, classes: usize) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::CountMismatch {
                images: inputs.len() / dim,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
        }
        Ok(Self {
            dim,
            classes,
            inputs,
            labels,
            moments: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_f64(&self, i: usize) -> Vec<f64> {
        self.input(i).iter().map(|&x| x as f64).collect()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    /// First `n` examples.
    pub fn head(&self, n: usize) -> Result<Self> {
        let n = n.min(self.len());
        Self::new(
            self.inputs[..n * self.dim].to_vec(),
            self.dim,
            self.labels[..n].to_vec(),
            self.classes,
        )
    }

    /// Index of the first example of each class, in class order.
    pub fn class_exemplars(&self) -> Vec<Option<usize>> {
        (0..self.classes)
            .map(|c| self.labels.iter().position(|&l| l as usize == c))
            .collect()
    }

    /// Per-coordinate moments, computed on first use.
    pub fn moments(&self) -> &Moments {
        self.moments.get_or_init(|| {
            let n = self.len() as f64;
            let mut mean = vec![0.0; self.dim];
            for i in 0..self.len() {
                for (m, &x) in mean.iter_mut().zip(self.input(i)) {
                    *m += x as f64;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; self.dim];
            for i in 0..self.len() {
                for ((v, &x), m) in var.iter_mut().zip(self.input(i)).zip(&mean) {
                    let d = x as f64 - m;
                    *v += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= n);
            Moments { mean, var }
        })
    }

    /// A normal draw with the dataset's per-coordinate mean and variance.
    pub fn moment_matched_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.moments();
        m.mean
            .iter()
            .zip(&m.var)
            .map(|(mu, var)| mu + var.sqrt() * std_normal(rng))
            .collect()
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn check_header(bytes: &[u8], file: &str, magic: u32, header: usize) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            file: file.into(),
            expected: header,
            actual: bytes.len(),
        });
    }
    let found = read_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic {
            file: file.into(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header {
        return Err(Error::Truncated {
            file: file.into(),
            expected: header,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Parses an IDX image file into `(count, rows * cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], file: &str) -> Result<(usize, usize, Vec<u8>)> {
    check_header(bytes, file, IMAGE_MAGIC, 16)?;
    let n = read_u32(bytes, 4) as usize;
    let dim = read_u32(bytes, 8) as usize * read_u32(bytes, 12) as usize;
    let expected = 16 + n * dim;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            file: file.into(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok((n, dim, bytes[16..expected].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], file: &str) -> Result<Vec<u8>> {
    check_header(bytes, file, LABEL_MAGIC, 8)?;
    let n = read_u32(bytes, 4) as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            file: file.into(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Loads an IDX image/label pair; pixels are scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let image_name = images.display().to_string();
    let label_name = labels.display().to_string();
    let (n, dim, pixels) = parse_idx_images(&fs::read(images)?, &image_name)?;
    let labels = parse_idx_labels(&fs::read(labels)?, &label_name)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
    let inputs = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(inputs, dim, labels, classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Loads a split from a directory holding the standard MNIST file names.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Writes a dataset as IDX, quantizing inputs to bytes. Images are stored as
/// `1 x dim`.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let n = dataset.len() as u32;
    let mut img = Vec::with_capacity(16 + dataset.inputs.len());
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&n.to_be_bytes());
    img.extend_from_slice(&1u32.to_be_bytes());
    img.extend_from_slice(&(dataset.dim as u32).to_be_bytes());
    img.extend(
        dataset
            .inputs
            .iter()
            .map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lab = Vec::with_capacity(8 + dataset.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend_from_slice(&dataset.labels);
    write_atomic(images, &img)?;
    write_atomic(labels, &lab)
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Isotropic unit-variance Gaussian clusters; class centres are pairwise
/// `separation` apart (along coordinate axes when `classes <= dim`).
pub fn synth_blobs(classes: usize, n_per_class: usize, dim: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if classes == 0 || n_per_class == 0 || dim == 0 || classes > 256 {
        return Err(Error::InvalidArgument("blob parameters must be positive".into()));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidArgument("separation must be finite and >= 0".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let scale = separation / std::f64::consts::SQRT_2;
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|k| {
            if classes <= dim {
                let mut c = vec![0.0; dim];
                c[k] = scale;
                c
            } else {
                let d: Vec<f64> = (0..dim).map(|_| std_normal(&mut rng)).collect();
                let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                d.iter().map(|x| scale * x / n).collect()
            }
        })
        .collect();
    let mut inputs = Vec::with_capacity(classes * n_per_class * dim);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            inputs.extend(c.iter().map(|&m| (m + std_normal(&mut rng)) as f32));
            labels.push(k as u8);
        }
    }
    Dataset::new(inputs, dim, labels, classes)
}
