//! Corpus loading and dense patch descriptors.
//!
//! A corpus is a directory with one subdirectory per class, each holding
//! 8-bit binary PGM (`P5`) files:
//!
//! ```text
//! <root>/<class_label>/<image>.pgm
//! ```
//!
//! Every image is cut into overlapping square patches on a regular grid.
//! A patch becomes a descriptor by scaling its intensities to `[0, 1]` and
//! normalizing to zero mean and unit standard deviation.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Added to the patch standard deviation before dividing.
pub const CONTRAST_EPS: f64 = 1e-8;

/// One grayscale image from the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    /// Path relative to the corpus root, `/`-separated.
    pub id: String,
    /// Name of the class directory the image lives in.
    pub class_label: String,
    pub width: usize,
    pub height: usize,
    /// Row-major intensities, `width * height` bytes.
    pub pixels: Vec<u8>,
}

impl ImageRecord {
    pub fn new(
        id: impl Into<String>,
        class_label: impl Into<String>,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        let id = id.into();
        if width == 0 || height == 0 {
            return Err(Error::malformed(id, "zero image extent"));
        }
        if pixels.len() != width * height {
            return Err(Error::malformed(
                id,
                format!("expected {} pixels, got {}", width * height, pixels.len()),
            ));
        }
        Ok(Self {
            id,
            class_label: class_label.into(),
            width,
            height,
            pixels,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Contrast-normalized patch intensities, `patch_size²` values.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDescriptor(pub Vec<f64>);

impl PatchDescriptor {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for PatchDescriptor {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for PatchDescriptor {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

/// Records in lexicographic id order plus the sorted distinct class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<ImageRecord>,
    pub classes: Vec<String>,
    /// Non-fatal findings from the scan, e.g. a corpus with a single class.
    pub warnings: Vec<String>,
}

impl LabeledDataset {
    /// Builds a dataset from records, sorting them by id and collecting the
    /// class list. Fails on duplicate ids.
    pub fn from_records(mut records: Vec<ImageRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = records.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidInput(format!("duplicate record id {}", w[0].id)));
        }
        let mut classes: Vec<String> = records.iter().map(|r| r.class_label.clone()).collect();
        classes.sort();
        classes.dedup();
        let mut warnings = Vec::new();
        if classes.len() == 1 {
            warnings.push(format!(
                "single class '{}': retrieval evaluation needs at least 2 classes",
                classes[0]
            ));
        }
        Ok(Self {
            records,
            classes,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index of each record's class in `classes`.
    pub fn class_indices(&self) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| {
                self.classes
                    .binary_search(&r.class_label)
                    .expect("class list covers every record")
            })
            .collect()
    }
}

/// Serializes pixels as a binary PGM with maxval 255.
pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    debug_assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Parses a binary PGM. Only maxval 255 is accepted. `#` comments are
/// allowed between header tokens.
pub fn decode_pgm(bytes: &[u8], id: &str) -> Result<(usize, usize, Vec<u8>)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::malformed(id, format!("bad magic {magic:?}, expected \"P5\"")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (slot, name) in fields.iter_mut().zip(["width", "height", "maxval"]) {
        *slot = header_number(bytes, &mut pos, id, name)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::malformed(id, format!("maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::malformed(id, "zero image extent"));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::malformed(id, "missing whitespace after maxval")),
    }
    let len = width
        .checked_mul(height)
        .ok_or_else(|| Error::malformed(id, "image extent overflows"))?;
    let raster = &bytes[pos..];
    if raster.len() < len {
        return Err(Error::malformed(
            id,
            format!("truncated payload: {} of {len} bytes", raster.len()),
        ));
    }
    Ok((width, height, raster[..len].to_vec()))
}

fn header_number(bytes: &[u8], pos: &mut usize, id: &str, name: &str) -> Result<usize> {
    let start = *pos;
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    if *pos == start {
        return Err(Error::malformed(id, format!("missing whitespace before {name}")));
    }
    let digits_start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    if *pos == digits_start {
        return Err(Error::malformed(id, format!("missing {name}")));
    }
    std::str::from_utf8(&bytes[digits_start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::malformed(id, format!("{name} out of range")))
}

/// Loads a standalone PGM. The id is the path as given and the class label
/// is the parent directory name, if any.
pub fn load_image(path: &Path) -> Result<ImageRecord> {
    let id = path.to_string_lossy().replace('\\', "/");
    read_record(path, id, parent_name(path))
}

/// Loads a PGM that lives inside a corpus; the id becomes the path relative
/// to `root`.
pub fn load_image_in(root: &Path, path: &Path) -> Result<ImageRecord> {
    let rel = path.strip_prefix(root).unwrap_or(path);
    let id = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/");
    read_record(path, id, parent_name(path))
}

fn parent_name(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_record(path: &Path, id: String, class_label: String) -> Result<ImageRecord> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let (width, height, pixels) = decode_pgm(&bytes, &id)?;
    ImageRecord::new(id, class_label, width, height, pixels)
}

/// Number of patches `extract_patches` yields for the given geometry.
pub fn patch_count(width: usize, height: usize, patch_size: usize, stride: usize) -> usize {
    if patch_size == 0 || stride == 0 || patch_size > width || patch_size > height {
        return 0;
    }
    ((width - patch_size) / stride + 1) * ((height - patch_size) / stride + 1)
}

/// Dense grid of contrast-normalized patches, scanned row-major.
pub fn extract_patches(
    image: &ImageRecord,
    patch_size: usize,
    stride: usize,
) -> Result<Vec<PatchDescriptor>> {
    if stride == 0 || patch_size == 0 {
        return Err(Error::InvalidInput(
            "patch size and stride must be positive".into(),
        ));
    }
    if patch_size > image.width || patch_size > image.height {
        return Err(Error::PatchTooLarge {
            patch_size,
            width: image.width,
            height: image.height,
        });
    }
    let n = patch_size * patch_size;
    let mut out = Vec::with_capacity(patch_count(image.width, image.height, patch_size, stride));
    for y in (0..=image.height - patch_size).step_by(stride) {
        for x in (0..=image.width - patch_size).step_by(stride) {
            let mut raw = Vec::with_capacity(n);
            let mut sum = 0u64;
            for dy in 0..patch_size {
                let row = (y + dy) * image.width + x;
                for &p in &image.pixels[row..row + patch_size] {
                    sum += u64::from(p);
                    raw.push(p);
                }
            }
            // integer sum keeps a constant patch's mean bit-equal to its pixels
            let mean = sum as f64 / (n as f64 * 255.0);
            let mut values: Vec<f64> = raw.iter().map(|&p| f64::from(p) / 255.0 - mean).collect();
            let var = values.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let scale = var.sqrt() + CONTRAST_EPS;
            values.iter_mut().for_each(|v| *v /= scale);
            out.push(PatchDescriptor(values));
        }
    }
    Ok(out)
}

/// Extracts patches for every record in parallel; output order follows the
/// input order.
pub fn extract_all(
    records: &[ImageRecord],
    patch_size: usize,
    stride: usize,
) -> Result<Vec<Vec<PatchDescriptor>>> {
    records
        .par_iter()
        .map(|r| extract_patches(r, patch_size, stride))
        .collect()
}

fn is_hidden(name: &str) -> bool {
    name.starts_with('.')
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Loads every `<root>/<class>/<image>.pgm`. Hidden entries, loose files in
/// the root and non-PGM extensions are skipped.
pub fn scan_dataset(root: &Path) -> Result<LabeledDataset> {
    if !root.is_dir() {
        return Err(Error::FileNotFound(root.to_path_buf()));
    }
    let mut paths: Vec<PathBuf> = Vec::new();
    for class_dir in fs::read_dir(root)? {
        let class_dir = class_dir?;
        let name = class_dir.file_name().to_string_lossy().into_owned();
        if is_hidden(&name) || !class_dir.file_type()?.is_dir() {
            continue;
        }
        for entry in fs::read_dir(class_dir.path())? {
            let entry = entry?;
            let fname = entry.file_name().to_string_lossy().into_owned();
            let path = entry.path();
            if is_hidden(&fname) || !entry.file_type()?.is_file() || !is_pgm(&path) {
                continue;
            }
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    let records = paths
        .par_iter()
        .map(|p| load_image_in(root, p))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::from_records(records)
}
