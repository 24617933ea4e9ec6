//! Binary model container.
//!
//! All integers are little-endian.
//!
//! ```text
//! "HSKM"                       4 bytes
//! format_version   u32         = 1
//! section_count    u32
//! per section:
//!   name_len       u16, then name_len bytes of UTF-8
//!   matrix section (codebook, basis, coefficients):
//!     rows u64, cols u64, rows*cols f64 (IEEE-754 LE, row-major)
//!   string section (ids, config):
//!     count u64, then per string: len u32 + UTF-8 bytes
//! ```
//!
//! `config` holds one `key=value` line per string.

use std::path::Path;

use ndarray::Array2;

use crate::codebook::Codebook;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::factorization::{BasisMatrix, CoefficientMatrix};

pub const MAGIC: &[u8; 4] = b"HSKM";
pub const FORMAT_VERSION: u32 = 1;

const SECTIONS: [&str; 5] = ["codebook", "basis", "coefficients", "ids", "config"];

/// A trained retrieval model: codebook, NMF basis, database coefficients
/// and the ids of the database images.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelContainer {
    pub codebook: Codebook,
    pub basis: BasisMatrix,
    pub coefficients: CoefficientMatrix,
    pub ids: Vec<String>,
    pub config: PipelineConfig,
}

fn load_err(msg: impl Into<String>) -> Error {
    Error::ModelLoad(msg.into())
}

impl ModelContainer {
    pub fn new(
        codebook: Codebook,
        basis: BasisMatrix,
        coefficients: CoefficientMatrix,
        ids: Vec<String>,
        config: PipelineConfig,
    ) -> Result<Self> {
        let model = Self {
            codebook,
            basis,
            coefficients,
            ids,
            config,
        };
        model.check_shapes().map_err(|e| match e {
            Error::ModelLoad(m) => Error::InvalidInput(m),
            other => other,
        })?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        let k = self.codebook.k();
        let (basis_rows, rank) = self.basis.as_array().dim();
        let (coef_rows, n) = self.coefficients.as_array().dim();
        if basis_rows != k {
            return Err(load_err(format!("basis has {basis_rows} rows, codebook has {k} words")));
        }
        if coef_rows != rank {
            return Err(load_err(format!("coefficients have {coef_rows} rows, basis rank is {rank}")));
        }
        if self.ids.len() != n {
            return Err(load_err(format!("{} ids for {n} coefficient columns", self.ids.len())));
        }
        let d = self.config.patch_size * self.config.patch_size;
        if self.codebook.dim() != d {
            return Err(load_err(format!(
                "codebook dimension {} does not match patch size {}",
                self.codebook.dim(),
                self.config.patch_size
            )));
        }
        Ok(())
    }

    pub fn database_size(&self) -> usize {
        self.ids.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(SECTIONS.len() as u32).to_le_bytes());
        write_matrix(&mut out, "codebook", self.codebook.centroids());
        write_matrix(&mut out, "basis", self.basis.as_array());
        write_matrix(&mut out, "coefficients", self.coefficients.as_array());
        write_strings(&mut out, "ids", &self.ids);
        let config = self.config.to_string();
        let lines: Vec<&str> = config.lines().collect();
        write_strings(&mut out, "config", &lines);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(load_err("bad magic, expected HSKM"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(load_err(format!("unsupported format version {version}")));
        }
        let count = r.u32()? as usize;
        let mut codebook = None;
        let mut basis = None;
        let mut coefficients = None;
        let mut ids = None;
        let mut config = None;
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| load_err("section name is not UTF-8"))?
                .to_owned();
            let duplicate = match name.as_str() {
                "codebook" => codebook.replace(r.matrix()?).is_some(),
                "basis" => basis.replace(r.matrix()?).is_some(),
                "coefficients" => coefficients.replace(r.matrix()?).is_some(),
                "ids" => ids.replace(r.strings()?).is_some(),
                "config" => config.replace(r.strings()?).is_some(),
                other => return Err(load_err(format!("unknown section {other:?}"))),
            };
            if duplicate {
                return Err(load_err(format!("duplicate section {name:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(load_err(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let missing = |s: &str| load_err(format!("missing section {s:?}"));
        let config_lines = config.ok_or_else(|| missing("config"))?;
        let config = PipelineConfig::parse(&config_lines.join("\n"))
            .map_err(|e| load_err(format!("config section: {e}")))?;
        let model = Self {
            codebook: Codebook::new(codebook.ok_or_else(|| missing("codebook"))?)
                .map_err(|e| load_err(e.to_string()))?,
            basis: BasisMatrix::new(basis.ok_or_else(|| missing("basis"))?)
                .map_err(|e| load_err(e.to_string()))?,
            coefficients: CoefficientMatrix::new(
                coefficients.ok_or_else(|| missing("coefficients"))?,
            )
            .map_err(|e| load_err(e.to_string()))?,
            ids: ids.ok_or_else(|| missing("ids"))?,
            config,
        };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| load_err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

fn write_matrix(out: &mut Vec<u8>, name: &str, m: &Array2<f64>) {
    write_name(out, name);
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    // logical row-major order regardless of memory layout
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_strings<S: AsRef<str>>(out: &mut Vec<u8>, name: &str, items: &[S]) {
    write_name(out, name);
    out.extend_from_slice(&(items.len() as u64).to_le_bytes());
    for s in items.iter().map(AsRef::as_ref) {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| load_err("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| load_err("size does not fit in memory"))
    }

    fn matrix(&mut self) -> Result<Array2<f64>> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| load_err("matrix size overflows"))?;
        let payload = self.take(len)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Array2::from_shape_vec((rows, cols), data).map_err(|e| load_err(e.to_string()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let count = self.u64()?;
        // each string needs at least its 4-byte length prefix
        if count > (self.bytes.len() - self.pos) / 4 {
            return Err(load_err("string count exceeds file size"));
        }
        (0..count)
            .map(|_| {
                let len = self.u32()? as usize;
                String::from_utf8(self.take(len)?.to_vec())
                    .map_err(|_| load_err("string is not UTF-8"))
            })
            .collect()
    }
}
