//! Binary cache of [`ArithTables`]: a fixed header (magic, version, n_max)
//! followed by the little-endian arrays in declaration order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::ArithTables;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 8] = b"DIVCTAB\0";
pub const CACHE_VERSION: u32 = 1;

pub fn cache_file_name(n_max: u64) -> String {
    format!("tables-v{CACHE_VERSION}-{n_max}.bin")
}

fn write_all<T: Copy, const W: usize>(
    w: &mut impl Write,
    xs: &[T],
    enc: impl Fn(T) -> [u8; W],
) -> std::io::Result<()> {
    for &x in xs {
        w.write_all(&enc(x))?;
    }
    Ok(())
}

fn read_vec<T, const W: usize>(
    r: &mut impl Read,
    len: usize,
    dec: impl Fn([u8; W]) -> T,
) -> std::io::Result<Vec<T>> {
    let mut out = Vec::with_capacity(len);
    let mut buf = [0u8; W];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        out.push(dec(buf));
    }
    Ok(out)
}

impl ArithTables {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&self.n_max.to_le_bytes())?;
        write_all(&mut w, &self.spf, u32::to_le_bytes)?;
        write_all(&mut w, &self.mu, i8::to_le_bytes)?;
        write_all(&mut w, &self.phi, u32::to_le_bytes)?;
        write_all(&mut w, &self.lambda, f64::to_le_bytes)?;
        write_all(&mut w, &self.num_div, u32::to_le_bytes)?;
        write_all(&mut w, &self.psi_prefix, f64::to_le_bytes)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CACHE_VERSION {
            return Err(Error::Cache(format!(
                "version {version}, expected {CACHE_VERSION}"
            )));
        }
        let mut dword = [0u8; 8];
        r.read_exact(&mut dword)?;
        let n_max = u64::from_le_bytes(dword);
        let len = n_max as usize + 1;
        let spf = read_vec(&mut r, len, u32::from_le_bytes)?;
        let mu = read_vec(&mut r, len, i8::from_le_bytes)?;
        let phi = read_vec(&mut r, len, u32::from_le_bytes)?;
        let lambda = read_vec(&mut r, len, f64::from_le_bytes)?;
        let num_div = read_vec(&mut r, len, u32::from_le_bytes)?;
        let psi_prefix = read_vec(&mut r, len, f64::from_le_bytes)?;
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Cache("trailing bytes".into()));
        }
        Ok(Self::from_parts(n_max, spf, mu, phi, lambda, num_div, psi_prefix))
    }

    /// Load `n_max` tables from `dir` if a matching cache exists, otherwise
    /// build and write one. A stale or corrupt file is rebuilt.
    pub fn load_or_build(dir: &Path, n_max: u64) -> Result<Self> {
        let path: PathBuf = dir.join(cache_file_name(n_max));
        if path.exists() {
            if let Ok(t) = Self::load(&path) {
                if t.n_max == n_max {
                    return Ok(t);
                }
            }
        }
        let t = Self::build(n_max)?;
        std::fs::create_dir_all(dir)?;
        t.save(&path)?;
        Ok(t)
    }
}
