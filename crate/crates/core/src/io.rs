//! Binary containers: eigenbasis cache (`DFEB`), sample cubes and maps
//! (`RCUB`), plus the on-disk cache of bases and support templates.
//! All integers and floats are little-endian.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::eigenbasis::DftEigenbasis;
use crate::emdfrft::EmdfrftPlan;
use crate::error::{Error, Result};
use crate::mitigation::SupportTemplates;

pub const DFEB_VERSION: u32 = 1;
pub const RCUB_VERSION: u32 = 1;
/// Environment variable naming the cache directory.
pub const CACHE_DIR_ENV: &str = "FRACIM_CACHE_DIR";

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    Ok(())
}

/// `"DFEB"`, version, `N`, `N^2` matrix entries row-major, `N` indices.
pub fn write_basis<W: Write>(basis: &DftEigenbasis, mut w: W) -> Result<()> {
    w.write_all(b"DFEB")?;
    w.write_all(&DFEB_VERSION.to_le_bytes())?;
    w.write_all(&(basis.n() as u32).to_le_bytes())?;
    for v in basis.matrix() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &k in basis.eigen_index() {
        w.write_all(&(k as i32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_basis<R: Read>(mut r: R) -> Result<DftEigenbasis> {
    expect_magic(&mut r, b"DFEB")?;
    let version = read_u32(&mut r)?;
    if version != DFEB_VERSION {
        return Err(Error::Format(format!("unsupported basis file version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    let v = read_f64s(&mut r, n * n)?;
    let mut idx = Vec::with_capacity(n);
    for _ in 0..n {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        let k = i32::from_le_bytes(b);
        if k < 0 {
            return Err(Error::Format("negative eigen index".into()));
        }
        idx.push(k as usize);
    }
    DftEigenbasis::from_parts(n, v, idx)
}

/// Payload of an `RCUB` file.
#[derive(Debug, Clone, PartialEq)]
pub enum CubeData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl CubeData {
    fn dtype(&self) -> u8 {
        match self {
            CubeData::Real(_) => 0,
            CubeData::Complex(_) => 1,
        }
    }

    fn len(&self) -> usize {
        match self {
            CubeData::Real(v) => v.len(),
            CubeData::Complex(v) => v.len(),
        }
    }
}

/// Fast-time by slow-time samples, slow index outermost, with a TOML
/// metadata block.
#[derive(Debug, Clone, PartialEq)]
pub struct RcubFile {
    pub n_fast: usize,
    pub n_ramps: usize,
    pub data: CubeData,
    pub metadata: String,
}

impl RcubFile {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        if self.data.len() != self.n_fast * self.n_ramps {
            return Err(Error::LengthMismatch { expected: self.n_fast * self.n_ramps, got: self.data.len() });
        }
        w.write_all(b"RCUB")?;
        w.write_all(&RCUB_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_fast as u32).to_le_bytes())?;
        w.write_all(&(self.n_ramps as u32).to_le_bytes())?;
        w.write_all(&[self.data.dtype()])?;
        match &self.data {
            CubeData::Real(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            CubeData::Complex(v) => {
                for z in v {
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
        w.write_all(&(self.metadata.len() as u64).to_le_bytes())?;
        w.write_all(self.metadata.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, b"RCUB")?;
        let version = read_u32(&mut r)?;
        if version != RCUB_VERSION {
            return Err(Error::Format(format!("unsupported cube file version {version}")));
        }
        let n_fast = read_u32(&mut r)? as usize;
        let n_ramps = read_u32(&mut r)? as usize;
        let mut dtype = [0u8];
        r.read_exact(&mut dtype)?;
        let count = n_fast * n_ramps;
        let data = match dtype[0] {
            0 => CubeData::Real(read_f64s(&mut r, count)?),
            1 => CubeData::Complex(
                read_f64s(&mut r, 2 * count)?
                    .chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            ),
            t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
        };
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut meta = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut meta)?;
        let metadata = String::from_utf8(meta).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self { n_fast, n_ramps, data, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Cache directory from the environment, else a folder under the system
/// temporary directory.
pub fn cache_dir() -> PathBuf {
    std::env::var_os(CACHE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fracim-cache"))
}

/// Writes through a temporary file in the same directory, then renames it
/// into place.
pub fn write_atomically(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads the basis of length `n` from `dir`, building and storing it when
/// absent or unreadable.
pub fn cached_basis(dir: &Path, n: usize) -> Result<DftEigenbasis> {
    let path = dir.join(format!("basis-{n}.dfeb"));
    if let Ok(f) = File::open(&path) {
        match read_basis(BufReader::new(f)) {
            Ok(b) if b.n() == n => return Ok(b),
            _ => log::warn!("rebuilding unreadable basis cache {}", path.display()),
        }
    }
    let basis = DftEigenbasis::build(n)?;
    write_atomically(&path, |w| write_basis(&basis, w))?;
    Ok(basis)
}

/// Loads or builds the support templates for `basis`, `m_angles` angles and
/// the given threshold.
pub fn cached_templates(dir: &Path, basis: &DftEigenbasis, m_angles: usize, threshold_db: f64) -> Result<SupportTemplates> {
    let n = basis.n();
    let path = dir.join(format!("support-{n}-{m_angles}-{}.cmsk", threshold_db.to_bits()));
    if let Ok(f) = File::open(&path) {
        match SupportTemplates::read_from(BufReader::new(f), threshold_db) {
            Ok(t) if t.n() == n && t.m_angles() == m_angles => return Ok(t),
            _ => log::warn!("rebuilding unreadable template cache {}", path.display()),
        }
    }
    let plan = EmdfrftPlan::new(basis, m_angles)?;
    let t = SupportTemplates::build(&plan, threshold_db)?;
    write_atomically(&path, |w| t.write_to(w))?;
    Ok(t)
}
