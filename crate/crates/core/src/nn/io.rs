//! Versioned binary parameter files: magic bytes, a shape table, then raw
//! little-endian doubles per group.

use std::io::{Read, Write};
use std::path::Path;

use super::classifier::SkillClassifier;
use super::vdsr::ResidualNet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"EMTNET";
const VERSION: u32 = 1;

pub fn write_params<W: Write>(mut w: W, groups: &[(Vec<usize>, Vec<f64>)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(groups.len() as u32).to_le_bytes())?;
    for (shape, _) in groups {
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &dim in shape {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
    }
    for (shape, data) in groups {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "group data length {} vs shape {:?}",
                data.len(),
                shape
            )));
        }
        for &v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_params<R: Read>(mut r: R) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidInput("not a parameter file (bad magic)".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported parameter file version {version}")));
    }
    r.read_exact(&mut u32buf)?;
    let n_groups = u32::from_le_bytes(u32buf) as usize;
    let mut shapes = Vec::with_capacity(n_groups);
    let mut u64buf = [0u8; 8];
    for _ in 0..n_groups {
        r.read_exact(&mut u32buf)?;
        let ndims = u32::from_le_bytes(u32buf) as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            r.read_exact(&mut u64buf)?;
            shape.push(u64::from_le_bytes(u64buf) as usize);
        }
        shapes.push(shape);
    }
    let mut groups = Vec::with_capacity(n_groups);
    for shape in shapes {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut u64buf)?;
            data.push(f64::from_le_bytes(u64buf));
        }
        groups.push((shape, data));
    }
    Ok(groups)
}

/// Persists residual-net parameters for reuse across runs.
pub fn save_residual_net(path: &Path, net: &ResidualNet) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_params(std::io::BufWriter::new(file), &net.param_groups())
}

/// Restores parameters into a structurally matching net and marks it trained.
pub fn load_residual_net(path: &Path, net: &mut ResidualNet) -> Result<()> {
    let file = std::fs::File::open(path)?;
    let groups = read_params(std::io::BufReader::new(file))?;
    apply_groups(&groups, net.param_groups(), |flat| net.set_params_flat(flat))?;
    net.mark_trained();
    Ok(())
}

pub fn save_classifier(path: &Path, net: &SkillClassifier) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_params(std::io::BufWriter::new(file), &net.param_groups())
}

pub fn load_classifier(path: &Path, net: &mut SkillClassifier) -> Result<()> {
    let file = std::fs::File::open(path)?;
    let groups = read_params(std::io::BufReader::new(file))?;
    apply_groups(&groups, net.param_groups(), |flat| net.set_params_flat(flat))?;
    net.mark_trained();
    Ok(())
}

fn apply_groups<F: FnOnce(&[f64])>(
    loaded: &[(Vec<usize>, Vec<f64>)],
    expected: Vec<(Vec<usize>, Vec<f64>)>,
    set: F,
) -> Result<()> {
    if loaded.len() != expected.len() {
        return Err(Error::DimensionMismatch(format!(
            "parameter file has {} groups, net expects {}",
            loaded.len(),
            expected.len()
        )));
    }
    for ((ls, _), (es, _)) in loaded.iter().zip(&expected) {
        if ls != es {
            return Err(Error::DimensionMismatch(format!(
                "parameter group shape {ls:?} does not match net shape {es:?}"
            )));
        }
    }
    let flat: Vec<f64> = loaded.iter().flat_map(|(_, d)| d.iter().copied()).collect();
    set(&flat);
    Ok(())
}
