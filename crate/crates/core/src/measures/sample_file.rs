//! Binary columnar sample files.
//!
//! Layout: the 8-byte magic, a little-endian `u64` header length, a JSON
//! header `{space, p, seed, n, dim, meta}`, then `dim` columns of `n`
//! little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChainMeta, SampleSet};
use crate::error::{LabError, Result};
use crate::geometry::{Point, Space};

pub const MAGIC: &[u8; 8] = b"SELSAMP1";

#[derive(Serialize, Deserialize)]
struct Header {
    space: Space,
    p: f64,
    seed: u64,
    n: usize,
    dim: usize,
    meta: ChainMeta,
}

/// Writes `set` to `path` through a temporary sibling that is renamed into place.
pub fn write_sample_file(path: &Path, set: &SampleSet) -> Result<()> {
    let dim = set.space().ambient_dim();
    let header = serde_json::to_vec(&Header {
        space: set.space().clone(),
        p: set.p(),
        seed: set.seed(),
        n: set.len(),
        dim,
        meta: set.meta().clone(),
    })?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for c in 0..dim {
            for pt in set.points() {
                w.write_all(&pt[c].to_le_bytes())?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_sample_file(path: &Path) -> Result<SampleSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(LabError::SampleFile("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let h: Header = serde_json::from_slice(&header)?;
    if h.dim != h.space.ambient_dim() {
        return Err(LabError::SampleFile(format!(
            "header dimension {} does not match the space ({})",
            h.dim,
            h.space.ambient_dim()
        )));
    }
    let mut coords = vec![vec![0.0; h.dim]; h.n];
    let mut buf = [0u8; 8];
    for c in 0..h.dim {
        for row in coords.iter_mut() {
            r.read_exact(&mut buf)?;
            row[c] = f64::from_le_bytes(buf);
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(LabError::SampleFile(format!("{} trailing bytes", rest.len())));
    }
    let points = coords
        .into_iter()
        .map(|c| Point::new(&h.space, c))
        .collect::<Result<Vec<_>>>()?;
    SampleSet::from_parts(h.space, h.p, h.seed, points, h.meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_space, SpaceKind};
    use crate::measures::{sample, MeasureSpec};

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = MeasureSpec::new(make_space(SpaceKind::Greiner { n: 1, zeta: 2 }).unwrap(), 4.0).unwrap();
        let set = sample(&spec, 500, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        write_sample_file(&path, &set).unwrap();
        assert_eq!(read_sample_file(&path).unwrap(), set);
        std::fs::write(&path, b"nonsense").unwrap();
        assert!(read_sample_file(&path).is_err());
    }
}
