//! Compact binary file holding an ordering and its conditioning sets.
//!
//! Layout, all integers little-endian `u64` and floats little-endian `f64`:
//! magic `AGPVECCH`, version, `n`, `m`, `dim`, scaling (`dim` floats),
//! order (`n`), offsets (`n + 1`), indices (`offsets[n]`).

use std::io::{Read, Write};

use super::{CondSets, VecchiaLayout};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"AGPVECCH";
pub const VERSION: u64 = 1;

fn put(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated layout file: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

fn get_usize(r: &mut impl Read, bound: usize) -> Result<usize> {
    let v = get(r)?;
    usize::try_from(v)
        .ok()
        .filter(|&x| x <= bound)
        .ok_or_else(|| Error::Format(format!("value {v} out of range in layout file")))
}

pub fn write_layout(mut w: impl Write, layout: &VecchiaLayout) -> Result<()> {
    w.write_all(MAGIC)?;
    put(&mut w, VERSION)?;
    put(&mut w, layout.order.len() as u64)?;
    put(&mut w, layout.m as u64)?;
    put(&mut w, layout.scaling.len() as u64)?;
    for s in &layout.scaling {
        w.write_all(&s.to_le_bytes())?;
    }
    for &i in &layout.order {
        put(&mut w, i as u64)?;
    }
    for &o in layout.cond_sets.offsets() {
        put(&mut w, o as u64)?;
    }
    for &i in layout.cond_sets.raw_indices() {
        put(&mut w, i as u64)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_layout(mut r: impl Read) -> Result<VecchiaLayout> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("not a layout file".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format("not a layout file (bad magic)".into()));
    }
    let version = get(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported layout version {version}")));
    }
    const LIMIT: usize = 1 << 40;
    let n = get_usize(&mut r, LIMIT)?;
    let m = get_usize(&mut r, LIMIT)?;
    let dim = get_usize(&mut r, 64)?;
    let mut scaling = Vec::with_capacity(dim);
    for _ in 0..dim {
        scaling.push(f64::from_bits(get(&mut r)?));
    }
    let order = (0..n).map(|_| get_usize(&mut r, n)).collect::<Result<Vec<_>>>()?;
    let offsets = (0..=n).map(|_| get_usize(&mut r, LIMIT)).collect::<Result<Vec<_>>>()?;
    if offsets.windows(2).any(|w| w[0] > w[1]) || offsets.first() != Some(&0) {
        return Err(Error::Format("conditioning-set offsets are not monotone".into()));
    }
    let nnz = offsets[n];
    let indices = (0..nnz).map(|_| get_usize(&mut r, n)).collect::<Result<Vec<_>>>()?;
    let sets: Vec<Vec<usize>> = offsets.windows(2).map(|w| indices[w[0]..w[1]].to_vec()).collect();
    let cond_sets = CondSets::from_sets(&sets);
    let mut seen = vec![false; n];
    for &i in &order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Format("order is not a permutation".into()));
        }
    }
    if !cond_sets.is_valid(m) {
        return Err(Error::Format("conditioning sets are inconsistent with m".into()));
    }
    Ok(VecchiaLayout {
        order,
        cond_sets,
        scaling,
        m,
    })
}
