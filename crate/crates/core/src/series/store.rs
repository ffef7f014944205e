//! Versioned binary container for meta-window sets.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "TSMW"
//! version      u32      1
//! window_size  u32      δ
//! step_size    u32      k
//! meta_len     u32      l
//! channels     u32      C
//! count        u64      number of meta-windows
//! hash_len     u32      followed by hash_len bytes of UTF-8 config hash
//! count records:
//!   id_len u32, id bytes (UTF-8)
//!   t_index u64
//!   l windows: origin_index u64, label f64, δ·C inputs f64 (row-major, time-major)
//! ```
//!
//! Plain window sets (no meta-grouping) are stored with `meta_len = 1`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::Tensor;

use super::{LabeledWindow, MetaWindow, WindowSpec};

const MAGIC: &[u8; 4] = b"TSMW";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreHeader {
    pub window_size: usize,
    pub step_size: usize,
    pub meta_window_len: usize,
    pub channels: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaWindowSet {
    pub header: StoreHeader,
    pub meta_windows: Vec<MetaWindow>,
}

impl MetaWindowSet {
    /// Builds a set from dense arrays: `inputs` shaped `(n, l, δ, C)` and
    /// `labels` shaped `(n, l)`, both row-major, all from one series.
    ///
    /// This is the import path for meta-window arrays produced elsewhere
    /// (for example numpy arrays dumped with `.astype('<f8').tofile(...)`).
    /// Origins are reconstructed as `(n·l + i)·k`.
    pub fn from_dense_arrays(
        inputs: &[f64],
        labels: &[f64],
        shape: (usize, usize, usize, usize),
        step_size: usize,
        series_id: &str,
    ) -> Result<Self> {
        let (n, l, delta, c) = shape;
        if inputs.len() != n * l * delta * c || labels.len() != n * l {
            return Err(Error::Shape(format!(
                "arrays do not match shape ({n}, {l}, {delta}, {c}): {} inputs, {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let spec = WindowSpec::new(delta, step_size)?;
        let per_window = delta * c;
        let meta_windows = (0..n)
            .map(|m| {
                let windows = (0..l)
                    .map(|i| {
                        let w = m * l + i;
                        LabeledWindow {
                            inputs: Tensor::from_vec(
                                &[delta, c],
                                inputs[w * per_window..(w + 1) * per_window].to_vec(),
                            )
                            .expect("δ·C values"),
                            label: labels[w],
                            origin_index: w * spec.step_size,
                        }
                    })
                    .collect();
                MetaWindow::new(windows, series_id, m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetaWindowSet {
            header: StoreHeader {
                window_size: delta,
                step_size,
                meta_window_len: l,
                channels: c,
                config_hash: String::new(),
            },
            meta_windows,
        })
    }

    /// Distinct series ids in order of first appearance.
    pub fn series_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for m in &self.meta_windows {
            if ids.last() != Some(&m.series_id()) {
                ids.push(m.series_id());
            }
        }
        ids
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Data(format!("value {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_meta_windows(path: &Path, set: &MetaWindowSet) -> Result<()> {
    let h = &set.header;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, h.window_size)?;
    put_u32(&mut out, h.step_size)?;
    put_u32(&mut out, h.meta_window_len)?;
    put_u32(&mut out, h.channels)?;
    out.extend_from_slice(&(set.meta_windows.len() as u64).to_le_bytes());
    put_u32(&mut out, h.config_hash.len())?;
    out.extend_from_slice(h.config_hash.as_bytes());
    for mw in &set.meta_windows {
        if mw.len() != h.meta_window_len || mw.window_size() != h.window_size || mw.num_channels() != h.channels {
            return Err(Error::Shape(format!(
                "meta-window {}/{} does not match the set header",
                mw.series_id(),
                mw.t_index()
            )));
        }
        put_u32(&mut out, mw.series_id().len())?;
        out.extend_from_slice(mw.series_id().as_bytes());
        out.extend_from_slice(&(mw.t_index() as u64).to_le_bytes());
        for w in mw.windows() {
            out.extend_from_slice(&(w.origin_index as u64).to_le_bytes());
            out.extend_from_slice(&w.label.to_le_bytes());
            for v in w.inputs.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Data("truncated meta-window file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Data("invalid UTF-8 in meta-window file".into()))
    }
}

pub fn read_meta_windows(path: &Path) -> Result<MetaWindowSet> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Data(format!("{}: not a meta-window file", path.display())));
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(Error::Data(format!("{}: unsupported version {version}", path.display())));
    }
    let header = StoreHeader {
        window_size: cur.u32()?,
        step_size: cur.u32()?,
        meta_window_len: cur.u32()?,
        channels: cur.u32()?,
        config_hash: String::new(),
    };
    let count = cur.u64()? as usize;
    let header = StoreHeader {
        config_hash: cur.string()?,
        ..header
    };
    let (delta, c, l) = (header.window_size, header.channels, header.meta_window_len);
    let mut meta_windows = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let id = cur.string()?;
        let t_index = cur.u64()? as usize;
        let mut windows = Vec::with_capacity(l);
        for _ in 0..l {
            let origin_index = cur.u64()? as usize;
            let label = cur.f64()?;
            let inputs = (0..delta * c).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            windows.push(LabeledWindow {
                inputs: Tensor::from_vec(&[delta, c], inputs)?,
                label,
                origin_index,
            });
        }
        meta_windows.push(MetaWindow::new(windows, id, t_index)?);
    }
    if cur.pos != buf.len() {
        return Err(Error::Data(format!("{}: trailing bytes", path.display())));
    }
    Ok(MetaWindowSet { header, meta_windows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_import_and_round_trip() {
        let (n, l, d, c) = (3, 2, 4, 2);
        let inputs: Vec<f64> = (0..n * l * d * c).map(|v| v as f64 * 0.5).collect();
        let labels: Vec<f64> = (0..n * l).map(|v| v as f64).collect();
        let mut set = MetaWindowSet::from_dense_arrays(&inputs, &labels, (n, l, d, c), 1, "city").unwrap();
        set.header.config_hash = "abc".into();
        assert_eq!(set.meta_windows[1].windows()[0].label, 2.0);
        assert_eq!(set.meta_windows[1].windows()[0].inputs.data()[0], 16.0 * 0.5);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.tsmw");
        write_meta_windows(&p, &set).unwrap();
        let back = read_meta_windows(&p).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad");
        std::fs::write(&p, b"NOPE").unwrap();
        assert!(read_meta_windows(&p).is_err());
        let set = MetaWindowSet::from_dense_arrays(&[1.0; 4], &[0.0; 2], (1, 2, 2, 1), 1, "s").unwrap();
        write_meta_windows(&p, &set).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_meta_windows(&p).is_err());
    }

    #[test]
    fn shape_mismatch_in_dense_import() {
        assert!(MetaWindowSet::from_dense_arrays(&[0.0; 5], &[0.0; 2], (1, 2, 2, 1), 1, "s").is_err());
    }
}
