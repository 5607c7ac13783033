//! `RUNP` checkpoint files and `history.csv`.
//!
//! Layout (little-endian): magic `RUNP`, `u32` version, `u32` length plus
//! UTF-8 JSON echo of the [`NetConfig`], `u32` blob count, then per blob a
//! `u32` name length, the name, a `u32` value count and the values as `f32`.
//! Blobs cover trainable parameters and batch-norm running statistics.

use super::layers::Params;
use super::net::{NetConfig, ResUNetPlus};
use super::train::EpochRecord;
use super::NetError;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RUNP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn named_blobs(net: &ResUNetPlus) -> Vec<(String, &[f64])> {
    let mut v = Vec::new();
    net.params("", &mut v);
    net.buffers("", &mut v);
    v
}

pub fn checkpoint_to_bytes(net: &ResUNetPlus) -> Vec<u8> {
    let config = serde_json::to_vec(&net.config).expect("config serialises");
    let blobs = named_blobs(net);
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);
    out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
    for (name, values) in blobs {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for &v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(NetError::Checkpoint("truncated file".into())),
        }
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ResUNetPlus, NetError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(NetError::Checkpoint("missing RUNP magic".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NetError::Checkpoint(format!("unsupported version {version}")));
    }
    let clen = cur.u32()? as usize;
    let config: NetConfig =
        serde_json::from_slice(cur.take(clen)?).map_err(|e| NetError::Checkpoint(format!("config echo: {e}")))?;
    let count = cur.u32()? as usize;
    let mut blobs: HashMap<String, Vec<f64>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let nlen = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(nlen)?.to_vec())
            .map_err(|_| NetError::Checkpoint("blob name is not UTF-8".into()))?;
        let vlen = cur.u32()? as usize;
        let raw = cur.take(vlen.checked_mul(4).ok_or_else(|| NetError::Checkpoint("blob too large".into()))?)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        blobs.insert(name, values);
    }
    if cur.pos != bytes.len() {
        return Err(NetError::Checkpoint("trailing bytes".into()));
    }

    let mut net = ResUNetPlus::new(&config)?;
    let mut filled = 0usize;
    let mut fill = |slots: Vec<(String, &mut [f64])>| -> Result<(), NetError> {
        for (name, slot) in slots {
            let values = blobs
                .get(&name)
                .ok_or_else(|| NetError::Checkpoint(format!("missing blob {name}")))?;
            if values.len() != slot.len() {
                return Err(NetError::Checkpoint(format!(
                    "blob {name} has {} values, layer expects {}",
                    values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(values);
            filled += 1;
        }
        Ok(())
    };
    let mut slots = Vec::new();
    net.params_mut("", &mut slots);
    fill(slots)?;
    let mut slots = Vec::new();
    net.buffers_mut("", &mut slots);
    fill(slots)?;
    if blobs.len() != filled {
        return Err(NetError::Checkpoint(format!(
            "{} blobs stored, network has {filled}",
            blobs.len()
        )));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &ResUNetPlus, path: impl AsRef<Path>) -> Result<(), NetError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&checkpoint_to_bytes(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ResUNetPlus, NetError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    checkpoint_from_bytes(&buf)
}

/// Writes `epoch,train_loss,val_loss,val_iou`; missing validation values
/// are left empty.
pub fn write_history_csv<W: Write>(history: &[EpochRecord], out: W) -> Result<(), NetError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "val_loss", "val_iou"])
        .map_err(|e| NetError::Checkpoint(e.to_string()))?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            format!("{:.17e}", r.train_loss),
            opt(r.val_loss),
            opt(r.val_iou),
        ])
        .map_err(|e| NetError::Checkpoint(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history_csv<R: Read>(input: R) -> Result<Vec<EpochRecord>, NetError> {
    let mut r = csv::Reader::from_reader(input);
    let bad = |e: String| NetError::Checkpoint(format!("history.csv: {e}"));
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> Result<Option<f64>, NetError> {
            match rec.get(i) {
                Some("") | None => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| bad(format!("bad number {s:?}"))),
            }
        };
        out.push(EpochRecord {
            epoch: rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad epoch".into()))?,
            train_loss: num(1)?.ok_or_else(|| bad("missing train loss".into()))?,
            val_loss: num(2)?,
            val_iou: num(3)?,
        });
    }
    Ok(out)
}
