//! Binary checkpoint format: version, config echo, flat parameter payload,
//! ray-group snapshot, and step count. Parameters round-trip bitwise.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{FieldConfig, FieldSet};
use crate::training::groups::RayGroups;

const MAGIC: &[u8; 4] = b"RLCK";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub struct Checkpoint {
    pub fields: FieldSet,
    pub groups: Option<RayGroups>,
    pub step: u64,
    /// Training configuration echoed as JSON for provenance.
    pub config_json: String,
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
    out.extend_from_slice(b);
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_bytes(&mut out, serde_json::to_string(&ck.fields.cfg)?.as_bytes());
    put_bytes(&mut out, ck.config_json.as_bytes());

    out.extend_from_slice(&(ck.fields.params.len() as u64).to_le_bytes());
    for v in &ck.fields.params {
        out.extend_from_slice(&v.to_le_bytes());
    }

    match &ck.groups {
        Some(g) => {
            out.push(1);
            out.extend_from_slice(&(g.len() as u64).to_le_bytes());
            let mut bits = vec![0u8; g.len()];
            for id in g.certain_ids() {
                bits[id] = 1;
            }
            out.extend_from_slice(&bits);
            out.extend_from_slice(&(g.update_count as u64).to_le_bytes());
            out.extend_from_slice(&g.current_k.to_le_bytes());
        }
        None => out.push(0),
    }
    out.extend_from_slice(&ck.step.to_le_bytes());

    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut data)
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { data: &data, pos: 0 };

    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let field_cfg: FieldConfig = serde_json::from_slice(r.bytes()?)?;
    let config_json = String::from_utf8_lossy(r.bytes()?).into_owned();

    let n_params = r.u64()? as usize;
    let layout = field_cfg.layout();
    if n_params != layout.total() {
        return Err(Error::Checkpoint(format!(
            "parameter count {n_params} does not match config layout {}",
            layout.total()
        )));
    }
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        params.push(r.f64()?);
    }
    let fields = FieldSet { cfg: field_cfg, layout, params };

    let groups = match r.take(1)?[0] {
        0 => None,
        _ => {
            let n = r.u64()? as usize;
            let bits = r.take(n)?.to_vec();
            let update_count = r.u64()? as usize;
            let current_k = r.f64()?;
            Some(RayGroups::from_membership(
                bits.into_iter().map(|b| b != 0).collect(),
                update_count,
                current_k,
            ))
        }
    };
    let step = r.u64()?;
    Ok(Checkpoint { fields, groups, step, config_json })
}
