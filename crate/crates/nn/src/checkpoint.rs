//! `UMOC` checkpoint files.
//!
//! Layout, little-endian: magic `UMOC`, `u32` version, `u32` field count and
//! the [`ModelConfig`] fields as `u32` (arch encoded by [`CondArch::code`]),
//! the 32-byte vocabulary hash, `u32` tensor count, then per tensor: `u32`
//! name length, UTF-8 name, `u32` rank, `u32` dims, `f32` data row-major.
//! Normalization statistics travel as `norm.mean` and `norm.std`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use umo_core::motion::{NormStats, FRAME_DIM};
use umo_core::prompt::Vocab;

use crate::error::{NnError, Result};
use crate::model::{CondArch, Model, ModelConfig};
use crate::params::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UMOC";
pub const CHECKPOINT_VERSION: u32 = 1;
const CONFIG_FIELDS: u32 = 10;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub stats: NormStats,
}

impl Checkpoint {
    pub fn new(model: &Model, store: &ParamStore, stats: &NormStats) -> Self {
        Self { config: model.cfg, store: store.clone(), stats: stats.clone() }
    }

    /// Rebuilds the model; trainable flags follow the config's arch.
    pub fn into_model(self) -> Result<(Model, ParamStore, NormStats)> {
        let mut store = self.store;
        let model = Model::from_parts(self.config, &mut store)?;
        Ok((model, store, self.stats))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(&mut BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.config;
        w.write_all(CHECKPOINT_MAGIC)?;
        put_u32(w, CHECKPOINT_VERSION)?;
        put_u32(w, CONFIG_FIELDS)?;
        for v in [c.hidden, c.layers, c.heads, c.ffn_mult, c.max_frames, c.text_layers, c.text_dim, c.max_tokens, c.vocab_size] {
            put_u32(w, to_u32(v)?)?;
        }
        put_u32(w, CondArch::code(c.arch))?;
        w.write_all(&Vocab::builtin().hash())?;
        let norm = [
            ("norm.mean", Array2::from_shape_vec((1, FRAME_DIM), self.stats.mean.clone())),
            ("norm.std", Array2::from_shape_vec((1, FRAME_DIM), self.stats.std.clone())),
        ];
        put_u32(w, to_u32(self.store.len() + norm.len())?)?;
        for id in self.store.ids() {
            put_tensor(w, self.store.name(id), self.store.value(id))?;
        }
        for (name, v) in norm {
            let v = v.map_err(|_| NnError::Checkpoint("normalization stats must have 201 channels".into()))?;
            put_tensor(w, name, &v)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = get_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let fields = get_u32(r)?;
        if fields != CONFIG_FIELDS {
            return Err(NnError::Checkpoint(format!("expected {CONFIG_FIELDS} config fields, found {fields}")));
        }
        let mut f = [0usize; 9];
        for v in f.iter_mut() {
            *v = get_u32(r)? as usize;
        }
        let code = get_u32(r)?;
        let arch = CondArch::from_code(code).ok_or_else(|| NnError::Checkpoint(format!("unknown arch code {code}")))?;
        let config = ModelConfig {
            hidden: f[0],
            layers: f[1],
            heads: f[2],
            ffn_mult: f[3],
            max_frames: f[4],
            text_layers: f[5],
            text_dim: f[6],
            max_tokens: f[7],
            vocab_size: f[8],
            arch,
        };
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let vocab = Vocab::builtin();
        if hash != vocab.hash() {
            return Err(NnError::VocabMismatch { expected: vocab.hash_hex(), found: hex_string(&hash) });
        }
        if config.vocab_size != vocab.len() {
            return Err(NnError::Checkpoint(format!(
                "config vocabulary size {} differs from the built-in {}",
                config.vocab_size,
                vocab.len()
            )));
        }
        config.validate()?;
        let count = get_u32(r)?;
        let mut store = ParamStore::default();
        let (mut mean, mut std) = (None, None);
        for _ in 0..count {
            let (name, value) = get_tensor(r)?;
            match name.as_str() {
                "norm.mean" => mean = Some(value.iter().copied().collect::<Vec<_>>()),
                "norm.std" => std = Some(value.iter().copied().collect::<Vec<_>>()),
                _ => {
                    store.add(&name, value, true);
                }
            }
        }
        let (Some(mean), Some(std)) = (mean, std) else {
            return Err(NnError::Checkpoint("missing normalization statistics".into()));
        };
        let ckpt = Self { config, store, stats: NormStats { mean, std } };
        ckpt.check_shapes()?;
        Ok(ckpt)
    }

    /// Every tensor a fresh model of this config would have, with equal shapes.
    fn check_shapes(&self) -> Result<()> {
        let (_, fresh) = Model::init(self.config, 0)?;
        for id in fresh.ids() {
            let name = fresh.name(id);
            match self.store.get(name) {
                None => return Err(NnError::Checkpoint(format!("missing tensor `{name}`"))),
                Some(v) if v.dim() != fresh.value(id).dim() => {
                    return Err(NnError::Checkpoint(format!(
                        "tensor `{name}` is {:?}, config implies {:?}",
                        v.dim(),
                        fresh.value(id).dim()
                    )))
                }
                Some(_) => {}
            }
        }
        if self.store.len() != fresh.len() {
            return Err(NnError::Checkpoint(format!("{} tensors, config implies {}", self.store.len(), fresh.len())));
        }
        Ok(())
    }
}

/// Loads a checkpoint and rejects it unless its config equals `expected`
/// (architecture aside).
pub fn load_matching(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.config.with_arch(None) != expected.with_arch(None) {
        return Err(NnError::Checkpoint(format!(
            "config mismatch: file has {:?}, expected {:?}",
            ckpt.config, expected
        )));
    }
    Ok(ckpt)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| NnError::Checkpoint(format!("value {v} does not fit in u32")))
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn put_tensor<W: Write>(w: &mut W, name: &str, v: &Array2<f64>) -> Result<()> {
    put_u32(w, to_u32(name.len())?)?;
    w.write_all(name.as_bytes())?;
    put_u32(w, 2)?;
    put_u32(w, to_u32(v.nrows())?)?;
    put_u32(w, to_u32(v.ncols())?)?;
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v.iter() {
        buf.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

const MAX_NAME: u32 = 256;
const MAX_ELEMS: usize = 1 << 28;

fn get_tensor<R: Read>(r: &mut R) -> Result<(String, Array2<f64>)> {
    let len = get_u32(r)?;
    if len == 0 || len > MAX_NAME {
        return Err(NnError::Checkpoint(format!("bad tensor name length {len}")));
    }
    let mut name = vec![0u8; len as usize];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
    let rank = get_u32(r)?;
    if rank != 2 {
        return Err(NnError::Checkpoint(format!("tensor `{name}` has rank {rank}, expected 2")));
    }
    let rows = get_u32(r)? as usize;
    let cols = get_u32(r)? as usize;
    let n = rows.checked_mul(cols).filter(|&n| n <= MAX_ELEMS).ok_or_else(|| {
        NnError::Checkpoint(format!("tensor `{name}` is too large"))
    })?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)?;
    let data: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let v = Array2::from_shape_vec((rows, cols), data).expect("length checked");
    Ok((name, v))
}
