//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "PGCKPT\0\0"
//! version      u32       currently 1
//! header_len   u64
//! header       JSON      architecture, dimensions, vocabulary, tensor table
//! payload      f64 LE    every tensor in tensor-table order
//! ```
//!
//! The tensor table lists `(name, shape)` in the order of
//! [`NetworkParams::visit`], so a reader can locate any array without
//! knowing the architecture's layout in advance.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::params::{Arch, Direction, ModelConfig, NetworkParams};
use crate::models::vocab::Vocabulary;
use crate::numerics::SeededRng;

pub const MAGIC: &[u8; 8] = b"PGCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub vocab: Vocabulary,
}

#[derive(Serialize, Deserialize)]
struct Header {
    arch: Arch,
    direction: Direction,
    kernel_width: usize,
    embed_dim: usize,
    hidden_dim: usize,
    classes: usize,
    vocab: Vocabulary,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn tensor_table(params: &NetworkParams) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    params.visit(&mut |name, shape, _| {
        out.push(TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
        })
    });
    out
}

impl Checkpoint {
    pub fn new(params: NetworkParams, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() != params.vocab_size() {
            return Err(Error::shape(format!(
                "vocabulary has {} entries, embedding table {} rows",
                vocab.len(),
                params.vocab_size()
            )));
        }
        Ok(Checkpoint { params, vocab })
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let p = &self.params;
        let header = Header {
            arch: p.arch,
            direction: p.direction,
            kernel_width: p.kernel_width,
            embed_dim: p.embed_dim(),
            hidden_dim: p.hidden_dim(),
            classes: p.classes(),
            vocab: self.vocab.clone(),
            tensors: tensor_table(p),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut payload = Vec::with_capacity(p.parameter_count() * 8);
        for v in p.flatten() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let version = u32::from_le_bytes(buf4);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let len = u64::from_le_bytes(buf8) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        let mut vocab = header.vocab;
        vocab.reindex();
        let config = ModelConfig {
            arch: header.arch,
            direction: header.direction,
            vocab_size: vocab.len(),
            embed_dim: header.embed_dim,
            hidden_dim: header.hidden_dim,
            classes: header.classes,
            kernel_width: header.kernel_width,
            init_scale: 0.0,
        };
        let mut params = NetworkParams::init(&config, &mut SeededRng::new(0))?;
        if tensor_table(&params) != header.tensors {
            return Err(Error::Checkpoint(
                "tensor table does not match architecture".into(),
            ));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if payload.len() != params.parameter_count() * 8 {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                params.parameter_count() * 8
            )));
        }
        let flat: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        params.assign_flat(&flat)?;
        Ok(Checkpoint { params, vocab })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes)?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
