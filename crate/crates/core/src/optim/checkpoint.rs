//! Optimizer state checkpoints.
//!
//! Binary layout, all integers and reals little-endian:
//!
//! ```text
//! magic      8 bytes   "CLIPSHRP"
//! version    u32       CHECKPOINT_VERSION
//! algorithm  u8        0 sgd, 1 normalized_sgd, 2 sign_sgd, 3 adam, 4 adafactor, 5 lion
//! t          u64       steps taken
//! n_hyper    u32       then n_hyper × f64
//! n_buffers  u32       then per buffer: len u64, len × f64
//! ```
//!
//! Hyperparameters: `[beta]` for the SGD family, `[beta1, beta2, eps]` for
//! Adam, `[beta1, beta2]` for Lion, none for Adafactor. Buffers: `[m]` for the
//! SGD family and Lion, `[m, v]` for Adam, and for Adafactor one entry per
//! group in layout order — `R` then `C` for matrix groups, `V̂` for vectors.

use serde::{Deserialize, Serialize};

use super::adafactor::{Accumulator, AdafactorState};
use super::layout::{GroupLayout, GroupShape};
use super::state::{AdamState, LionState, SgdMomentumState};
use super::OptimizerState;
use crate::diffcore::ParamVector;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLIPSHRP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Structured-text form of a checkpoint; field order matches the binary form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDump {
    pub version: u32,
    pub algorithm: String,
    pub t: u64,
    pub hyper: Vec<f64>,
    pub buffers: Vec<Vec<f64>>,
}

const NAMES: [&str; 6] = ["sgd", "normalized_sgd", "sign_sgd", "adam", "adafactor", "lion"];

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl OptimizerState {
    fn tag(&self) -> u8 {
        match self {
            OptimizerState::Sgd(_) => 0,
            OptimizerState::NormalizedSgd(_) => 1,
            OptimizerState::SignSgd(_) => 2,
            OptimizerState::Adam(_) => 3,
            OptimizerState::Adafactor(_) => 4,
            OptimizerState::Lion(_) => 5,
        }
    }

    pub fn dump(&self) -> StateDump {
        let (hyper, buffers) = match self {
            OptimizerState::Sgd(s) | OptimizerState::NormalizedSgd(s) | OptimizerState::SignSgd(s) => {
                (vec![s.beta], vec![s.m.to_vec()])
            }
            OptimizerState::Adam(s) => (vec![s.beta1, s.beta2, s.eps], vec![s.m.to_vec(), s.v.to_vec()]),
            OptimizerState::Lion(s) => (vec![s.beta1, s.beta2], vec![s.m.to_vec()]),
            OptimizerState::Adafactor(s) => {
                let mut buffers = Vec::new();
                for acc in &s.accumulators {
                    match acc {
                        Accumulator::Factored { r, c, .. } => {
                            buffers.push(r.clone());
                            buffers.push(c.clone());
                        }
                        Accumulator::Full { v } => buffers.push(v.clone()),
                    }
                }
                (Vec::new(), buffers)
            }
        };
        StateDump {
            version: CHECKPOINT_VERSION,
            algorithm: NAMES[self.tag() as usize].to_owned(),
            t: self.t(),
            hyper,
            buffers,
        }
    }

    /// Rebuilds a state; `layout` supplies the dimension and Adafactor shapes.
    pub fn from_dump(dump: &StateDump, layout: &GroupLayout) -> Result<Self> {
        if dump.version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {}", dump.version)));
        }
        let d = layout.total_len();
        let t = dump.t;
        let want = |nh: usize, nb: usize| -> Result<()> {
            if dump.hyper.len() != nh || dump.buffers.len() != nb {
                return Err(corrupt(format!(
                    "{}: expected {nh} hyperparameters and {nb} buffers",
                    dump.algorithm
                )));
            }
            Ok(())
        };
        let vector = |i: usize| -> Result<ParamVector> {
            let b = &dump.buffers[i];
            if b.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: b.len() });
            }
            Ok(ParamVector::from_raw(b.clone()))
        };
        let h = &dump.hyper;
        Ok(match dump.algorithm.as_str() {
            name @ ("sgd" | "normalized_sgd" | "sign_sgd") => {
                want(1, 1)?;
                let s = SgdMomentumState { beta: h[0], m: vector(0)?, t };
                match name {
                    "sgd" => OptimizerState::Sgd(s),
                    "normalized_sgd" => OptimizerState::NormalizedSgd(s),
                    _ => OptimizerState::SignSgd(s),
                }
            }
            "adam" => {
                want(3, 2)?;
                OptimizerState::Adam(AdamState {
                    beta1: h[0],
                    beta2: h[1],
                    eps: h[2],
                    m: vector(0)?,
                    v: vector(1)?,
                    t,
                })
            }
            "lion" => {
                want(2, 1)?;
                OptimizerState::Lion(LionState { beta1: h[0], beta2: h[1], m: vector(0)?, t })
            }
            "adafactor" => {
                let mut buffers = dump.buffers.iter();
                let mut next = |len: usize| -> Result<Vec<f64>> {
                    let b = buffers.next().ok_or_else(|| corrupt("adafactor: missing buffer"))?;
                    if b.len() != len {
                        return Err(Error::DimensionMismatch { expected: len, got: b.len() });
                    }
                    Ok(b.clone())
                };
                let mut accumulators = Vec::new();
                for group in layout.groups() {
                    accumulators.push(match group.shape {
                        GroupShape::Matrix { rows, cols } => {
                            Accumulator::Factored { rows, cols, r: next(rows)?, c: next(cols)? }
                        }
                        GroupShape::Vector { len } => Accumulator::Full { v: next(len)? },
                    });
                }
                if buffers.next().is_some() || !dump.hyper.is_empty() {
                    return Err(corrupt("adafactor: trailing data"));
                }
                OptimizerState::Adafactor(AdafactorState { accumulators, t })
            }
            other => return Err(corrupt(format!("unknown algorithm {other:?}"))),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dump = self.dump();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.tag());
        out.extend_from_slice(&dump.t.to_le_bytes());
        out.extend_from_slice(&(dump.hyper.len() as u32).to_le_bytes());
        for h in &dump.hyper {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&(dump.buffers.len() as u32).to_le_bytes());
        for b in &dump.buffers {
            out.extend_from_slice(&(b.len() as u64).to_le_bytes());
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], layout: &GroupLayout) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        let tag = r.take(1)?[0] as usize;
        let algorithm = NAMES.get(tag).ok_or_else(|| corrupt(format!("unknown algorithm tag {tag}")))?;
        let t = r.u64()?;
        let n_hyper = r.u32()? as usize;
        let hyper = (0..n_hyper).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let n_buffers = r.u32()? as usize;
        let mut buffers = Vec::with_capacity(n_buffers.min(1024));
        for _ in 0..n_buffers {
            let len = r.u64()? as usize;
            if len > r.remaining() / 8 {
                return Err(corrupt("buffer length exceeds input"));
            }
            buffers.push((0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        if r.remaining() != 0 {
            return Err(corrupt("trailing bytes"));
        }
        let dump = StateDump { version, algorithm: (*algorithm).to_owned(), t, hyper, buffers };
        Self::from_dump(&dump, layout)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.dump()).expect("state dump serializes")
    }

    pub fn from_json(text: &str, layout: &GroupLayout) -> Result<Self> {
        let dump: StateDump = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        Self::from_dump(&dump, layout)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(corrupt("truncated checkpoint"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
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
}
