use std::collections::HashMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BoolOp, Dim, GrammarConfig, Instruction, Primitive, PrimitiveKind, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    Prim(PrimitiveKind, [i64; 5]),
    Op(BoolOp),
    Stop,
}

fn key_of(ins: &Instruction) -> Option<Key> {
    match ins {
        Instruction::Prim(p) => p.grid_key().map(|(k, v)| Key::Prim(k, v)),
        Instruction::Op(op) => Some(Key::Op(*op)),
        Instruction::Stop => Some(Key::Stop),
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VocabError {
    #[error("instruction `{0}` at position {1} is not in the vocabulary")]
    Unknown(String, usize),
    #[error("token id {0} is out of range")]
    BadId(usize),
}

/// Indexed enumeration of every legal instruction of a grammar: primitives
/// sorted by (kind, x, y, z, r, h), then the enabled ops, then stop.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    entries: Vec<Instruction>,
    index: HashMap<Key, usize>,
    num_primitives: usize,
}

/// Whether the primitive's extent fits inside the canvas. In 2D the extent is
/// the circumscribing circle; in 3D it is the primitive's bounding box.
pub fn contained(p: &Primitive, canvas: f64) -> bool {
    let (hx, hz) = match p.kind {
        PrimitiveKind::Cube => (p.r / 2.0, p.r / 2.0),
        PrimitiveKind::Cylinder => (p.r, p.h / 2.0),
        _ => (p.r, p.r),
    };
    let inside = |c: f64, half: f64| c - half >= 0.0 && c + half <= canvas;
    let planar = inside(p.x, hx) && inside(p.y, hx);
    match p.kind.dim() {
        Dim::Two => planar,
        Dim::Three => planar && inside(p.z, hz),
    }
}

pub fn build_vocabulary(config: &GrammarConfig) -> Vocabulary {
    let locs = config.locations.values();
    let radii = config.radii.values();
    let heights = config.heights.values();
    let mut kinds = config.primitives.clone();
    kinds.sort();
    kinds.dedup();

    let mut entries = Vec::new();
    for kind in kinds {
        let zs: Vec<u32> = match config.dim {
            Dim::Two => vec![0],
            Dim::Three => locs.clone(),
        };
        let hs: Vec<u32> = if kind == PrimitiveKind::Cylinder { heights.clone() } else { vec![0] };
        for &x in &locs {
            for &y in &locs {
                for &z in &zs {
                    for &r in &radii {
                        for &h in &hs {
                            let p = Primitive {
                                kind,
                                x: x as f64,
                                y: y as f64,
                                z: z as f64,
                                r: r as f64,
                                h: h as f64,
                                continuous: false,
                            };
                            if !config.containment_filter || contained(&p, config.canvas as f64) {
                                entries.push(Instruction::Prim(p));
                            }
                        }
                    }
                }
            }
        }
    }
    let num_primitives = entries.len();
    let mut ops = config.ops.clone();
    ops.sort();
    ops.dedup();
    entries.extend(ops.into_iter().map(Instruction::Op));
    entries.push(Instruction::Stop);

    let index = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (key_of(e).expect("vocabulary entries are discrete"), i))
        .collect();
    Vocabulary { entries, index, num_primitives }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Instruction] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&Instruction> {
        self.entries.get(id)
    }

    pub fn id_of(&self, ins: &Instruction) -> Option<usize> {
        key_of(ins).and_then(|k| self.index.get(&k).copied())
    }

    pub fn num_primitives(&self) -> usize {
        self.num_primitives
    }

    pub fn stop_id(&self) -> usize {
        self.entries.len() - 1
    }

    pub fn is_primitive(&self, id: usize) -> bool {
        id < self.num_primitives
    }

    pub fn is_op(&self, id: usize) -> bool {
        id >= self.num_primitives && id < self.stop_id()
    }

    /// Token ids of every instruction, including a trailing stop if present.
    pub fn encode(&self, p: &Program) -> Result<Vec<usize>, VocabError> {
        p.instructions
            .iter()
            .enumerate()
            .map(|(i, ins)| self.id_of(ins).ok_or_else(|| VocabError::Unknown(ins.to_string(), i)))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Program, VocabError> {
        ids.iter()
            .map(|&id| self.get(id).copied().ok_or(VocabError::BadId(id)))
            .collect::<Result<Vec<_>, _>>()
            .map(Program::new)
    }

    /// Stable 64-bit hash of the entry list, stored in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.to_string().as_bytes());
            h.update(b"\n");
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }
}
