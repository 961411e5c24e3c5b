use std::fmt;
use std::str::FromStr;

use super::Dim;

/// Primitive shape kinds. Declaration order is alphabetical by name, which is
/// the order vocabularies list them in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimitiveKind {
    Circle,
    Cube,
    Cylinder,
    Sphere,
    Square,
    Triangle,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 6] = [
        PrimitiveKind::Circle,
        PrimitiveKind::Cube,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Sphere,
        PrimitiveKind::Square,
        PrimitiveKind::Triangle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Circle => "circle",
            PrimitiveKind::Cube => "cube",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Square => "square",
            PrimitiveKind::Triangle => "triangle",
        }
    }

    pub fn dim(self) -> Dim {
        match self {
            PrimitiveKind::Circle | PrimitiveKind::Square | PrimitiveKind::Triangle => Dim::Two,
            _ => Dim::Three,
        }
    }

    /// Number of textual parameters: location axes, radius, and height for cylinders.
    pub fn arity(self) -> usize {
        match self {
            PrimitiveKind::Cylinder => 5,
            k => k.dim().axes() + 1,
        }
    }
}

impl FromStr for PrimitiveKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        PrimitiveKind::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

/// Boolean operators. `B op A` where `A` is the top of the stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoolOp {
    Union,
    Intersect,
    Subtract,
}

impl BoolOp {
    pub const ALL: [BoolOp; 3] = [BoolOp::Union, BoolOp::Intersect, BoolOp::Subtract];

    pub fn name(self) -> &'static str {
        match self {
            BoolOp::Union => "union",
            BoolOp::Intersect => "intersect",
            BoolOp::Subtract => "subtract",
        }
    }

    pub fn apply(self, b: bool, a: bool) -> bool {
        match self {
            BoolOp::Union => b | a,
            BoolOp::Intersect => b & a,
            BoolOp::Subtract => b & !a,
        }
    }
}

impl FromStr for BoolOp {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        BoolOp::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

/// A placed primitive. Coordinates are in cell units: `x` is the column axis,
/// `y` the row axis and `z` the depth axis (unused in 2D). `h` is only
/// meaningful for cylinders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: f64,
    pub h: f64,
    /// Set for primitives whose parameters came out of continuous refinement.
    pub continuous: bool,
}

impl Primitive {
    pub fn new_2d(kind: PrimitiveKind, x: f64, y: f64, r: f64) -> Self {
        Primitive { kind, x, y, z: 0.0, r, h: 0.0, continuous: false }
    }

    pub fn new_3d(kind: PrimitiveKind, x: f64, y: f64, z: f64, r: f64, h: f64) -> Self {
        let h = if kind == PrimitiveKind::Cylinder { h } else { 0.0 };
        Primitive { kind, x, y, z, r, h, continuous: false }
    }

    /// Parameters in textual order.
    pub fn params(&self) -> Vec<f64> {
        match self.kind.arity() {
            3 => vec![self.x, self.y, self.r],
            4 => vec![self.x, self.y, self.z, self.r],
            _ => vec![self.x, self.y, self.z, self.r, self.h],
        }
    }

    /// Inverse of [`Primitive::params`]; `values.len()` must equal the kind's arity.
    pub fn from_params(kind: PrimitiveKind, values: &[f64], continuous: bool) -> Self {
        let mut p = match values.len() {
            3 => Primitive::new_2d(kind, values[0], values[1], values[2]),
            4 => Primitive::new_3d(kind, values[0], values[1], values[2], values[3], 0.0),
            5 => Primitive::new_3d(kind, values[0], values[1], values[2], values[3], values[4]),
            n => panic!("{} takes {} parameters, got {n}", kind.name(), kind.arity()),
        };
        p.continuous = continuous;
        p
    }

    /// Integer key used for vocabulary lookup; `None` for continuous or
    /// non-integral parameters.
    pub fn grid_key(&self) -> Option<(PrimitiveKind, [i64; 5])> {
        if self.continuous {
            return None;
        }
        let vals = [self.x, self.y, self.z, self.r, self.h];
        if vals.iter().any(|v| v.fract() != 0.0 || !v.is_finite()) {
            return None;
        }
        Some((self.kind, vals.map(|v| v as i64)))
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind.name())?;
        for (i, v) in self.params().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            if self.continuous {
                // Debug keeps a decimal point, so the continuous flag survives parsing.
                write!(f, "{v:?}")?;
            } else {
                write!(f, "{}", *v as i64)?;
            }
        }
        f.write_str(")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Instruction {
    Prim(Primitive),
    Op(BoolOp),
    Stop,
}

impl Instruction {
    pub fn is_primitive(&self) -> bool {
        matches!(self, Instruction::Prim(_))
    }

    pub fn is_op(&self) -> bool {
        matches!(self, Instruction::Op(_))
    }

    pub fn as_primitive(&self) -> Option<&Primitive> {
        match self {
            Instruction::Prim(p) => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Instruction::Prim(p) => p.fmt(f),
            Instruction::Op(op) => f.write_str(op.name()),
            Instruction::Stop => f.write_str("stop"),
        }
    }
}

impl From<Primitive> for Instruction {
    fn from(p: Primitive) -> Self {
        Instruction::Prim(p)
    }
}

impl From<BoolOp> for Instruction {
    fn from(op: BoolOp) -> Self {
        Instruction::Op(op)
    }
}
