use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{BoolOp, PrimitiveKind};

/// Dimensionality of the canvas a grammar draws on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn axes(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }
}

/// Inclusive arithmetic sequence `start, start + step, ..., <= end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridRange {
    pub start: u32,
    pub step: u32,
    pub end: u32,
}

impl GridRange {
    pub const fn new(start: u32, step: u32, end: u32) -> Self {
        GridRange { start, step, end }
    }

    pub fn values(&self) -> Vec<u32> {
        if self.step == 0 {
            return vec![self.start];
        }
        (self.start..=self.end).step_by(self.step as usize).collect()
    }

    pub fn contains(&self, v: u32) -> bool {
        if v < self.start || v > self.end {
            return false;
        }
        self.step == 0 && v == self.start || self.step != 0 && (v - self.start) % self.step == 0
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("grid `{0}` is empty or has values outside (0, canvas]")]
    BadGrid(&'static str),
    #[error("at least one primitive kind and one boolean op are required")]
    EmptyAlphabet,
    #[error("primitive kind `{0}` does not belong to a {1}-dimensional grammar")]
    WrongDimension(&'static str, usize),
    #[error("max_length must be at least 3, got {0}")]
    MaxLength(usize),
    #[error("canvas extent must be positive")]
    Canvas,
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

/// Grammar parameters: which primitives exist, where they can sit and how
/// long programs may be.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrammarConfig {
    pub dim: Dim,
    pub canvas: u32,
    pub locations: GridRange,
    pub radii: GridRange,
    /// Cylinder heights; ignored in 2D.
    pub heights: GridRange,
    pub primitives: Vec<PrimitiveKind>,
    pub ops: Vec<BoolOp>,
    pub max_length: usize,
    pub containment_filter: bool,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        Self::default_2d()
    }
}

impl GrammarConfig {
    /// 64x64 canvas, locations 8..=56 step 8, radii 8..=32 step 4.
    pub fn default_2d() -> Self {
        GrammarConfig {
            dim: Dim::Two,
            canvas: 64,
            locations: GridRange::new(8, 8, 56),
            radii: GridRange::new(8, 4, 32),
            heights: GridRange::new(8, 4, 32),
            primitives: vec![PrimitiveKind::Circle, PrimitiveKind::Square, PrimitiveKind::Triangle],
            ops: BoolOp::ALL.to_vec(),
            max_length: 13,
            containment_filter: false,
        }
    }

    pub fn default_3d() -> Self {
        GrammarConfig {
            dim: Dim::Three,
            primitives: vec![PrimitiveKind::Cube, PrimitiveKind::Cylinder, PrimitiveKind::Sphere],
            ..Self::default_2d()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.canvas == 0 {
            return Err(ConfigError::Canvas);
        }
        let mut grids = vec![("locations", self.locations), ("radii", self.radii)];
        if self.dim == Dim::Three {
            grids.push(("heights", self.heights));
        }
        for (name, g) in grids {
            let vals = g.values();
            if vals.is_empty() || vals.iter().any(|&v| v == 0 || v > self.canvas) {
                return Err(ConfigError::BadGrid(name));
            }
        }
        if self.primitives.is_empty() || self.ops.is_empty() {
            return Err(ConfigError::EmptyAlphabet);
        }
        if let Some(k) = self.primitives.iter().find(|k| k.dim() != self.dim) {
            return Err(ConfigError::WrongDimension(k.name(), self.dim.axes()));
        }
        if self.max_length < 3 {
            return Err(ConfigError::MaxLength(self.max_length));
        }
        Ok(())
    }

    /// Raster dimensions as (depth, rows, cols); depth is 1 in 2D.
    pub fn raster_shape(&self) -> [usize; 3] {
        let n = self.canvas as usize;
        match self.dim {
            Dim::Two => [1, n, n],
            Dim::Three => [n, n, n],
        }
    }

    pub fn has_primitive(&self, kind: PrimitiveKind) -> bool {
        self.primitives.contains(&kind)
    }

    pub fn has_op(&self, op: BoolOp) -> bool {
        self.ops.contains(&op)
    }

    /// Serializes to the flat `key = value` format read by [`GrammarConfig::from_kv`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let b = |x: bool| x as u8;
        let _ = writeln!(s, "dim = {}", self.dim.axes());
        let _ = writeln!(s, "canvas = {}", self.canvas);
        for (prefix, g) in [("loc", self.locations), ("radius", self.radii), ("height", self.heights)] {
            let _ = writeln!(s, "{prefix}_start = {}", g.start);
            let _ = writeln!(s, "{prefix}_step = {}", g.step);
            let _ = writeln!(s, "{prefix}_end = {}", g.end);
        }
        for kind in PrimitiveKind::ALL {
            if kind.dim() == self.dim {
                let _ = writeln!(s, "prim_{} = {}", kind.name(), b(self.has_primitive(kind)));
            }
        }
        for op in BoolOp::ALL {
            let _ = writeln!(s, "op_{} = {}", op.name(), b(self.has_op(op)));
        }
        let _ = writeln!(s, "max_length = {}", self.max_length);
        let _ = writeln!(s, "containment_filter = {}", b(self.containment_filter));
        s
    }

    /// Parses the flat key-value format. Unknown keys are rejected; missing keys
    /// fall back to the defaults for the declared `dim`.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let kv = parse_kv(text)?;
        let dim = match kv.get("dim").map(|(_, v)| *v) {
            None | Some(2) => Dim::Two,
            Some(3) => Dim::Three,
            Some(other) => {
                let line = kv["dim"].0;
                return Err(ConfigError::Syntax { line, reason: format!("dim must be 2 or 3, got {other}") });
            }
        };
        let mut cfg = match dim {
            Dim::Two => Self::default_2d(),
            Dim::Three => Self::default_3d(),
        };
        let mut prims: Vec<PrimitiveKind> = cfg.primitives.clone();
        let mut ops: Vec<BoolOp> = cfg.ops.clone();
        for (key, &(line, value)) in &kv {
            let as_u32 = || {
                u32::try_from(value)
                    .map_err(|_| ConfigError::Syntax { line, reason: format!("`{key}` out of range") })
            };
            let as_flag = || match value {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(ConfigError::Syntax { line, reason: format!("`{key}` must be 0 or 1") }),
            };
            match key.as_str() {
                "dim" => {}
                "canvas" => cfg.canvas = as_u32()?,
                "loc_start" => cfg.locations.start = as_u32()?,
                "loc_step" => cfg.locations.step = as_u32()?,
                "loc_end" => cfg.locations.end = as_u32()?,
                "radius_start" => cfg.radii.start = as_u32()?,
                "radius_step" => cfg.radii.step = as_u32()?,
                "radius_end" => cfg.radii.end = as_u32()?,
                "height_start" => cfg.heights.start = as_u32()?,
                "height_step" => cfg.heights.step = as_u32()?,
                "height_end" => cfg.heights.end = as_u32()?,
                "max_length" => cfg.max_length = as_u32()? as usize,
                "containment_filter" => cfg.containment_filter = as_flag()?,
                k if k.starts_with("prim_") => {
                    let kind = PrimitiveKind::from_str(&k[5..])
                        .map_err(|_| ConfigError::Syntax { line, reason: format!("unknown primitive `{}`", &k[5..]) })?;
                    prims.retain(|p| *p != kind);
                    if as_flag()? {
                        prims.push(kind);
                    }
                }
                k if k.starts_with("op_") => {
                    let op = BoolOp::from_str(&k[3..])
                        .map_err(|_| ConfigError::Syntax { line, reason: format!("unknown op `{}`", &k[3..]) })?;
                    ops.retain(|o| *o != op);
                    if as_flag()? {
                        ops.push(op);
                    }
                }
                _ => return Err(ConfigError::Syntax { line, reason: format!("unknown key `{key}`") }),
            }
        }
        prims.sort();
        ops.sort();
        cfg.primitives = prims;
        cfg.ops = ops;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical key-value serialization.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads `key = integer` lines, skipping blanks and `#` comments.
/// Returns key -> (line number, value).
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, (usize, i64)>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, reason: "expected `key = value`".into() })?;
        let value: i64 = v
            .trim()
            .parse()
            .map_err(|_| ConfigError::Syntax { line, reason: format!("`{}` is not an integer", v.trim()) })?;
        if out.insert(k.trim().to_string(), (line, value)).is_some() {
            return Err(ConfigError::Syntax { line, reason: format!("duplicate key `{}`", k.trim()) });
        }
    }
    Ok(out)
}
