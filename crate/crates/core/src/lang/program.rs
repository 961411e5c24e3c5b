use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{BoolOp, Dim, GrammarConfig, Instruction, Primitive, PrimitiveKind};

/// A postfix instruction sequence. A trailing [`Instruction::Stop`] marks a
/// terminated program; dataset programs are stored without it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Program {
    pub instructions: Vec<Instruction>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Program { instructions }
    }

    pub fn terminated(&self) -> bool {
        matches!(self.instructions.last(), Some(Instruction::Stop))
    }

    /// Instructions without the trailing stop.
    pub fn body(&self) -> &[Instruction] {
        match self.instructions.split_last() {
            Some((Instruction::Stop, rest)) => rest,
            _ => &self.instructions,
        }
    }

    /// Length excluding the trailing stop.
    pub fn len(&self) -> usize {
        self.body().len()
    }

    pub fn is_empty(&self) -> bool {
        self.body().is_empty()
    }

    pub fn primitives(&self) -> impl Iterator<Item = &Primitive> {
        self.body().iter().filter_map(Instruction::as_primitive)
    }

    pub fn num_primitives(&self) -> usize {
        self.primitives().count()
    }

    pub fn num_ops(&self) -> usize {
        self.body().iter().filter(|i| i.is_op()).count()
    }

    /// Copy with a trailing stop appended if missing.
    pub fn with_stop(&self) -> Program {
        let mut p = Program::new(self.body().to_vec());
        p.instructions.push(Instruction::Stop);
        p
    }

    pub fn without_stop(&self) -> Program {
        Program::new(self.body().to_vec())
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, ins) in self.instructions.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            ins.fmt(f)?;
        }
        Ok(())
    }
}

/// Canonical text form; inverse of [`parse_program`].
pub fn format_program(p: &Program) -> String {
    p.to_string()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("token {index} `{token}`: {reason}")]
    Syntax { index: usize, token: String, reason: String },
    #[error("token {index} `{token}`: {reason}")]
    Range { index: usize, token: String, reason: String },
}

/// Parses whitespace-separated tokens: `kind(a,b,..)`, an op word, or `stop`.
///
/// Integer parameters must lie on the configured grids. Any parameter written
/// with a decimal point or exponent marks the primitive as continuous and
/// skips the grid check.
pub fn parse_program(text: &str, config: &GrammarConfig) -> Result<Program, ParseError> {
    let mut instructions = Vec::new();
    for (index, token) in text.split_whitespace().enumerate() {
        instructions.push(parse_token(index, token, config)?);
    }
    Ok(Program { instructions })
}

fn parse_token(index: usize, token: &str, config: &GrammarConfig) -> Result<Instruction, ParseError> {
    let syntax = |reason: String| ParseError::Syntax { index, token: token.to_string(), reason };
    let range = |reason: String| ParseError::Range { index, token: token.to_string(), reason };

    if token == "stop" {
        return Ok(Instruction::Stop);
    }
    if let Ok(op) = BoolOp::from_str(token) {
        if !config.has_op(op) {
            return Err(range(format!("op `{}` is not enabled in this grammar", op.name())));
        }
        return Ok(Instruction::Op(op));
    }
    let (name, rest) = token.split_once('(').ok_or_else(|| syntax("expected `kind(...)`, an op or `stop`".into()))?;
    let args = rest.strip_suffix(')').ok_or_else(|| syntax("missing closing `)`".into()))?;
    let kind = PrimitiveKind::from_str(name).map_err(|_| syntax(format!("unknown primitive `{name}`")))?;
    if kind.dim() != config.dim {
        return Err(syntax(format!("`{name}` is not a {}-dimensional primitive", config.dim.axes())));
    }
    if !config.has_primitive(kind) {
        return Err(range(format!("primitive `{name}` is not enabled in this grammar")));
    }
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != kind.arity() {
        return Err(syntax(format!("`{name}` takes {} parameters, got {}", kind.arity(), parts.len())));
    }
    let continuous = parts.iter().any(|p| p.contains(['.', 'e', 'E']));
    let mut values = Vec::with_capacity(parts.len());
    for part in &parts {
        let v = if continuous {
            part.parse::<f64>().ok().filter(|v| v.is_finite())
        } else {
            part.parse::<i64>().ok().map(|v| v as f64)
        };
        values.push(v.ok_or_else(|| syntax(format!("bad parameter `{part}`")))?);
    }
    let prim = Primitive::from_params(kind, &values, continuous);
    if !continuous {
        check_on_grid(&prim, config).map_err(range)?;
    }
    Ok(Instruction::Prim(prim))
}

fn check_on_grid(p: &Primitive, config: &GrammarConfig) -> Result<(), String> {
    let on = |v: f64, g: &super::GridRange| v >= 0.0 && v <= u32::MAX as f64 && g.contains(v as u32);
    let mut locs = vec![("x", p.x), ("y", p.y)];
    if config.dim == Dim::Three {
        locs.push(("z", p.z));
    }
    for (axis, v) in locs {
        if !on(v, &config.locations) {
            return Err(format!("{axis}={v} is off the location grid"));
        }
    }
    if !on(p.r, &config.radii) {
        return Err(format!("r={} is off the radius grid", p.r));
    }
    if p.kind == PrimitiveKind::Cylinder && !on(p.h, &config.heights) {
        return Err(format!("h={} is off the height grid", p.h));
    }
    Ok(())
}

/// Why a program failed validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    None,
    /// An op at this position found fewer than two operands.
    StackUnderflow(usize),
    /// The stack held this many items at the end instead of one.
    NonSingletonFinal(usize),
    TooLong,
    Empty,
    /// A stop token somewhere other than the last position.
    MisplacedStop(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidityReport {
    pub valid: bool,
    pub failure: Failure,
}

impl ValidityReport {
    fn fail(failure: Failure) -> Self {
        ValidityReport { valid: false, failure }
    }
}

/// Checks stack feasibility, the singleton final stack and the length budget.
pub fn validate(p: &Program, max_length: usize) -> ValidityReport {
    let body = p.body();
    if body.is_empty() {
        return ValidityReport::fail(Failure::Empty);
    }
    if let Some(pos) = body.iter().position(|i| matches!(i, Instruction::Stop)) {
        return ValidityReport::fail(Failure::MisplacedStop(pos));
    }
    if body.len() > max_length {
        return ValidityReport::fail(Failure::TooLong);
    }
    let mut depth = 0usize;
    for (pos, ins) in body.iter().enumerate() {
        match ins {
            Instruction::Prim(_) => depth += 1,
            Instruction::Op(_) => {
                if depth < 2 {
                    return ValidityReport::fail(Failure::StackUnderflow(pos));
                }
                depth -= 1;
            }
            Instruction::Stop => unreachable!(),
        }
    }
    if depth != 1 {
        return ValidityReport::fail(Failure::NonSingletonFinal(depth));
    }
    ValidityReport { valid: true, failure: Failure::None }
}
