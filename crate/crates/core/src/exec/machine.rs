use thiserror::Error;

use crate::lang::{validate, BoolOp, Failure, GrammarConfig, Instruction, Program};

use super::{render_primitive, Raster};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("invalid program: {0:?}")]
    InvalidProgram(Failure),
    #[error("raster dimensions differ: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),
}

/// Applies `B op A` cellwise, where `A` was popped first.
pub fn apply_op(op: BoolOp, b: &Raster, a: &Raster) -> Result<Raster, ExecError> {
    if !b.same_shape(a) {
        return Err(ExecError::DimMismatch(b.shape(), a.shape()));
    }
    Ok(match op {
        BoolOp::Union => b.zip_words(a, |b, a| b | a),
        BoolOp::Intersect => b.zip_words(a, |b, a| b & a),
        BoolOp::Subtract => b.zip_words(a, |b, a| b & !a),
    })
}

/// Shift-reduce execution stack. Items are stored bottom to top.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExecStack {
    items: Vec<Raster>,
}

impl ExecStack {
    pub fn new() -> Self {
        ExecStack::default()
    }

    pub fn depth(&self) -> usize {
        self.items.len()
    }

    pub fn top(&self) -> Option<&Raster> {
        self.items.last()
    }

    pub fn push(&mut self, r: Raster) {
        self.items.push(r);
    }

    pub fn pop(&mut self) -> Option<Raster> {
        self.items.pop()
    }

    /// Item `i` positions below the top (0 = top).
    pub fn from_top(&self, i: usize) -> Option<&Raster> {
        self.items.len().checked_sub(i + 1).map(|j| &self.items[j])
    }

    /// Executes one instruction. Primitives push their rendering; ops pop
    /// `A`, pop `B` and push `B op A`; stop is a no-op.
    pub fn step(&mut self, ins: &Instruction, config: &GrammarConfig) -> Result<(), ExecError> {
        match ins {
            Instruction::Prim(p) => self.push(render_primitive(p, config)),
            Instruction::Op(op) => {
                if self.depth() < 2 {
                    return Err(ExecError::InvalidProgram(Failure::StackUnderflow(0)));
                }
                let a = self.pop().unwrap();
                let b = self.pop().unwrap();
                self.push(apply_op(*op, &b, &a)?);
            }
            Instruction::Stop => {}
        }
        Ok(())
    }

    /// Like [`ExecStack::step`] but leaves the stack untouched when an op
    /// lacks operands. Returns whether the instruction was executable.
    pub fn step_lenient(&mut self, ins: &Instruction, config: &GrammarConfig) -> bool {
        self.step(ins, config).is_ok()
    }
}

/// One executed instruction: stack depth afterwards and a copy of the top.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub instruction: Instruction,
    pub depth: usize,
    pub top: Raster,
}

pub type ExecTrace = Vec<TraceStep>;

/// Validates then executes `p`, returning the final raster and a per-step trace.
pub fn execute(p: &Program, config: &GrammarConfig) -> Result<(Raster, ExecTrace), ExecError> {
    let report = validate(p, config.max_length);
    if !report.valid {
        return Err(ExecError::InvalidProgram(report.failure));
    }
    let mut stack = ExecStack::new();
    let mut trace = Vec::with_capacity(p.len());
    for ins in p.body() {
        stack.step(ins, config)?;
        trace.push(TraceStep { instruction: *ins, depth: stack.depth(), top: stack.top().unwrap().clone() });
    }
    Ok((stack.pop().unwrap(), trace))
}

/// Executes without recording a trace.
pub fn render_program(p: &Program, config: &GrammarConfig) -> Result<Raster, ExecError> {
    let report = validate(p, config.max_length);
    if !report.valid {
        return Err(ExecError::InvalidProgram(report.failure));
    }
    let mut stack = ExecStack::new();
    for ins in p.body() {
        stack.step(ins, config)?;
    }
    Ok(stack.pop().unwrap())
}

/// Top-`k` stack maps, top first, padded with all-zero rasters.
pub fn stack_observation(stack: &ExecStack, k: usize, config: &GrammarConfig) -> Vec<Raster> {
    let blank = Raster::empty(config.dim, config.raster_shape());
    (0..k).map(|i| stack.from_top(i).cloned().unwrap_or_else(|| blank.clone())).collect()
}
