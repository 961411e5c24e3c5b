//! The CSG instruction language: grammar configuration, instructions,
//! postfix programs with their text syntax, and instruction vocabularies.
//!
//! Programs are written one token per instruction, for example
//! `circle(32,32,28) square(32,40,24) union stop`.

mod config;
mod instruction;
mod program;
mod vocab;

pub use config::{parse_kv, ConfigError, Dim, GrammarConfig, GridRange};
pub use instruction::{BoolOp, Instruction, Primitive, PrimitiveKind};
pub use program::{format_program, parse_program, validate, Failure, ParseError, Program, ValidityReport};
pub use vocab::{build_vocabulary, contained, VocabError, Vocabulary};
