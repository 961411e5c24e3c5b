pub mod cli;
pub mod datagen;
pub mod eval;
pub mod exec;
pub mod lang;
pub mod metrics;
pub mod policy;
pub mod search;
pub mod training;
