//! Parses a postfix CSG program, executes it on the stack machine and prints
//! the top of the stack after every instruction.
//!
//! ```text
//! cargo run --example execute_trace -- "circle(32,32,16) square(40,40,12) union"
//! ```

use csgkit::exec::execute;
use csgkit::lang::{parse_program, GrammarConfig};

fn downsample(ascii: &str, step: usize) -> String {
    ascii
        .lines()
        .step_by(step)
        .map(|l| l.chars().step_by(step).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::env::args().nth(1).unwrap_or_else(|| {
        "circle(32,32,28) square(32,40,24) circle(48,32,12) circle(24,32,16) union intersect subtract".to_string()
    });
    let config = GrammarConfig::default_2d();
    let program = parse_program(&text, &config)?;
    let (out, trace) = execute(&program, &config)?;
    for (t, step) in trace.iter().enumerate() {
        println!("step {t}: {:<20} depth {}  top has {} cells", step.instruction.to_string(), step.depth, step.top.count());
        println!("{}\n", downsample(&step.top.to_ascii(), 2));
    }
    println!("result: {} of {} cells set", out.count(), out.len());
    Ok(())
}
