//! Samples a small deterministic dataset of valid programs, writes it to a
//! directory and prints the manifest.
//!
//! ```text
//! cargo run --example generate_dataset -- /tmp/csg-data
//! ```

use std::collections::{BTreeMap, HashSet};

use csgkit::datagen::{distinct_programs, generate_dataset, write_dataset, DatasetSpec, Split, SplitCounts};
use csgkit::lang::{format_program, GrammarConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("csgkit-example-data"));
    let grammar = GrammarConfig::default_2d();
    for len in [3, 5, 7] {
        println!("distinct programs of length {len}: {}", distinct_programs(len, &grammar));
    }

    let mut counts = BTreeMap::new();
    counts.insert(3, SplitCounts::new(200, 20, 20));
    counts.insert(5, SplitCounts::new(200, 20, 20));
    let dataset = generate_dataset(&DatasetSpec::new(counts, 42, grammar))?;
    let manifest = write_dataset(&dataset, &root, true)?;
    println!("\nwrote {} records to {}\n{manifest}", dataset.records.len(), root.display());

    let unique: HashSet<String> = dataset.records.iter().map(|r| format_program(&r.program)).collect();
    println!("unique programs: {} of {}", unique.len(), dataset.records.len());
    for record in dataset.split(Split::Test).take(3) {
        println!("test example: {}  ({} cells)", record.program, record.raster.count());
    }
    Ok(())
}
