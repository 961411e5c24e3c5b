//! Nearest-neighbor baseline: answers a query shape with the program of the
//! closest indexed shape under Chamfer distance.

use std::collections::BTreeMap;

use csgkit::datagen::{generate_dataset, DatasetSpec, Split, SplitCounts};
use csgkit::lang::GrammarConfig;
use csgkit::policy::{nn_build_index, nn_retrieve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grammar = GrammarConfig::default_2d();
    let mut counts = BTreeMap::new();
    counts.insert(3, SplitCounts::new(500, 0, 10));
    counts.insert(5, SplitCounts::new(500, 0, 10));
    let data = generate_dataset(&DatasetSpec::new(counts, 5, grammar))?;
    let index = nn_build_index(data.split(Split::Train).map(|r| (r.raster.clone(), r.program.clone())));
    println!("index holds {} shapes", index.len());

    let mut total = 0.0;
    let queries: Vec<_> = data.split(Split::Test).collect();
    for q in &queries {
        let hit = nn_retrieve(&index, &q.raster)?;
        total += hit.cd_pixels;
        println!("{:<60} -> {:<60} CD {:.3} IoU {:.3}", q.program.to_string(), hit.program.to_string(), hit.cd_pixels, hit.iou);
    }
    println!("mean CD {:.3} px", total / queries.len() as f64);
    Ok(())
}
