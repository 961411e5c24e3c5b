//! Chamfer distance, IoU and the shaped reward between a few shapes.

use csgkit::exec::render_program;
use csgkit::lang::{parse_program, GrammarConfig};
use csgkit::metrics::{edge_map, iou, shape_chamfer, shape_reward};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = GrammarConfig::default_2d();
    let target = render_program(&parse_program("circle(32,32,16)", &config)?, &config)?;
    println!("target outline has {} edge cells", edge_map(&target).count());
    println!("{:<40} {:>8} {:>8} {:>7} {:>9}", "candidate", "CD px", "CD norm", "IoU", "reward");
    for text in [
        "circle(32,32,16)",
        "circle(32,32,12)",
        "circle(40,32,16)",
        "square(32,32,20)",
        "circle(32,32,16) circle(32,32,8) subtract",
        "triangle(16,48,8)",
    ] {
        let shape = render_program(&parse_program(text, &config)?, &config)?;
        let cd = shape_chamfer(&shape, &target)?;
        println!(
            "{text:<40} {:>8.3} {:>8.4} {:>7.3} {:>9.5}",
            cd.pixels,
            cd.normalized,
            iou(&shape, &target)?,
            shape_reward(cd.normalized, 20.0)
        );
    }

    println!("\nshaped reward (1 - cd)^gamma");
    for gamma in [1.0, 5.0, 20.0] {
        let row: Vec<String> = [0.0, 0.02, 0.05, 0.1, 0.2, 0.5].iter().map(|&x| format!("{:.3}", shape_reward(x, gamma))).collect();
        println!("gamma {gamma:>4}: {}", row.join("  "));
    }
    Ok(())
}
