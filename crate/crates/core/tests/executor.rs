mod common;

use csgkit::datagen::sample_program;
use csgkit::exec::{execute, render_program, Raster};
use csgkit::lang::{format_program, parse_program, GrammarConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cells(r: &Raster) -> Vec<bool> {
    (0..r.len()).map(|i| r.get_index(i)).collect()
}

#[test]
fn random_programs_match_cellwise_evaluation() {
    let cfg = GrammarConfig::default_2d();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for len in [3, 5, 7, 9, 13] {
        for _ in 0..40 {
            let p = sample_program(len, &mut rng, &cfg);
            let text = format_program(&p);
            let out = render_program(&p, &cfg).unwrap();
            assert_eq!(cells(&out), common::oracle_render(&text, 64), "{text}");
        }
    }
}

#[test]
fn trace_depths_and_result() {
    let cfg = GrammarConfig::default_2d();
    let text = "circle(32,32,28) square(32,40,24) circle(48,32,12) circle(24,32,16) union intersect subtract";
    let (out, trace) = execute(&parse_program(text, &cfg).unwrap(), &cfg).unwrap();
    assert_eq!(trace.iter().map(|t| t.depth).collect::<Vec<_>>(), [1, 2, 3, 4, 3, 2, 1]);
    assert_eq!(cells(&out), common::oracle_render(text, 64));
    let partial = "square(32,40,24) circle(48,32,12) circle(24,32,16) union intersect";
    assert_eq!(cells(&trace[5].top), common::oracle_render(partial, 64));
}

#[test]
fn malformed_programs_are_rejected() {
    let cfg = GrammarConfig::default_2d();
    for text in ["union", "circle(32,32,8) circle(16,16,8)", "circle(32,32,8) union", "stop circle(32,32,8)"] {
        let p = parse_program(text, &cfg).unwrap();
        assert!(render_program(&p, &cfg).is_err(), "{text}");
    }
    assert!(parse_program("circle(32,32)", &cfg).is_err());
    assert!(parse_program("hexagon(32,32,8)", &cfg).is_err());
}
