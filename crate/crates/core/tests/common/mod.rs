//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the crate's renderer or distance code.

#![allow(dead_code)]

/// Membership of cell `(row, col)` in a grid-aligned 2D primitive, decided
/// in doubled integer coordinates so no rounding is involved.
pub fn cell_inside(kind: &str, cx: i64, cy: i64, r: i64, row: usize, col: usize) -> bool {
    let dx = 2 * col as i64 + 1 - 2 * cx;
    let dy = 2 * row as i64 + 1 - 2 * cy;
    let r2 = 2 * r;
    match kind {
        "circle" => dx * dx + dy * dy <= r2 * r2,
        "square" => 2 * dx * dx <= r2 * r2 && 2 * dy * dy <= r2 * r2,
        "triangle" => dy <= r && dy + r2 >= 0 && 3 * dx * dx <= (dy + r2) * (dy + r2),
        other => panic!("unknown 2D primitive `{other}`"),
    }
}

/// Evaluates the canonical text of a 2D postfix program cell by cell.
pub fn oracle_render(text: &str, side: usize) -> Vec<bool> {
    let prog: Vec<&str> = text.split_whitespace().filter(|t| *t != "stop").collect();
    let mut out = vec![false; side * side];
    for row in 0..side {
        for col in 0..side {
            let mut stack: Vec<bool> = Vec::new();
            for tok in &prog {
                match *tok {
                    "union" | "intersect" | "subtract" => {
                        let a = stack.pop().expect("operand");
                        let b = stack.pop().expect("operand");
                        stack.push(match *tok {
                            "union" => b || a,
                            "intersect" => b && a,
                            _ => b && !a,
                        });
                    }
                    prim => {
                        let (kind, rest) = prim.split_once('(').expect("primitive");
                        let v: Vec<i64> = rest.trim_end_matches(')').split(',').map(|s| s.parse().unwrap()).collect();
                        stack.push(cell_inside(kind, v[0], v[1], v[2], row, col));
                    }
                }
            }
            assert_eq!(stack.len(), 1, "program leaves {} items", stack.len());
            out[row * side + col] = stack[0];
        }
    }
    out
}

/// Distance from every cell to the nearest set cell by exhaustive search.
pub fn brute_distance(cells: &[bool], rows: usize, cols: usize) -> Vec<f64> {
    let sites: Vec<(i64, i64)> =
        (0..rows * cols).filter(|&i| cells[i]).map(|i| ((i / cols) as i64, (i % cols) as i64)).collect();
    (0..rows * cols)
        .map(|i| {
            let (y, x) = ((i / cols) as i64, (i % cols) as i64);
            sites
                .iter()
                .map(|&(sy, sx)| ((sy - y).pow(2) + (sx - x).pow(2)) as f64)
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Symmetric mean nearest-neighbor distance between two nonempty point sets.
pub fn brute_chamfer(a: &[(i64, i64)], b: &[(i64, i64)]) -> f64 {
    let one_way = |p: &[(i64, i64)], q: &[(i64, i64)]| {
        p.iter()
            .map(|&(y, x)| q.iter().map(|&(v, u)| (((y - v).pow(2) + (x - u).pow(2)) as f64).sqrt()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / p.len() as f64
    };
    0.5 * one_way(a, b) + 0.5 * one_way(b, a)
}
