//! Exact Euclidean distance transform by separable lower envelopes of
//! parabolas, one pass per axis.

use crate::exec::Raster;
use crate::lang::Dim;

use super::EdgeMap;

/// Per-cell Euclidean distance (cell units) to the nearest edge cell.
/// Every cell is `+inf` when the edge map is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    shape: [usize; 3],
    values: Vec<f64>,
}

impl DistanceField {
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at_index(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> f64 {
        self.values[(z * self.shape[1] + y) * self.shape[2] + x]
    }
}

/// One-dimensional squared distance transform of sampled function `f`
/// (`+inf` marks cells with no site). Writes into `out`.
fn squared_edt_1d(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let Some(&p) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let pf = p as f64;
            let s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                sites.push(q);
                bounds.push(s);
                break;
            }
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < sites.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let d = qf - sites[k] as f64;
        *o = d * d + f[sites[k]];
    }
}

/// Squared distances along every axis of `values` laid out as `shape`.
fn squared_edt(values: &mut [f64], shape: [usize; 3], axes: &[usize]) {
    let n_max = *shape.iter().max().unwrap();
    let mut line = vec![0.0; n_max];
    let mut out = vec![0.0; n_max];
    let (mut sites, mut bounds) = (Vec::with_capacity(n_max), Vec::with_capacity(n_max));
    let strides = [shape[1] * shape[2], shape[2], 1];
    for &axis in axes {
        let n = shape[axis];
        let stride = strides[axis];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for i in 0..shape[others[0]] {
            for j in 0..shape[others[1]] {
                let base = i * strides[others[0]] + j * strides[others[1]];
                for t in 0..n {
                    line[t] = values[base + t * stride];
                }
                squared_edt_1d(&line[..n], &mut out[..n], &mut sites, &mut bounds);
                for t in 0..n {
                    values[base + t * stride] = out[t];
                }
            }
        }
    }
}

pub fn distance_transform(edges: &EdgeMap) -> DistanceField {
    let r: &Raster = edges.as_raster();
    let shape = r.shape();
    let mut values: Vec<f64> = (0..r.len()).map(|i| if r.get_index(i) { 0.0 } else { f64::INFINITY }).collect();
    let axes: &[usize] = match r.dim() {
        Dim::Two => &[2, 1],
        Dim::Three => &[2, 1, 0],
    };
    squared_edt(&mut values, shape, axes);
    values.iter_mut().for_each(|v| *v = v.sqrt());
    DistanceField { shape, values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(y: usize, x: usize) -> EdgeMap {
        let mut r = Raster::empty_2d(32);
        r.set(0, y, x, true);
        EdgeMap::from_raster_unchecked(r)
    }

    #[test]
    fn point_distances() {
        let df = distance_transform(&single(10, 10));
        assert_eq!(df.get(0, 10, 10), 0.0);
        assert_eq!(df.get(0, 13, 14), 5.0);
        assert_eq!(df.get(0, 10, 0), 10.0);
    }

    #[test]
    fn empty_is_infinite() {
        let df = distance_transform(&EdgeMap::from_raster_unchecked(Raster::empty_2d(16)));
        assert!(df.values().iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn three_d_point() {
        let mut r = Raster::empty_3d(8);
        r.set(1, 2, 3, true);
        let df = distance_transform(&EdgeMap::from_raster_unchecked(r));
        assert_eq!(df.get(1, 2, 3), 0.0);
        assert_eq!(df.get(3, 5, 9 - 6), (4.0f64 + 9.0).sqrt());
        assert_eq!(df.get(7, 2, 3), 6.0);
    }
}
