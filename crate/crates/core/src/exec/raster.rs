use crate::lang::Dim;

/// Bit-packed occupancy grid. Cells are stored in (depth, row, col) order;
/// 2D rasters have depth 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    dim: Dim,
    shape: [usize; 3],
    words: Vec<u64>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Raster({:?}, {:?}, {} occupied)", self.dim, self.shape, self.count())
    }
}

impl Raster {
    pub fn empty(dim: Dim, shape: [usize; 3]) -> Self {
        assert!(dim == Dim::Three || shape[0] == 1, "2D rasters have depth 1");
        let n = shape.iter().product::<usize>();
        Raster { dim, shape, words: vec![0; n.div_ceil(64)] }
    }

    pub fn empty_2d(side: usize) -> Self {
        Self::empty(Dim::Two, [1, side, side])
    }

    pub fn empty_3d(side: usize) -> Self {
        Self::empty(Dim::Three, [side, side, side])
    }

    pub fn full(dim: Dim, shape: [usize; 3]) -> Self {
        let mut r = Self::empty(dim, shape);
        r.words.iter_mut().for_each(|w| *w = u64::MAX);
        r.clear_tail();
        r
    }

    /// Builds a raster from a predicate over (depth, row, col).
    pub fn from_fn(dim: Dim, shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut r = Self::empty(dim, shape);
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    if f(z, y, x) {
                        r.set(z, y, x, true);
                    }
                }
            }
        }
        r
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// (depth, rows, cols).
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Length of the canvas diagonal in cell units.
    pub fn diagonal(&self) -> f64 {
        let axes: &[usize] = match self.dim {
            Dim::Two => &self.shape[1..],
            Dim::Three => &self.shape,
        };
        axes.iter().map(|&n| (n * n) as f64).sum::<f64>().sqrt()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.shape[2];
        let rest = i / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], x]
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set_index(&mut self, i: usize, v: bool) {
        let bit = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.get_index(self.index(z, y, x))
    }

    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: bool) {
        let i = self.index(z, y, x);
        self.set_index(i, v);
    }

    /// Shorthand for 2D access at (row, col).
    pub fn at(&self, y: usize, x: usize) -> bool {
        self.get(0, y, x)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Linear indices of occupied cells in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let t = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + t)
            })
        })
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.dim == other.dim && self.shape == other.shape
    }

    pub(crate) fn zip_words(&self, other: &Raster, f: impl Fn(u64, u64) -> u64) -> Raster {
        debug_assert!(self.same_shape(other));
        let mut out = self.clone();
        for (o, (&a, &b)) in out.words.iter_mut().zip(self.words.iter().zip(&other.words)) {
            *o = f(a, b);
        }
        out.clear_tail();
        out
    }

    pub fn complement(&self) -> Raster {
        let mut out = self.clone();
        out.words.iter_mut().for_each(|w| *w = !*w);
        out.clear_tail();
        out
    }

    pub fn intersection_count(&self, other: &Raster) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    pub fn union_count(&self, other: &Raster) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a | b).count_ones() as usize).sum()
    }

    /// Occupancy as 0.0/1.0 values in storage order.
    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| if self.get_index(i) { 1.0 } else { 0.0 }).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn clear_tail(&mut self) {
        let n = self.len();
        if n % 64 != 0 {
            let last = self.words.len() - 1;
            self.words[last] &= (1u64 << (n % 64)) - 1;
        }
    }

    /// ASCII art for 2D rasters (`#` occupied, `.` empty), one row per line.
    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity(self.len() + self.shape[1]);
        for z in 0..self.shape[0] {
            for y in 0..self.shape[1] {
                for x in 0..self.shape[2] {
                    s.push(if self.get(z, y, x) { '#' } else { '.' });
                }
                s.push('\n');
            }
        }
        s
    }
}
