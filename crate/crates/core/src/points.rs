/// A dense, row-major set of points in `dim` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    data: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0, "points need at least one dimension");
        assert_eq!(data.len() % dim, 0, "data length is not a multiple of dim");
        PointSet { dim, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(1, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim);
            data.extend_from_slice(r);
        }
        PointSet::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Rows in the given index order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        PointSet::new(self.dim, data)
    }

    /// Each coordinate multiplied by the matching weight.
    pub fn scaled(&self, weights: &[f64]) -> PointSet {
        assert_eq!(weights.len(), self.dim);
        let data = self
            .data
            .chunks_exact(self.dim)
            .flat_map(|r| r.iter().zip(weights).map(|(x, w)| x * w))
            .collect();
        PointSet::new(self.dim, data)
    }

    /// Per-dimension sample standard deviation (denominator n - 1).
    pub fn column_sd(&self) -> Vec<f64> {
        let n = self.len();
        (0..self.dim)
            .map(|k| {
                if n < 2 {
                    return 0.0;
                }
                let mean = self.rows().map(|r| r[k]).sum::<f64>() / n as f64;
                let ss: f64 = self.rows().map(|r| (r[k] - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            })
            .collect()
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
