//! Dense numeric primitives: vectors, row-major design matrices, clipping,
//! Euclidean projection onto the L1 ball and sparse-support helpers.
//!
//! Everything here is a pure function of its inputs. Ties are always broken
//! towards the lowest index so fixtures stay reproducible.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Real vector of fixed length with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite entry at index {j}")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Wraps values produced by finite arithmetic inside the crate.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Number of nonzero entries.
    pub fn l0_norm(&self) -> usize {
        self.0.iter().filter(|v| **v != 0.0).count()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// Euclidean distance to `other`; panics on length mismatch.
    pub fn distance(&self, other: &DenseVector) -> f64 {
        assert_eq!(self.len(), other.len(), "dimension mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, j: usize) -> &f64 {
        &self.0[j]
    }
}

/// Observations stored one row per sample, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(invalid("design matrix needs at least one column"));
        }
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("design matrix has a non-finite entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::empty(cols)?;
        for row in rows {
            m.push_row(row)?;
        }
        Ok(m)
    }

    /// A matrix with zero rows, ready to grow with [`DesignMatrix::push_row`].
    pub fn empty(cols: usize) -> Result<Self> {
        Self::new(0, cols, Vec::new())
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Result<Self> {
        let mut m = Self::empty(cols)?;
        m.data.reserve_exact(rows * cols);
        Ok(m)
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(invalid(format!(
                "row of length {} pushed into a matrix with {} columns",
                row.len(),
                self.cols
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(invalid("row has a non-finite entry"));
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Strictly increasing set of coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SparseSupport(Vec<usize>);

impl SparseSupport {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("support indices must be strictly increasing"));
        }
        Ok(Self(indices))
    }

    /// Builds a support from indices in any order; duplicates are rejected.
    pub fn from_unsorted(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        Self::new(indices)
    }

    pub fn full(dim: usize) -> Self {
        Self((0..dim).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `z * min(1, radius / |z|)`, with `clip(0) = 0`.
pub fn clip_scalar(z: f64, radius: f64) -> f64 {
    debug_assert!(radius >= 0.0);
    if z.abs() <= radius {
        z
    } else {
        radius.copysign(z)
    }
}

pub fn clip_vector(y: &[f64], radius: f64) -> Vec<f64> {
    y.iter().map(|&z| clip_scalar(z, radius)).collect()
}

/// Euclidean projection of `v` onto `{w : ||w||_1 <= radius}`.
///
/// Vectors already inside the ball are returned unchanged. Otherwise the
/// magnitudes are sorted, the soft threshold `tau` is read off the largest
/// prefix whose entries stay above the running threshold, and every
/// coordinate is shrunk by `tau` towards zero.
pub fn project_l1(v: &DenseVector, radius: f64) -> Result<DenseVector> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(invalid(format!("projection radius must be positive, got {radius}")));
    }
    let mut out = v.as_slice().to_vec();
    project_l1_in_place(&mut out, radius);
    Ok(DenseVector::from_finite(out))
}

pub(crate) fn project_l1_in_place(v: &mut [f64], radius: f64) {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).filter(|m| *m > 0.0).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));

    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - radius) / (k + 1) as f64;
        if m > t {
            tau = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        let shrunk = x.abs() - tau;
        *x = if shrunk > 0.0 { shrunk.copysign(*x) } else { 0.0 };
    }

    // Rounding in the threshold can leave the norm a few ulps over.
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 > radius * (1.0 + 1e-12) {
        let scale = radius / l1;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Indices of the `s` largest magnitudes, ties to the lowest index.
pub fn exact_top_s(v: &DenseVector, s: usize) -> Result<SparseSupport> {
    let d = v.len();
    if s == 0 || s > d {
        return Err(invalid(format!("sparsity {s} outside [1, {d}]")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    // Stable sort keeps lower indices first among equal magnitudes.
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    order.truncate(s);
    SparseSupport::from_unsorted(order)
}

/// `v` on the indices of `support`, zero elsewhere.
pub fn restrict_to_support(v: &DenseVector, support: &SparseSupport) -> Result<DenseVector> {
    if let Some(&j) = support.indices().iter().find(|&&j| j >= v.len()) {
        return Err(invalid(format!("support index {j} out of range for dimension {}", v.len())));
    }
    let mut out = vec![0.0; v.len()];
    for &j in support.indices() {
        out[j] = v[j];
    }
    Ok(DenseVector::from_finite(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dv(v: &[f64]) -> DenseVector {
        DenseVector::new(v.to_vec()).unwrap()
    }

    /// Minimum squared distance from `v` to the points of a `step`-grid
    /// inside the 2-D L1 ball of radius `c`, enumerating every grid point.
    fn grid_min_full(v: (f64, f64), c: f64, step: f64) -> (f64, (f64, f64)) {
        let n = (c / step + 1e-9).floor() as i64;
        let mut best = (f64::INFINITY, (0.0, 0.0));
        for i in -n..=n {
            for j in -n..=n {
                if i.abs() + j.abs() > n {
                    continue;
                }
                let (a, b) = (i as f64 * step, j as f64 * step);
                let dist = (v.0 - a).powi(2) + (v.1 - b).powi(2);
                if dist < best.0 {
                    best = (dist, (a, b));
                }
            }
        }
        best
    }

    /// Same grid, but the inner coordinate is minimised by scanning only the
    /// grid neighbours of the clamped optimum (the inner objective is a convex
    /// parabola, so its grid minimiser is one of those two points).
    fn grid_min_fast(v: (f64, f64), c: f64, step: f64) -> f64 {
        let n = (c / step + 1e-9).floor() as i64;
        let mut best = f64::INFINITY;
        for i in -n..=n {
            let a = i as f64 * step;
            let room = n - i.abs();
            let target = (v.1 / step).clamp(-(room as f64), room as f64);
            for j in [target.floor() as i64, target.ceil() as i64] {
                let j = j.clamp(-room, room);
                let b = j as f64 * step;
                best = best.min((v.0 - a).powi(2) + (v.1 - b).powi(2));
            }
        }
        best
    }

    #[test]
    fn clip_scalar_examples() {
        assert_eq!(clip_scalar(5.0, 3.0), 3.0);
        assert_eq!(clip_scalar(-5.0, 3.0), -3.0);
        assert_eq!(clip_scalar(2.0, 3.0), 2.0);
        assert_eq!(clip_scalar(0.0, 0.0), 0.0);
        assert_eq!(clip_scalar(4.0, 0.0), 0.0);
    }

    #[test]
    fn clip_vector_examples() {
        assert_eq!(clip_vector(&[4.0, -1.0, 0.0], 2.0), vec![2.0, -1.0, 0.0]);
        assert!(clip_vector(&[], 1.0).is_empty());
        assert_eq!(clip_vector(&[0.5, 0.5], 1.0), vec![0.5, 0.5]);
    }

    #[test]
    fn projection_inside_ball_is_identity() {
        let v = dv(&[0.3, -0.2]);
        assert_eq!(project_l1(&v, 1.0).unwrap(), v);
    }

    #[test]
    fn projection_matches_grid_oracle() {
        // Oracle answers: (3, 0) -> (1, 0) and (2, 1) -> (1, 0).
        for (v, expected) in [((3.0, 0.0), (1.0, 0.0)), ((2.0, 1.0), (1.0, 0.0))] {
            let (_, grid_point) = grid_min_full(v, 1.0, 1e-3);
            assert!((grid_point.0 - expected.0).abs() < 1e-9);
            assert!((grid_point.1 - expected.1).abs() < 1e-9);
            let w = project_l1(&dv(&[v.0, v.1]), 1.0).unwrap();
            assert!((w[0] - expected.0).abs() < 1e-12, "{w:?}");
            assert!((w[1] - expected.1).abs() < 1e-12, "{w:?}");
        }
    }

    #[test]
    fn projection_rejects_nonpositive_radius() {
        assert!(project_l1(&dv(&[1.0]), 0.0).is_err());
        assert!(project_l1(&dv(&[1.0]), -1.0).is_err());
    }

    #[test]
    fn projection_beats_grid_on_random_2d_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let v = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let c = rng.random_range(0.2..2.0);
            let w = project_l1(&dv(&[v.0, v.1]), c).unwrap();
            let ours = (v.0 - w[0]).powi(2) + (v.1 - w[1]).powi(2);
            assert!(w.l1_norm() <= c * (1.0 + 1e-12));
            assert!(ours <= grid_min_fast(v, c, 1e-3) + 1e-5, "v={v:?} c={c}");
        }
    }

    #[test]
    fn top_s_examples() {
        assert_eq!(exact_top_s(&dv(&[5.0, 1.0, -3.0, 0.0]), 2).unwrap().indices(), &[0, 2]);
        assert_eq!(exact_top_s(&dv(&[0.0, 0.0, 0.0]), 1).unwrap().indices(), &[0]);
        assert_eq!(exact_top_s(&dv(&[-7.0]), 1).unwrap().indices(), &[0]);
        assert!(exact_top_s(&dv(&[1.0, 2.0]), 0).is_err());
        assert!(exact_top_s(&dv(&[1.0, 2.0]), 3).is_err());
    }

    #[test]
    fn restrict_examples() {
        let v = dv(&[5.0, 1.0, -3.0]);
        let s = |ix: &[usize]| SparseSupport::new(ix.to_vec()).unwrap();
        assert_eq!(restrict_to_support(&v, &s(&[0, 2])).unwrap(), dv(&[5.0, 0.0, -3.0]));
        assert_eq!(restrict_to_support(&v, &s(&[])).unwrap(), dv(&[0.0, 0.0, 0.0]));
        assert_eq!(restrict_to_support(&v, &s(&[0, 1, 2])).unwrap(), v);
        assert!(restrict_to_support(&v, &s(&[3])).is_err());
    }

    #[test]
    fn constructors_reject_bad_input() {
        assert!(DenseVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(DenseVector::new(vec![f64::INFINITY]).is_err());
        assert!(SparseSupport::new(vec![2, 1]).is_err());
        assert!(SparseSupport::new(vec![1, 1]).is_err());
        assert!(DesignMatrix::new(1, 0, vec![]).is_err());
        assert!(DesignMatrix::new(2, 2, vec![1.0; 3]).is_err());
        let mut m = DesignMatrix::empty(2).unwrap();
        assert!(m.push_row(&[1.0]).is_err());
        m.push_row(&[1.0, 2.0]).unwrap();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.row(0), &[1.0, 2.0]);
    }

    proptest! {
        #[test]
        fn clip_is_bounded_and_idempotent(z in -1e6f64..1e6, r in 0.0f64..1e3) {
            let c = clip_scalar(z, r);
            prop_assert!(c.abs() <= r);
            prop_assert_eq!(clip_scalar(c, r), c);
            if c != 0.0 {
                prop_assert_eq!(c.signum(), z.signum());
            }
        }

        #[test]
        fn projection_is_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..40), c in 0.1f64..20.0) {
            let p = project_l1(&dv(&v), c).unwrap();
            prop_assert!(p.l1_norm() <= c * (1.0 + 1e-12));
            let pp = project_l1(&p, c).unwrap();
            for j in 0..p.len() {
                prop_assert!((p[j] - pp[j]).abs() <= 1e-12);
            }
        }

        #[test]
        fn full_support_restriction_is_identity(v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let v = dv(&v);
            let s = exact_top_s(&v, v.len()).unwrap();
            prop_assert_eq!(restrict_to_support(&v, &s).unwrap(), v);
        }

        #[test]
        fn top_s_ignores_appended_zeros(
            v in prop::collection::vec(-10.0f64..10.0, 1..30),
            extra in 1usize..10,
            s_frac in 0.0f64..1.0,
        ) {
            let s = 1 + ((v.len() - 1) as f64 * s_frac) as usize;
            let base = exact_top_s(&dv(&v), s).unwrap();
            let mut padded = v.clone();
            padded.extend(std::iter::repeat_n(0.0, extra));
            prop_assert_eq!(exact_top_s(&dv(&padded), s).unwrap(), base);
        }
    }
}
