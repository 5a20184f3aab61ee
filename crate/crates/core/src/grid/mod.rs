//! Uniform Cartesian grids in 1/2/3 dimensions and scalar fields over them.
//!
//! Fields are stored row-major in axis order (x1, x2, x3): x3 varies fastest.
//! All reductions run over fixed-size chunks combined in index order, so
//! results are bitwise independent of the worker count.

mod snapshot;
mod stencil;

pub use snapshot::{read_snapshot, write_snapshot, SnapshotError};

use rayon::prelude::*;
use thiserror::Error;

/// Minimum sample count per active axis (room for the widest stencil).
pub const MIN_POINTS: usize = 8;

/// Chunk length for deterministic parallel reductions and maps.
const REDUCE_CHUNK: usize = 8192;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dim must be 1, 2 or 3, got {0}")]
    BadDim(usize),
    #[error("axis {axis} needs at least {MIN_POINTS} points, got {points}")]
    TooFewPoints { axis: usize, points: usize },
    #[error("axis {axis} extent must be positive, got {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("axis {axis} is out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("value buffer has length {got}, grid needs {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("fields must share one grid spec")]
    SpecMismatch,
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
}

/// Descriptor of a uniform grid covering `[-extent, extent]` per active axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    dim: usize,
    points: [usize; 3],
    extent: [f64; 3],
    spacing: [f64; 3],
}

impl GridSpec {
    /// Build a spec from per-axis extents and point counts (lengths must
    /// equal `dim`). Spacing is derived as `2 extent / (points - 1)`.
    pub fn new(dim: usize, extent: &[f64], points: &[usize]) -> Result<Self, GridError> {
        if !(1..=3).contains(&dim) {
            return Err(GridError::BadDim(dim));
        }
        assert_eq!(extent.len(), dim, "extent list must have dim entries");
        assert_eq!(points.len(), dim, "points list must have dim entries");
        let mut p = [1usize; 3];
        let mut e = [0.0f64; 3];
        let mut h = [1.0f64; 3];
        for axis in 0..dim {
            if points[axis] < MIN_POINTS {
                return Err(GridError::TooFewPoints { axis: axis + 1, points: points[axis] });
            }
            if !(extent[axis] > 0.0) {
                return Err(GridError::BadExtent { axis: axis + 1, extent: extent[axis] });
            }
            p[axis] = points[axis];
            e[axis] = extent[axis];
            h[axis] = 2.0 * extent[axis] / (points[axis] - 1) as f64;
        }
        Ok(Self { dim, points: p, extent: e, spacing: h })
    }

    /// Same extent and point count on every active axis.
    pub fn cubic(dim: usize, extent: f64, points: usize) -> Result<Self, GridError> {
        let e = [extent; 3];
        let p = [points; 3];
        Self::new(dim, &e[..dim], &p[..dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Point count along `axis` (1-based). Inactive axes report 1.
    pub fn points(&self, axis: usize) -> usize {
        self.points[axis - 1]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis - 1]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis - 1]
    }

    pub fn len(&self) -> usize {
        self.points[0] * self.points[1] * self.points[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).fold(f64::INFINITY, f64::min)
    }

    pub fn min_extent(&self) -> f64 {
        (0..self.dim).map(|a| self.extent[a]).fold(f64::INFINITY, f64::min)
    }

    /// Volume of one cell (product of active spacings).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing[a]).product()
    }

    pub(crate) fn strides(&self) -> [usize; 3] {
        [self.points[1] * self.points[2], self.points[2], 1]
    }

    /// Multi-index of a flat index, always 3 entries (inactive axes read 0).
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let s = self.strides();
        [flat / s[0], (flat / s[1]) % self.points[1], flat % self.points[2]]
    }

    /// Coordinate of sample `idx` along `axis` (1-based).
    pub fn coord(&self, axis: usize, idx: usize) -> f64 {
        -self.extent[axis - 1] + idx as f64 * self.spacing[axis - 1]
    }

    /// Cartesian position of a flat index; inactive axes read 0.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let ix = self.unflatten(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(a + 1, ix[a]);
        }
        x
    }

    /// True when the flat index touches the outermost layer of any active axis.
    pub fn is_boundary(&self, flat: usize) -> bool {
        self.is_within_boundary_layers(flat, 1)
    }

    /// True when the flat index lies within `layers` cells of any active-axis
    /// boundary.
    pub fn is_within_boundary_layers(&self, flat: usize, layers: usize) -> bool {
        let ix = self.unflatten(flat);
        (0..self.dim).any(|a| ix[a] < layers || ix[a] + layers > self.points[a] - 1)
    }

    fn check_axis(&self, axis: usize) -> Result<(), GridError> {
        if axis == 0 || axis > self.dim {
            return Err(GridError::AxisOutOfRange { axis, dim: self.dim });
        }
        Ok(())
    }
}

/// Scalar samples over a [`GridSpec`], row-major in axis order (x1, x2, x3).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, values: vec![0.0; spec.len()] }
    }

    /// Validating constructor: length must match and every value be finite.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != spec.len() {
            return Err(GridError::LengthMismatch { got: values.len(), want: spec.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue(i));
        }
        Ok(Self { spec, values })
    }

    /// Sample a function of position over the grid.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let mut values = vec![0.0; spec.len()];
        values
            .par_chunks_mut(REDUCE_CHUNK)
            .enumerate()
            .for_each(|(chunk, out)| {
                let base = chunk * REDUCE_CHUNK;
                for (k, v) in out.iter_mut().enumerate() {
                    *v = f(spec.position(base + k));
                }
            });
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// First-order partial derivative along `axis` (1-based): second-order
    /// centered differences in the interior, one-sided three-point formulas
    /// on the two boundary layers. Exact for affine fields.
    pub fn partial(&self, axis: usize) -> Result<ScalarField, GridError> {
        self.spec.check_axis(axis)?;
        Ok(stencil::partial(self, axis - 1))
    }

    /// Second-order partial derivative. Same axis twice: three-point second
    /// difference (four-point one-sided at the edges). Distinct axes: the
    /// centered cross stencil, composed in a fixed canonical axis order so
    /// `(a, b)` and `(b, a)` are bitwise identical. Exact for quadratics.
    pub fn second_partial(&self, axis_a: usize, axis_b: usize) -> Result<ScalarField, GridError> {
        self.spec.check_axis(axis_a)?;
        self.spec.check_axis(axis_b)?;
        if axis_a == axis_b {
            Ok(stencil::second_same(self, axis_a - 1))
        } else {
            // canonical order: differentiate along the larger axis first
            let lo = axis_a.min(axis_b) - 1;
            let hi = axis_a.max(axis_b) - 1;
            Ok(stencil::partial(&stencil::partial(self, hi), lo))
        }
    }

    /// Grid maximum of |f|. Deterministic reduction.
    pub fn max_abs(&self) -> f64 {
        chunked_fold_max(&self.values, |v| v.abs())
    }

    pub fn has_non_finite(&self) -> bool {
        // any() short-circuits per chunk; purely a predicate, order-free
        self.values.par_chunks(REDUCE_CHUNK).any(|c| c.iter().any(|v| !v.is_finite()))
    }

    /// Discrete L2 norm with cell-volume weights. Deterministic reduction.
    pub fn l2_norm(&self) -> f64 {
        (chunked_fold_sum(&self.values, |v| v * v) * self.spec.cell_volume()).sqrt()
    }

    /// Discrete L1 norm with cell-volume weights. Deterministic reduction.
    pub fn l1_norm(&self) -> f64 {
        chunked_fold_sum(&self.values, |v| v.abs()) * self.spec.cell_volume()
    }

    /// Pointwise combination `self <- f(self, other)`; panics on spec mismatch.
    pub fn zip_apply(&mut self, other: &ScalarField, f: impl Fn(f64, f64) -> f64 + Sync) {
        assert_eq!(self.spec, other.spec);
        self.values
            .par_chunks_mut(REDUCE_CHUNK)
            .zip(other.values.par_chunks(REDUCE_CHUNK))
            .for_each(|(a, b)| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = f(*x, *y);
                }
            });
    }

    /// Pointwise map in place.
    pub fn apply(&mut self, f: impl Fn(f64) -> f64 + Sync) {
        self.values.par_chunks_mut(REDUCE_CHUNK).for_each(|c| {
            for x in c.iter_mut() {
                *x = f(*x);
            }
        });
    }

    /// Zero the outermost layer of every active axis. Touches only the
    /// boundary faces, not the whole array.
    pub fn zero_boundary(&mut self) {
        let spec = self.spec;
        let n = [spec.points(1), spec.points(2), spec.points(3)];
        let s = spec.strides();
        for a in 0..spec.dim() {
            let (b, c) = match a {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for ia in [0, n[a] - 1] {
                for ib in 0..n[b] {
                    for ic in 0..n[c] {
                        self.values[ia * s[a] + ib * s[b] + ic * s[c]] = 0.0;
                    }
                }
            }
        }
    }

    /// Flat index of the first cell attaining the maximum of |f| (ties break
    /// to the lowest index, so the result is deterministic).
    pub fn argmax_abs(&self) -> usize {
        let partials: Vec<(usize, f64)> = self
            .values
            .par_chunks(REDUCE_CHUNK)
            .enumerate()
            .map(|(chunk, c)| {
                let mut best = (0usize, f64::NEG_INFINITY);
                for (k, v) in c.iter().enumerate() {
                    let a = v.abs();
                    if a > best.1 {
                        best = (chunk * REDUCE_CHUNK + k, a);
                    }
                }
                best
            })
            .collect();
        let mut best = (0usize, f64::NEG_INFINITY);
        for p in partials {
            if p.1 > best.1 {
                best = p;
            }
        }
        best.0
    }
}

/// Deterministic chunked sum of `f(v)` over a slice.
pub(crate) fn chunked_fold_sum(values: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = values
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().map(|&v| f(v)).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// Deterministic chunked max of `f(v)` over a slice.
pub(crate) fn chunked_fold_max(values: &[f64], f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let partials: Vec<f64> = values
        .par_chunks(REDUCE_CHUNK)
        .map(|c| c.iter().map(|&v| f(v)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    partials.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Deterministic chunked sum of `f(a, b)` over two slices of equal length.
pub(crate) fn chunked_zip_sum(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
    assert_eq!(a.len(), b.len());
    let partials: Vec<f64> = a
        .par_chunks(REDUCE_CHUNK)
        .zip(b.par_chunks(REDUCE_CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(&x, &y)| f(x, y)).sum::<f64>())
        .collect();
    partials.iter().sum()
}

/// The solver's evolving unknown: the angle field and its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
}

impl State {
    pub fn new(t: f64, u: ScalarField, v: ScalarField) -> Result<Self, GridError> {
        if u.spec != v.spec {
            return Err(GridError::SpecMismatch);
        }
        if !(t >= 0.0) {
            return Err(GridError::NegativeTime(t));
        }
        Ok(Self { t, u, v })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self { t: 0.0, u: ScalarField::zeros(spec), v: ScalarField::zeros(spec) }
    }

    pub fn spec(&self) -> &GridSpec {
        self.u.spec()
    }

    pub fn has_non_finite(&self) -> bool {
        self.u.has_non_finite() || self.v.has_non_finite()
    }
}

/// Distance between the numerical support front and the box boundary:
/// `min_extent - (support_radius + t * max_speed)`. While this is positive
/// the compactly supported solution cannot have reached the boundary, so the
/// zero-Dirichlet box is exact. A negative value is a valid "margin
/// exhausted" signal, not an error.
pub fn support_margin(state: &State, support_radius: f64, max_speed: f64) -> f64 {
    state.spec().min_extent() - (support_radius + state.t * max_speed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_2d() -> GridSpec {
        GridSpec::new(2, &[2.0, 3.0], &[16, 24]).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(GridSpec::new(0, &[], &[]), Err(GridError::BadDim(0))));
        assert!(matches!(
            GridSpec::cubic(1, 1.0, 4),
            Err(GridError::TooFewPoints { .. })
        ));
        assert!(matches!(
            GridSpec::new(2, &[1.0, -1.0], &[16, 16]),
            Err(GridError::BadExtent { axis: 2, .. })
        ));
    }

    #[test]
    fn spacing_consistent_with_extent_and_points() {
        let s = spec_2d();
        for axis in 1..=2 {
            let derived = 2.0 * s.extent(axis) / (s.points(axis) - 1) as f64;
            assert!((s.spacing(axis) - derived).abs() < 1e-12);
        }
        assert!((s.coord(1, 0) + 2.0).abs() < 1e-15);
        assert!((s.coord(1, 15) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_index_roundtrip() {
        let s = GridSpec::new(3, &[1.0, 1.0, 1.0], &[8, 9, 10]).unwrap();
        for flat in [0, 1, 9, 10, 89, 90, 719] {
            let ix = s.unflatten(flat);
            let st = s.strides();
            assert_eq!(flat, ix[0] * st[0] + ix[1] * st[1] + ix[2]);
        }
    }

    #[test]
    fn from_values_checks_length_and_finiteness() {
        let s = GridSpec::cubic(1, 1.0, 8).unwrap();
        assert!(ScalarField::from_values(s, vec![0.0; 7]).is_err());
        let mut vals = vec![0.0; 8];
        vals[3] = f64::NAN;
        assert!(matches!(
            ScalarField::from_values(s, vals),
            Err(GridError::NonFiniteValue(3))
        ));
    }

    #[test]
    fn reductions_are_thread_count_independent() {
        let s = GridSpec::cubic(2, 3.0, 64).unwrap();
        let f = ScalarField::from_fn(s, |x| (x[0] * 1.7).sin() * (x[1] - 0.3).cos());
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let (m1, l1, a1) = pool1.install(|| (f.max_abs(), f.l2_norm(), f.argmax_abs()));
        let (m4, l4, a4) = pool4.install(|| (f.max_abs(), f.l2_norm(), f.argmax_abs()));
        assert_eq!(m1.to_bits(), m4.to_bits());
        assert_eq!(l1.to_bits(), l4.to_bits());
        assert_eq!(a1, a4);
    }

    #[test]
    fn stencils_are_thread_count_independent() {
        let s = GridSpec::cubic(2, 2.0, 48).unwrap();
        let f = ScalarField::from_fn(s, |x| (x[0] + 0.2 * x[1]).sin());
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let d1 = pool1.install(|| f.partial(1).unwrap());
        let d3 = pool3.install(|| f.partial(1).unwrap());
        assert!(d1
            .values()
            .iter()
            .zip(d3.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn support_margin_formula() {
        let s = GridSpec::cubic(3, 10.0, 8).unwrap();
        let st = State::zeros(s);
        assert!((support_margin(&st, 1.0, 2.0) - 9.0).abs() < 1e-15);
        let mut st = st;
        st.t = 4.5; // crosses zero exactly at t = (extent - radius)/speed
        assert!(support_margin(&st, 1.0, 2.0).abs() < 1e-12);
    }

    #[test]
    fn state_requires_shared_spec() {
        let a = ScalarField::zeros(GridSpec::cubic(1, 1.0, 8).unwrap());
        let b = ScalarField::zeros(GridSpec::cubic(1, 1.0, 9).unwrap());
        assert!(matches!(State::new(0.0, a, b), Err(GridError::SpecMismatch)));
    }

    #[test]
    fn zero_boundary_leaves_interior() {
        let s = GridSpec::cubic(2, 1.0, 8).unwrap();
        let mut f = ScalarField::from_fn(s, |_| 1.0);
        f.zero_boundary();
        let mut boundary = 0;
        for (i, v) in f.values().iter().enumerate() {
            if s.is_boundary(i) {
                assert_eq!(*v, 0.0);
                boundary += 1;
            } else {
                assert_eq!(*v, 1.0);
            }
        }
        assert_eq!(boundary, 8 * 8 - 6 * 6);
    }
}
