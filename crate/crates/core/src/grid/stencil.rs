//! Finite-difference stencil kernels, second order everywhere.
//!
//! Interior first derivative: (f[i+1] - f[i-1]) / 2h.
//! Boundary first derivative: (-3 f[0] + 4 f[1] - f[2]) / 2h and its mirror.
//! Interior second derivative: (f[i-1] - 2 f[i] + f[i+1]) / h^2.
//! Boundary second derivative: (2 f[0] - 5 f[1] + 4 f[2] - f[3]) / h^2 and
//! its mirror (exact on cubics, so still second order).
//!
//! Output cells depend only on input cells, so the parallel partitioning
//! below never affects the result bits.

use super::ScalarField;
use rayon::prelude::*;

/// Fixed task granularity: independent of the worker count.
const TASK_CHUNK: usize = 8192;

/// First derivative along `axis` (0-based here).
pub(super) fn partial(field: &ScalarField, axis: usize) -> ScalarField {
    let spec = *field.spec();
    let n = [spec.points(1), spec.points(2), spec.points(3)][axis];
    let stride = spec.strides()[axis];
    let inv_2h = 1.0 / (2.0 * spec.spacing(axis + 1));
    let f = field.values();

    let mut out = ScalarField::zeros(spec);
    out.values_mut()
        .par_chunks_mut(TASK_CHUNK)
        .enumerate()
        .for_each(|(chunk, dst)| {
            let base = chunk * TASK_CHUNK;
            for (k, d) in dst.iter_mut().enumerate() {
                let flat = base + k;
                let i = (flat / stride) % n;
                *d = if i == 0 {
                    (-3.0 * f[flat] + 4.0 * f[flat + stride] - f[flat + 2 * stride]) * inv_2h
                } else if i == n - 1 {
                    (3.0 * f[flat] - 4.0 * f[flat - stride] + f[flat - 2 * stride]) * inv_2h
                } else {
                    (f[flat + stride] - f[flat - stride]) * inv_2h
                };
            }
        });
    out
}

/// Second derivative along one axis (0-based here).
pub(super) fn second_same(field: &ScalarField, axis: usize) -> ScalarField {
    let spec = *field.spec();
    let n = [spec.points(1), spec.points(2), spec.points(3)][axis];
    let stride = spec.strides()[axis];
    let h = spec.spacing(axis + 1);
    let inv_h2 = 1.0 / (h * h);
    let f = field.values();

    let mut out = ScalarField::zeros(spec);
    out.values_mut()
        .par_chunks_mut(TASK_CHUNK)
        .enumerate()
        .for_each(|(chunk, dst)| {
            let base = chunk * TASK_CHUNK;
            for (k, d) in dst.iter_mut().enumerate() {
                let flat = base + k;
                let i = (flat / stride) % n;
                *d = if i == 0 {
                    (2.0 * f[flat] - 5.0 * f[flat + stride] + 4.0 * f[flat + 2 * stride]
                        - f[flat + 3 * stride])
                        * inv_h2
                } else if i == n - 1 {
                    (2.0 * f[flat] - 5.0 * f[flat - stride] + 4.0 * f[flat - 2 * stride]
                        - f[flat - 3 * stride])
                        * inv_h2
                } else {
                    (f[flat - stride] - 2.0 * f[flat] + f[flat + stride]) * inv_h2
                };
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use crate::grid::{GridSpec, ScalarField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_field_has_zero_derivatives() {
        let s = GridSpec::cubic(2, 1.5, 12).unwrap();
        let f = ScalarField::from_fn(s, |_| 4.2);
        // one-sided boundary rows cancel only to rounding
        assert!(f.partial(1).unwrap().max_abs() < 1e-13);
        assert!(f.second_partial(2, 2).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn partial_exact_on_affine_everywhere() {
        let s = GridSpec::new(3, &[1.0, 2.0, 1.5], &[9, 11, 8]).unwrap();
        let f = ScalarField::from_fn(s, |x| 2.0 - 3.0 * x[0] + 0.5 * x[1] + 7.0 * x[2]);
        for (axis, want) in [(1, -3.0), (2, 0.5), (3, 7.0)] {
            let d = f.partial(axis).unwrap();
            for v in d.values() {
                assert!((v - want).abs() < 1e-12, "axis {axis}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn partial_rejects_axis_out_of_range() {
        let s = GridSpec::cubic(2, 1.0, 8).unwrap();
        let f = ScalarField::zeros(s);
        assert!(f.partial(3).is_err());
        assert!(f.second_partial(1, 3).is_err());
    }

    /// Interior truncation error of the centered stencil is bounded by
    /// h^2 max|f'''| / 6; the one-sided boundary rows by h^2 max|f'''| / 3.
    #[test]
    fn partial_taylor_remainder_bound() {
        for points in [64usize, 128] {
            let s = GridSpec::cubic(1, 2.0, points).unwrap();
            let f = ScalarField::from_fn(s, |x| x[0].sin());
            let d = f.partial(1).unwrap();
            let h = s.spacing(1);
            let interior_bound = h * h / 6.0 * 1.0; // max|cos| = 1
            let boundary_bound = h * h / 3.0 * 1.0;
            for (i, v) in d.values().iter().enumerate() {
                let err = (v - s.coord(1, i).cos()).abs();
                let bound = if i == 0 || i == points - 1 { boundary_bound } else { interior_bound };
                assert!(err <= bound * 1.0001, "i={i} err={err:e} bound={bound:e}");
            }
        }
    }

    #[test]
    fn second_partial_exact_on_quadratics() {
        let s = GridSpec::new(2, &[1.0, 1.0], &[10, 12]).unwrap();
        let f = ScalarField::from_fn(s, |x| x[0] * x[1]);
        let cross = f.second_partial(1, 2).unwrap();
        let d11 = f.second_partial(1, 1).unwrap();
        for v in cross.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(d11.max_abs() < 1e-12);
    }

    #[test]
    fn mixed_derivative_is_bitwise_symmetric() {
        let s = GridSpec::cubic(3, 1.0, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = ScalarField::from_values(s, values).unwrap();
        for (a, b) in [(1, 2), (1, 3), (2, 3)] {
            let ab = f.second_partial(a, b).unwrap();
            let ba = f.second_partial(b, a).unwrap();
            assert!(ab
                .values()
                .iter()
                .zip(ba.values())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn cross_derivative_converges_at_second_order() {
        let err_for = |points: usize| {
            let s = GridSpec::cubic(2, 1.0, points).unwrap();
            let f = ScalarField::from_fn(s, |x| x[0].sin() * x[1].cos());
            let d = f.second_partial(1, 2).unwrap();
            let mut worst = 0.0f64;
            for (i, v) in d.values().iter().enumerate() {
                let x = s.position(i);
                worst = worst.max((v - (-x[0].cos() * x[1].sin())).abs());
            }
            worst
        };
        let order = (err_for(33) / err_for(65)).log2();
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn stencils_are_linear() {
        let s = GridSpec::cubic(2, 1.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = ScalarField::from_values(s, (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let g = ScalarField::from_values(s, (0..s.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (a, b) = (1.7, -0.4);
        let mut combo = f.clone();
        combo.apply(|v| a * v);
        let mut gb = g.clone();
        gb.apply(|v| b * v);
        combo.zip_apply(&gb, |x, y| x + y);

        let d_combo = combo.partial(2).unwrap();
        let df = f.partial(2).unwrap();
        let dg = g.partial(2).unwrap();
        for ((dc, x), y) in d_combo.values().iter().zip(df.values()).zip(dg.values()) {
            assert!((dc - (a * x + b * y)).abs() <= 1e-12);
        }
    }

    /// For fields vanishing near the boundary the centered stencil is exactly
    /// antisymmetric, so the discrete integration-by-parts identity holds to
    /// rounding (and a fortiori to truncation order on a refinement pair).
    #[test]
    fn integration_by_parts_on_compact_fields() {
        for points in [32usize, 64] {
            let s = GridSpec::cubic(2, 1.0, points).unwrap();
            let bump = |x: [f64; 3]| {
                let r2 = (x[0] * x[0] + x[1] * x[1]) / 0.36;
                if r2 < 1.0 { (1.0 - 1.0 / (1.0 - r2)).exp() } else { 0.0 }
            };
            let f = ScalarField::from_fn(s, bump);
            let g = ScalarField::from_fn(s, |x| bump([x[0] - 0.1, x[1] + 0.05, 0.0]));
            let df = f.partial(1).unwrap();
            let dg = g.partial(1).unwrap();
            let vol = s.cell_volume();
            let pairing: f64 = df
                .values()
                .iter()
                .zip(g.values())
                .zip(f.values().iter().zip(dg.values()))
                .map(|((dfi, gi), (fi, dgi))| (dfi * gi + fi * dgi) * vol)
                .sum();
            assert!(pairing.abs() < 1e-12, "pairing {pairing:e}");
        }
    }
}
