//! Discrete verification of the derivation: the commutator identities of the
//! vector fields with the flat wave operator, and the agreement between the
//! PDE residual and the first variation of the action.

use super::vector_fields::{Frames, VectorFieldId};
use super::DiagnosticsError;
use crate::grid::{GridSpec, ScalarField};
use crate::model::{forcing, planar_energy_density, variational_matrix, ElasticConstants};

/// Discrete d'Alembertian `d_tt - Laplacian` of a frame stack (flat metric,
/// same stencils as everything else). Drops the first and last frame.
fn dalembertian(frames: &Frames) -> Result<Frames, DiagnosticsError> {
    let mut tt = frames.second_time_derivative()?;
    let dim = frames.fields[0].spec().dim();
    for (k, out) in tt.fields.iter_mut().enumerate() {
        let mid = &frames.fields[k + 1];
        for axis in 1..=dim {
            let d = mid.second_partial(axis, axis)?;
            out.zip_apply(&d, |a, b| a - b);
        }
    }
    Ok(tt)
}

/// Sample a closed-form space-time function on five frames around `at_t`.
fn sample_frames(
    test: &(impl Fn(f64, [f64; 3]) -> f64 + Sync),
    spec: GridSpec,
    dt: f64,
    at_t: f64,
) -> Frames {
    let times: Vec<f64> = (-2..=2).map(|k| at_t + k as f64 * dt).collect();
    let fields = times
        .iter()
        .map(|&t| ScalarField::from_fn(spec, |x| test(t, x)))
        .collect();
    Frames::from_samples(times, fields)
}

/// Grid maximum of `|[box, Gamma] f - expected|` where `expected` is zero for
/// partials and rotations (boosts included) and `2 box f` for the scaling
/// operator. Everything is discretized with the shared stencils; the test
/// function needs four continuous derivatives for the stated order to show.
///
/// The maximum excludes the outermost two layers: composing a one-sided
/// first-derivative row with a second-derivative stencil leaves an O(1)
/// boundary-collar artifact that no refinement removes, while the interior
/// composition is cleanly second order.
pub fn commutator_residual(
    test: &(impl Fn(f64, [f64; 3]) -> f64 + Sync),
    id: VectorFieldId,
    spec: GridSpec,
    dt: f64,
    at_t: f64,
) -> Result<f64, DiagnosticsError> {
    let frames = sample_frames(test, spec, dt, at_t);

    // box(Gamma f) at at_t
    let gamma_f = frames.apply(id)?;
    let box_gamma = dalembertian(&gamma_f)?;
    let lhs = box_gamma.at_time(at_t)?;

    // Gamma(box f) at at_t, and the expected commutator
    let box_f = dalembertian(&frames)?;
    let gamma_box = box_f.apply(id)?;
    let rhs = gamma_box.at_time(at_t)?;

    let mut residual = lhs.clone();
    residual.zip_apply(rhs, |a, b| a - b);
    if let VectorFieldId::Scaling = id {
        let expected = box_f.at_time(at_t)?;
        residual.zip_apply(expected, |a, b| a - 2.0 * b);
    }
    let mut worst = 0.0f64;
    for (flat, v) in residual.values().iter().enumerate() {
        if !spec.is_within_boundary_layers(flat, 2) {
            worst = worst.max(v.abs());
        }
    }
    Ok(worst)
}

/// Deterministic interior probe cells: four positions per active axis,
/// at least three cells away from every boundary.
fn probe_cells(spec: &GridSpec) -> Vec<usize> {
    let dim = spec.dim();
    let strides = spec.strides();
    let axis_positions: Vec<Vec<usize>> = (0..dim)
        .map(|a| {
            let n = spec.points(a + 1);
            let lo = 3;
            let hi = n - 4;
            let mut v: Vec<usize> = (0..4).map(|j| lo + j * (hi - lo) / 3).collect();
            v.dedup();
            v
        })
        .collect();
    let mut cells = vec![0usize];
    for a in 0..dim {
        let mut next = Vec::new();
        for base in &cells {
            for &i in &axis_positions[a] {
                next.push(base + i * strides[a]);
            }
        }
        cells = next;
    }
    cells
}

/// Max over interior probes of the discrepancy between
/// (a) the direct discrete PDE residual `u_tt - sum a_ij d_i d_j u - F` and
/// (b) the discrete first variation of the action `int (u_t^2/2 - W)`,
/// obtained by central-differencing the (localized) action in the amplitude
/// of a one-cell perturbation. Both discretize the same Euler-Lagrange
/// operator to second order, so the discrepancy shrinks like h^2.
pub fn el_residual(
    sample: &(impl Fn(f64, [f64; 3]) -> f64 + Sync),
    constants: &ElasticConstants,
    spec: GridSpec,
    dt: f64,
    at_t: f64,
) -> Result<f64, DiagnosticsError> {
    let frames = sample_frames(sample, spec, dt, at_t);
    let dim = spec.dim();

    // route (a): pointwise PDE residual on the middle frame
    let u_tt = frames.second_time_derivative()?;
    let u_tt = u_tt.at_time(at_t)?;
    let mid = &frames.fields[2];
    let d1 = mid.partial(1)?;
    let d2 = if dim >= 2 { Some(mid.partial(2)?) } else { None };
    let mut operator = {
        let mut acc = ScalarField::zeros(spec);
        let d11 = mid.second_partial(1, 1)?;
        let d22 = if dim >= 2 { Some(mid.second_partial(2, 2)?) } else { None };
        let d12 = if dim >= 2 { Some(mid.second_partial(1, 2)?) } else { None };
        let d33 = if dim >= 3 { Some(mid.second_partial(3, 3)?) } else { None };
        for flat in 0..spec.len() {
            let u = mid.values()[flat];
            let a = variational_matrix(constants, u);
            let g1 = d1.values()[flat];
            let g2 = d2.as_ref().map_or(0.0, |d| d.values()[flat]);
            let mut total = a.entry(0, 0) * d11.values()[flat];
            if let (Some(d22), Some(d12)) = (&d22, &d12) {
                total += a.entry(1, 1) * d22.values()[flat]
                    + 2.0 * a.entry(0, 1) * d12.values()[flat];
            }
            if let Some(d33) = &d33 {
                total += a.entry(2, 2) * d33.values()[flat];
            }
            acc.values_mut()[flat] = total + forcing(constants, u, g1, g2);
        }
        acc
    };
    operator.zip_apply(u_tt, |op, tt| tt - op); // residual (a) = u_tt - operator

    // route (b): localized discrete action variation per probe
    let vol = spec.cell_volume();
    let strides = spec.strides();
    let f = &frames.fields;
    let mut worst = 0.0f64;
    for p in probe_cells(&spec) {
        let eps = 1e-4 * (1.0 + f[2].values()[p].abs());
        let s = |sign: f64| -> f64 {
            let eps = sign * eps;
            let val = |k: usize, q: usize| -> f64 {
                let base = f[k].values()[q];
                if k == 2 && q == p {
                    base + eps
                } else {
                    base
                }
            };
            // elastic terms: cells whose centered gradient reads the probe
            let mut total = 0.0;
            let mut box_cells = vec![p];
            for a in 0..dim {
                let mut next = Vec::with_capacity(box_cells.len() * 3);
                for &c in &box_cells {
                    next.push(c - strides[a]);
                    next.push(c);
                    next.push(c + strides[a]);
                }
                box_cells = next;
            }
            for q in box_cells {
                let mut grad = [0.0; 3];
                for a in 0..dim {
                    grad[a] = (val(2, q + strides[a]) - val(2, q - strides[a]))
                        / (2.0 * spec.spacing(a + 1));
                }
                let w = planar_energy_density(constants, val(2, q), grad, 0.0).spatial();
                total -= w;
            }
            // kinetic terms that read the perturbed frame
            let inv_2dt = 0.5 / dt;
            let ut1 = (val(2, p) - val(0, p)) * inv_2dt;
            let ut3 = (val(4, p) - val(2, p)) * inv_2dt;
            total += 0.5 * (ut1 * ut1 + ut3 * ut3);
            total * vol * dt
        };
        let b = -(s(1.0) - s(-1.0)) / (2.0 * eps * vol * dt);
        let a = operator.values()[p];
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}
