//! Run-time diagnostics: energies (plain and modified), vector-field norms,
//! inequality probes, commutator and derivation residuals, and their CSV
//! serialization.

mod probes;
mod residual;
mod vector_fields;

pub use probes::{decay_probe, product_probe, PROBE_DENOM_FLOOR};
pub use residual::{commutator_residual, el_residual};
pub use vector_fields::{
    apply_vector_field, apply_word, gamma_norm, generators, modified_energy, GammaNormSpec, PNorm,
    VectorFieldId,
};

use crate::grid::{self, GridError, ScalarField, State};
use crate::model::{planar_energy_density, ElasticConstants, EnergyDensity, ModelError};
use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("history too short: need {need} states, have {have}")]
    InsufficientHistory { need: usize, have: usize },
    #[error("history states are not uniformly spaced in time")]
    NonUniformHistory,
    #[error("no stored frame covers t = {at_t}")]
    TimeNotCovered { at_t: f64 },
    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("rotation indices must satisfy a < b, got ({a}, {b})")]
    BadRotationIndices { a: usize, b: usize },
    #[error("word order {order} exceeds the desk-scale cap of {max}", max = GammaNormSpec::MAX_ORDER)]
    OrderCapExceeded { order: usize },
    #[error("decay probe requires a finite L^p norm (p = 1 or 2)")]
    UnsupportedProbeNorm,
}

/// How much to compute per record: `Basic` keeps the per-step cost to the
/// energy and gradient reductions; `Full` adds Gamma-norms, the modified
/// energies, and the inequality probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticsLevel {
    Basic,
    Full,
}

/// One recorded row. Gamma-norms are recorded for the fixed documented set
/// (N=0, p=2), (N=1, p=2), (N=1, p=inf); lagged entries (the order-1
/// modified energy and the decay probe need centered time differences over
/// the record stride) stay `None` on rows where the window is incomplete.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub total_energy: f64,
    pub energy: EnergyDensity,
    pub grad_max: f64,
    pub v_max: f64,
    pub support_margin: f64,
    pub modified_energy_0: Option<f64>,
    pub modified_energy_1: Option<f64>,
    pub gamma_n0_p2: Option<f64>,
    pub gamma_n1_p2: Option<f64>,
    pub gamma_n1_pinf: Option<f64>,
    pub decay_ratio: Option<f64>,
    pub product_ratio: Option<f64>,
}

/// Integrated energy components: cell sums of the pointwise density times
/// the cell volume. Gradient terms use forward (link-centered) differences,
/// which makes the constant-coefficient part of the discrete flux telescope
/// exactly; centered gradients would add an O((kh)^2) oscillation on top of
/// the conserved value.
pub fn energy_totals(state: &State, constants: &ElasticConstants) -> EnergyDensity {
    let spec = *state.spec();
    let dim = spec.dim();
    let n = [spec.points(1), spec.points(2), spec.points(3)];
    let strides = spec.strides();
    let u = state.u.values();
    let v = state.v.values();
    let vol = spec.cell_volume();

    const CHUNK: usize = 8192;
    let partials: Vec<[f64; 4]> = (0..u.len())
        .into_par_iter()
        .chunks(CHUNK)
        .map(|chunk| {
            let mut acc = [0.0f64; 4];
            for flat in chunk {
                let ix = spec.unflatten(flat);
                let mut grad = [0.0; 3];
                for a in 0..dim {
                    let h = spec.spacing(a + 1);
                    grad[a] = if ix[a] + 1 < n[a] {
                        (u[flat + strides[a]] - u[flat]) / h
                    } else {
                        (u[flat] - u[flat - strides[a]]) / h
                    };
                }
                let e = planar_energy_density(constants, u[flat], grad, v[flat]);
                acc[0] += e.kinetic;
                acc[1] += e.splay_like;
                acc[2] += e.twist_axis;
                acc[3] += e.bend_like;
            }
            acc
        })
        .collect();
    let mut total = [0.0f64; 4];
    for p in partials {
        for k in 0..4 {
            total[k] += p[k];
        }
    }
    EnergyDensity {
        kinetic: total[0] * vol,
        splay_like: total[1] * vol,
        twist_axis: total[2] * vol,
        bend_like: total[3] * vol,
    }
}

/// Grid maximum of the pointwise gradient norm, from the shared stencils.
pub fn gradient_max(state: &State) -> f64 {
    let dim = state.spec().dim();
    let mut partials = Vec::with_capacity(dim);
    for axis in 1..=dim {
        partials.push(state.u.partial(axis).expect("axis within dim"));
    }
    let mut worst = ScalarField::zeros(*state.spec());
    for p in &partials {
        worst.zip_apply(p, |acc, d| acc + d * d);
    }
    worst.apply(|g2| g2.sqrt());
    worst.max_abs()
}

/// Collects [`DiagnosticsRecord`]s along a run, maintaining a three-record
/// window of states for the lagged (time-differenced) quantities.
pub struct DiagnosticsEngine {
    constants: ElasticConstants,
    level: DiagnosticsLevel,
    support_radius: f64,
    max_speed: f64,
    window: Vec<(usize, State)>,
    records: Vec<DiagnosticsRecord>,
}

impl DiagnosticsEngine {
    pub fn new(
        constants: ElasticConstants,
        level: DiagnosticsLevel,
        support_radius: f64,
        max_speed: f64,
    ) -> Self {
        Self {
            constants,
            level,
            support_radius,
            max_speed,
            window: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn record(&mut self, state: &State, step: usize) {
        let energy = energy_totals(state, &self.constants);
        let mut rec = DiagnosticsRecord {
            step,
            t: state.t,
            total_energy: energy.total(),
            energy,
            grad_max: gradient_max(state),
            v_max: state.v.max_abs(),
            support_margin: grid::support_margin(state, self.support_radius, self.max_speed),
            modified_energy_0: None,
            modified_energy_1: None,
            gamma_n0_p2: None,
            gamma_n1_p2: None,
            gamma_n1_pinf: None,
            decay_ratio: None,
            product_ratio: None,
        };

        if self.level == DiagnosticsLevel::Full {
            let solo = std::slice::from_ref(state);
            rec.modified_energy_0 = modified_energy(state, solo, &self.constants, 0).ok();
            rec.gamma_n0_p2 =
                gamma_norm(solo, GammaNormSpec { order_n: 0, p: PNorm::Two }, state.t).ok();
            rec.gamma_n1_p2 =
                gamma_norm(solo, GammaNormSpec { order_n: 1, p: PNorm::Two }, state.t).ok();
            rec.gamma_n1_pinf =
                gamma_norm(solo, GammaNormSpec { order_n: 1, p: PNorm::Inf }, state.t).ok();
            rec.product_ratio = product_probe(&state.u, solo, state.t).ok().flatten();
        }

        let idx = self.records.len();
        self.records.push(rec);

        if self.level == DiagnosticsLevel::Full {
            self.window.push((idx, state.clone()));
            if self.window.len() > 3 {
                self.window.remove(0);
            }
            if self.window.len() == 3 {
                let dt0 = self.window[1].1.t - self.window[0].1.t;
                let dt1 = self.window[2].1.t - self.window[1].1.t;
                if dt0 > 0.0 && (dt1 - dt0).abs() <= 1e-9 * dt0 {
                    let states: Vec<State> =
                        self.window.iter().map(|(_, s)| s.clone()).collect();
                    let mid_idx = self.window[1].0;
                    let at_t = states[1].t;
                    self.records[mid_idx].modified_energy_1 =
                        modified_energy(&states[1], &states, &self.constants, 1).ok();
                    self.records[mid_idx].decay_ratio = decay_probe(
                        &states,
                        GammaNormSpec { order_n: 0, p: PNorm::Two },
                        at_t,
                    )
                    .ok()
                    .flatten();
                }
            }
        }
    }

    pub fn finish(self) -> Vec<DiagnosticsRecord> {
        self.records
    }
}

/// Fixed CSV column order for diagnostics rows.
pub const CSV_HEADER: &str = "step,t,total_energy,kinetic,splay,twist,bend,grad_max,v_max,\
support_margin,modified_energy_0,modified_energy_1,gamma_n0_p2,gamma_n1_p2,gamma_n1_pinf,\
decay_ratio,product_ratio";

fn fmt17(value: f64) -> String {
    format!("{value:.16e}")
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(fmt17).unwrap_or_default()
}

/// Serialize records as CSV: mandatory header row, floats with 17
/// significant digits, empty cells for absent optionals.
pub fn write_diagnostics_csv(
    records: &[DiagnosticsRecord],
    out: &mut impl Write,
) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt17(r.t),
            fmt17(r.total_energy),
            fmt17(r.energy.kinetic),
            fmt17(r.energy.splay_like),
            fmt17(r.energy.twist_axis),
            fmt17(r.energy.bend_like),
            fmt17(r.grad_max),
            fmt17(r.v_max),
            fmt17(r.support_margin),
            fmt_opt(r.modified_energy_0),
            fmt_opt(r.modified_energy_1),
            fmt_opt(r.gamma_n0_p2),
            fmt_opt(r.gamma_n1_p2),
            fmt_opt(r.gamma_n1_pinf),
            fmt_opt(r.decay_ratio),
            fmt_opt(r.product_ratio),
        )?;
    }
    Ok(())
}

/// Render the CSV into a byte buffer (the form used for determinism checks).
pub fn diagnostics_csv_bytes(records: &[DiagnosticsRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_diagnostics_csv(records, &mut buf).expect("vec write");
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn ec(a: f64, b: f64, g: f64) -> ElasticConstants {
        ElasticConstants::new(a, b, g).unwrap()
    }

    #[test]
    fn energy_totals_zero_state() {
        let spec = GridSpec::cubic(2, 1.0, 12).unwrap();
        let e = energy_totals(&State::zeros(spec), &ec(1.0, 1.0, 2.0));
        assert_eq!(e.total(), 0.0);
    }

    /// Uniform kinetic density integrates to (density x box volume).
    #[test]
    fn energy_totals_pure_kinetic() {
        let spec = GridSpec::cubic(2, 1.0, 41).unwrap();
        let mut st = State::zeros(spec);
        st.v.apply(|_| 2.0);
        let e = energy_totals(&st, &ec(1.0, 1.0, 2.0));
        // cell sum of 1/2 * 4 over the box [-1,1]^2 sampled at 41^2 cells
        let want = 2.0 * (41.0f64 * spec.spacing(1)).powi(2);
        assert!((e.kinetic - want).abs() < 1e-10 * want);
        assert_eq!(e.spatial(), 0.0);
    }

    #[test]
    fn gradient_max_of_affine_field() {
        let spec = GridSpec::cubic(2, 1.0, 16).unwrap();
        let u = ScalarField::from_fn(spec, |x| 3.0 * x[0] - 4.0 * x[1]);
        let st = State::new(0.0, u, ScalarField::zeros(spec)).unwrap();
        assert!((gradient_max(&st) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn csv_format_is_stable() {
        let rec = DiagnosticsRecord {
            step: 3,
            t: 0.5,
            total_energy: 1.25,
            energy: EnergyDensity {
                kinetic: 1.0,
                splay_like: 0.25,
                twist_axis: 0.0,
                bend_like: 0.0,
            },
            grad_max: 0.125,
            v_max: 2.0,
            support_margin: 4.5,
            modified_energy_0: Some(2.5),
            modified_energy_1: None,
            gamma_n0_p2: Some(1.0),
            gamma_n1_p2: None,
            gamma_n1_pinf: None,
            decay_ratio: None,
            product_ratio: Some(0.5),
        };
        let bytes = diagnostics_csv_bytes(&[rec]);
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(
            row,
            "3,5.0000000000000000e-1,1.2500000000000000e0,1.0000000000000000e0,\
2.5000000000000000e-1,0.0000000000000000e0,0.0000000000000000e0,1.2500000000000000e-1,\
2.0000000000000000e0,4.5000000000000000e0,2.5000000000000000e0,,1.0000000000000000e0,,,,\
5.0000000000000000e-1"
        );
        assert!(lines.next().is_none());
    }

    #[test]
    fn engine_fills_lagged_entries_on_uniform_windows() {
        let spec = GridSpec::cubic(1, 4.0, 64).unwrap();
        let c = ec(1.0, 1.0, 2.0);
        let mut engine = DiagnosticsEngine::new(c, DiagnosticsLevel::Full, 1.5, c.max_char_speed());
        let mk = |t: f64| {
            let u = ScalarField::from_fn(spec, move |x| {
                (1.0 + 0.1 * t) * 0.4 * crate::bump::profile(x[0] / 1.4)
            });
            let v = ScalarField::from_fn(spec, |x| 0.04 * crate::bump::profile(x[0] / 1.4));
            State::new(t, u, v).unwrap()
        };
        for (k, t) in [0.0, 0.1, 0.2, 0.3].iter().enumerate() {
            engine.record(&mk(*t), k);
        }
        let records = engine.finish();
        assert_eq!(records.len(), 4);
        // middle rows of complete windows carry the lagged entries
        assert!(records[1].modified_energy_1.is_some());
        assert!(records[2].modified_energy_1.is_some());
        assert!(records[0].modified_energy_1.is_none());
        assert!(records[3].modified_energy_1.is_none());
        assert!(records[1].decay_ratio.is_some());
        // instant entries everywhere
        for r in &records {
            assert!(r.modified_energy_0.is_some());
            assert!(r.gamma_n1_p2.is_some());
            assert!(r.product_ratio.is_some());
            assert!(r.total_energy.is_finite() && r.total_energy >= 0.0);
        }
    }

    #[test]
    fn basic_level_skips_expensive_entries() {
        let spec = GridSpec::cubic(1, 4.0, 64).unwrap();
        let c = ec(1.0, 1.0, 2.0);
        let mut engine =
            DiagnosticsEngine::new(c, DiagnosticsLevel::Basic, 1.5, c.max_char_speed());
        engine.record(&State::zeros(spec), 0);
        let records = engine.finish();
        assert!(records[0].gamma_n0_p2.is_none());
        assert!(records[0].modified_energy_0.is_none());
    }
}
