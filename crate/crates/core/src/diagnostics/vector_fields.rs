//! Klainerman vector fields on discrete space-time data: generator
//! application, ordered-word enumeration, Gamma-norms, and the modified
//! energy.
//!
//! A word is applied to a time-indexed stack of fields (`Frames`). The raw
//! unknown carries its exact time derivative (v = u_t), so single generators
//! never need time differencing; nested time derivatives fall back to
//! centered differences over the stored history, shrinking the usable time
//! range by one frame per level.

use super::DiagnosticsError;
use crate::grid::{chunked_zip_sum, ScalarField, State};
use crate::model::ElasticConstants;

/// One generator of the vector-field algebra. Index 0 is time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFieldId {
    /// `Partial(0)` is the time derivative, `Partial(i)` the spatial one.
    Partial(usize),
    /// `Rotation(a, b)` with `a < b`: spatial rotation for `a >= 1`, Lorentz
    /// boost `t d_i + x_i d_t` for `a = 0` (the standard convention; the
    /// alternative `d_0 = -d_t` bookkeeping only flips signs, which the norms
    /// never see).
    Rotation(usize, usize),
    /// The scaling operator `t d_t + sum_i x_i d_i`.
    Scaling,
}

impl VectorFieldId {
    fn validate(&self, dim: usize) -> Result<(), DiagnosticsError> {
        let check = |axis: usize| {
            if axis > dim {
                Err(DiagnosticsError::AxisOutOfRange { axis, dim })
            } else {
                Ok(())
            }
        };
        match *self {
            VectorFieldId::Partial(a) => check(a),
            VectorFieldId::Rotation(a, b) => {
                if a >= b {
                    return Err(DiagnosticsError::BadRotationIndices { a, b });
                }
                check(a)?;
                check(b)
            }
            VectorFieldId::Scaling => Ok(()),
        }
    }

}

/// All generators for a grid of the given dimension, in a fixed order:
/// partials, rotations (lexicographic), scaling. 1+3+6+1 = 11 in 3-D.
pub fn generators(dim: usize) -> Vec<VectorFieldId> {
    let mut out = Vec::new();
    for a in 0..=dim {
        out.push(VectorFieldId::Partial(a));
    }
    for a in 0..=dim {
        for b in (a + 1)..=dim {
            out.push(VectorFieldId::Rotation(a, b));
        }
    }
    out.push(VectorFieldId::Scaling);
    out
}

/// A field sampled at consecutive stored times, optionally with its exact
/// time derivative.
pub(crate) struct Frames {
    pub(crate) times: Vec<f64>,
    pub(crate) fields: Vec<ScalarField>,
    pub(crate) exact_dt: Option<Vec<ScalarField>>,
}

impl Frames {
    pub(crate) fn base_u(history: &[State]) -> Result<Self, DiagnosticsError> {
        validate_history(history)?;
        Ok(Self {
            times: history.iter().map(|s| s.t).collect(),
            fields: history.iter().map(|s| s.u.clone()).collect(),
            exact_dt: Some(history.iter().map(|s| s.v.clone()).collect()),
        })
    }

    pub(crate) fn base_velocity(history: &[State]) -> Result<Self, DiagnosticsError> {
        validate_history(history)?;
        Ok(Self {
            times: history.iter().map(|s| s.t).collect(),
            fields: history.iter().map(|s| s.v.clone()).collect(),
            exact_dt: None,
        })
    }

    /// The spatial derivative `d_axis u`, whose exact time derivative is
    /// `d_axis v`.
    pub(crate) fn base_partial_u(history: &[State], axis: usize) -> Result<Self, DiagnosticsError> {
        validate_history(history)?;
        Ok(Self {
            times: history.iter().map(|s| s.t).collect(),
            fields: history
                .iter()
                .map(|s| s.u.partial(axis))
                .collect::<Result<_, _>>()?,
            exact_dt: Some(
                history
                    .iter()
                    .map(|s| s.v.partial(axis))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Closed-form samples with no carried derivative (everything is
    /// centered-differenced).
    pub(crate) fn from_samples(times: Vec<f64>, fields: Vec<ScalarField>) -> Self {
        Self { times, fields, exact_dt: None }
    }

    pub(crate) fn len(&self) -> usize {
        self.fields.len()
    }

    fn spacing(&self) -> f64 {
        if self.times.len() >= 2 {
            self.times[1] - self.times[0]
        } else {
            f64::NAN
        }
    }

    /// Time derivative: the carried exact one when available, otherwise a
    /// centered difference (dropping the first and last frame).
    pub(crate) fn time_derivative(&self) -> Result<Frames, DiagnosticsError> {
        if let Some(dt_fields) = &self.exact_dt {
            return Ok(Frames {
                times: self.times.clone(),
                fields: dt_fields.clone(),
                exact_dt: None,
            });
        }
        if self.len() < 3 {
            return Err(DiagnosticsError::InsufficientHistory { need: 3, have: self.len() });
        }
        let dt = self.spacing();
        let inv_2dt = 0.5 / dt;
        let mut fields = Vec::with_capacity(self.len() - 2);
        for i in 1..self.len() - 1 {
            let mut f = self.fields[i + 1].clone();
            f.zip_apply(&self.fields[i - 1], move |a, b| (a - b) * inv_2dt);
            fields.push(f);
        }
        Ok(Frames { times: self.times[1..self.len() - 1].to_vec(), fields, exact_dt: None })
    }

    /// Centered second time difference (drops the first and last frame).
    pub(crate) fn second_time_derivative(&self) -> Result<Frames, DiagnosticsError> {
        if self.len() < 3 {
            return Err(DiagnosticsError::InsufficientHistory { need: 3, have: self.len() });
        }
        let dt = self.spacing();
        let inv_dt2 = 1.0 / (dt * dt);
        let mut fields = Vec::with_capacity(self.len() - 2);
        for i in 1..self.len() - 1 {
            let mut f = self.fields[i + 1].clone();
            let mid = &self.fields[i];
            f.zip_apply(mid, move |a, b| a - 2.0 * b);
            f.zip_apply(&self.fields[i - 1], move |a, b| (a + b) * inv_dt2);
            fields.push(f);
        }
        Ok(Frames { times: self.times[1..self.len() - 1].to_vec(), fields, exact_dt: None })
    }

    pub(crate) fn apply(&self, id: VectorFieldId) -> Result<Frames, DiagnosticsError> {
        let dim = self.fields[0].spec().dim();
        id.validate(dim)?;
        match id {
            VectorFieldId::Partial(0) => self.time_derivative(),
            VectorFieldId::Partial(axis) => {
                let fields = self
                    .fields
                    .iter()
                    .map(|f| f.partial(axis))
                    .collect::<Result<Vec<_>, _>>()?;
                let exact_dt = match &self.exact_dt {
                    Some(dts) => Some(
                        dts.iter().map(|f| f.partial(axis)).collect::<Result<Vec<_>, _>>()?,
                    ),
                    None => None,
                };
                Ok(Frames { times: self.times.clone(), fields, exact_dt })
            }
            VectorFieldId::Rotation(a, b) if a >= 1 => {
                let rotate = |f: &ScalarField| -> Result<ScalarField, DiagnosticsError> {
                    let da = f.partial(a)?;
                    let db = f.partial(b)?;
                    Ok(coord_combine(&da, &db, move |x, va, vb| x[b - 1] * va - x[a - 1] * vb))
                };
                let fields = self.fields.iter().map(rotate).collect::<Result<Vec<_>, _>>()?;
                let exact_dt = match &self.exact_dt {
                    Some(dts) => Some(dts.iter().map(rotate).collect::<Result<Vec<_>, _>>()?),
                    None => None,
                };
                Ok(Frames { times: self.times.clone(), fields, exact_dt })
            }
            VectorFieldId::Rotation(_, axis) => {
                // boost: t d_axis f + x_axis f_t
                let dot = self.time_derivative()?;
                let offset = self.frame_offset(&dot);
                let mut fields = Vec::with_capacity(dot.len());
                for (k, t) in dot.times.iter().enumerate() {
                    let da = self.fields[k + offset].partial(axis)?;
                    let t = *t;
                    fields.push(coord_combine(&da, &dot.fields[k], move |x, va, vdot| {
                        t * va + x[axis - 1] * vdot
                    }));
                }
                Ok(Frames { times: dot.times, fields, exact_dt: None })
            }
            VectorFieldId::Scaling => {
                let dot = self.time_derivative()?;
                let offset = self.frame_offset(&dot);
                let mut fields = Vec::with_capacity(dot.len());
                for (k, t) in dot.times.iter().enumerate() {
                    let f = &self.fields[k + offset];
                    let mut spatial: Option<ScalarField> = None;
                    for axis in 1..=dim {
                        let da = f.partial(axis)?;
                        let term =
                            coord_combine(&da, &da, move |x, va, _| x[axis - 1] * va);
                        spatial = Some(match spatial {
                            None => term,
                            Some(mut acc) => {
                                acc.zip_apply(&term, |p, q| p + q);
                                acc
                            }
                        });
                    }
                    let t = *t;
                    let mut out = spatial.expect("dim >= 1");
                    out.zip_apply(&dot.fields[k], move |sp, vdot| t * vdot + sp);
                    fields.push(out);
                }
                Ok(Frames { times: dot.times, fields, exact_dt: None })
            }
        }
    }

    /// Index shift between `self` and a (possibly shrunk) derived stack.
    fn frame_offset(&self, derived: &Frames) -> usize {
        if derived.len() == self.len() {
            0
        } else {
            1
        }
    }

    /// The frame at time `at_t` (within a small fraction of the spacing).
    pub(crate) fn at_time(&self, at_t: f64) -> Result<&ScalarField, DiagnosticsError> {
        let tol = if self.len() >= 2 {
            self.spacing().abs() * 1e-3
        } else {
            1e-9 * at_t.abs().max(1.0)
        };
        self.times
            .iter()
            .position(|t| (t - at_t).abs() <= tol.max(1e-12))
            .map(|i| &self.fields[i])
            .ok_or(DiagnosticsError::TimeNotCovered { at_t })
    }
}

fn validate_history(history: &[State]) -> Result<(), DiagnosticsError> {
    if history.is_empty() {
        return Err(DiagnosticsError::InsufficientHistory { need: 1, have: 0 });
    }
    if history.len() >= 2 {
        let dt = history[1].t - history[0].t;
        if !(dt > 0.0) {
            return Err(DiagnosticsError::NonUniformHistory);
        }
        for w in history.windows(2) {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > 1e-6 * dt.max(1e-12) {
                return Err(DiagnosticsError::NonUniformHistory);
            }
        }
    }
    Ok(())
}

/// Pointwise `out(x) = f(position, a(x), b(x))` on a shared spec.
fn coord_combine(
    a: &ScalarField,
    b: &ScalarField,
    f: impl Fn([f64; 3], f64, f64) -> f64 + Sync,
) -> ScalarField {
    let spec = *a.spec();
    let mut out = a.clone();
    let bv = b.values();
    let av = a.values();
    for (flat, o) in out.values_mut().iter_mut().enumerate() {
        *o = f(spec.position(flat), av[flat], bv[flat]);
    }
    out
}

/// Apply a single vector field to the stored solution at time `at_t`.
pub fn apply_vector_field(
    history: &[State],
    id: VectorFieldId,
    at_t: f64,
) -> Result<ScalarField, DiagnosticsError> {
    Ok(Frames::base_u(history)?.apply(id)?.at_time(at_t)?.clone())
}

/// Apply an ordered word (left entry outermost) to the stored solution.
pub fn apply_word(
    history: &[State],
    word: &[VectorFieldId],
    at_t: f64,
) -> Result<ScalarField, DiagnosticsError> {
    let mut frames = Frames::base_u(history)?;
    for id in word.iter().rev() {
        frames = frames.apply(*id)?;
    }
    Ok(frames.at_time(at_t)?.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PNorm {
    One,
    Two,
    Inf,
}

/// Order/exponent pair for a Gamma-norm. Orders above 2 are rejected: the
/// word count grows geometrically and desk-scale diagnostics stop there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GammaNormSpec {
    pub order_n: usize,
    pub p: PNorm,
}

impl GammaNormSpec {
    pub const MAX_ORDER: usize = 2;

    pub fn new(order_n: usize, p: PNorm) -> Result<Self, DiagnosticsError> {
        if order_n > Self::MAX_ORDER {
            return Err(DiagnosticsError::OrderCapExceeded { order: order_n });
        }
        Ok(Self { order_n, p })
    }
}

pub(crate) fn field_norm(field: &ScalarField, p: PNorm) -> f64 {
    match p {
        PNorm::One => field.l1_norm(),
        PNorm::Two => field.l2_norm(),
        PNorm::Inf => field.max_abs(),
    }
}

/// Enumerate all ordered words of length `0..=order` over the generator set,
/// in a fixed order (by length, then lexicographically by generator index).
pub(crate) fn words(dim: usize, order: usize) -> Vec<Vec<VectorFieldId>> {
    let gens = generators(dim);
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..order {
        let mut next = Vec::with_capacity(layer.len() * gens.len());
        for word in &layer {
            for g in &gens {
                let mut w = word.clone();
                w.push(*g);
                next.push(w);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// The Gamma-norm: the sum over all ordered words of length at most
/// `order_n` of the discrete L^p norm (cell-volume weights; L-infinity is
/// the grid max) of the word applied to `u`.
pub fn gamma_norm(
    history: &[State],
    spec: GammaNormSpec,
    at_t: f64,
) -> Result<f64, DiagnosticsError> {
    let dim = history
        .first()
        .ok_or(DiagnosticsError::InsufficientHistory { need: 1, have: 0 })?
        .spec()
        .dim();
    let mut total = 0.0;
    for word in words(dim, spec.order_n) {
        let field = apply_word(history, &word, at_t)?;
        total += field_norm(&field, spec.p);
    }
    Ok(total)
}

/// Pointwise sum of |word(u)| over all words of length at most `order`,
/// used to locate the argmax cell of the L-infinity side of the decay probe.
pub(crate) fn pointwise_word_sum(
    history: &[State],
    order: usize,
    at_t: f64,
) -> Result<ScalarField, DiagnosticsError> {
    let dim = history[0].spec().dim();
    let mut acc: Option<ScalarField> = None;
    for word in words(dim, order) {
        let field = apply_word(history, &word, at_t)?;
        acc = Some(match acc {
            None => {
                let mut f = field;
                f.apply(|v| v.abs());
                f
            }
            Some(mut a) => {
                a.zip_apply(&field, |p, q| p + q.abs());
                a
            }
        });
    }
    Ok(acc.expect("at least the empty word"))
}

/// The modified energy at order `k` (0 or 1): for each word of length `k`,
/// `|word(d u)|_{L2}^2` summed over the four space-time derivative components
/// of `u`, plus the semidefinite form `int abar_ij(u) d_i(word u) d_j(word u)`.
/// Requires `alpha <= gamma`.
pub fn modified_energy(
    state: &State,
    history: &[State],
    constants: &ElasticConstants,
    k_order: usize,
) -> Result<f64, DiagnosticsError> {
    if k_order > 1 {
        return Err(DiagnosticsError::OrderCapExceeded { order: k_order });
    }
    let c0 = constants.c0()?;
    let dim = state.spec().dim();
    let at_t = state.t;

    let single_state;
    let history: &[State] = if history.is_empty() {
        single_state = [state.clone()];
        &single_state
    } else {
        history
    };

    let word_list: Vec<Vec<VectorFieldId>> = if k_order == 0 {
        vec![Vec::new()]
    } else {
        generators(dim).into_iter().map(|g| vec![g]).collect()
    };

    let vol = state.spec().cell_volume();
    let mut total = 0.0;
    for word in &word_list {
        // |word(d u)|_{L2}^2 over the derivative components d = (d_t, grad)
        for mu in 0..=3 {
            let base = if mu == 0 {
                Frames::base_velocity(history)?
            } else if mu <= dim {
                Frames::base_partial_u(history, mu)?
            } else {
                continue;
            };
            let mut frames = base;
            for id in word.iter().rev() {
                frames = frames.apply(*id)?;
            }
            let f = frames.at_time(at_t)?;
            let n = f.l2_norm();
            total += n * n;
        }

        // int abar_ij(u) d_i(word u) d_j(word u) dx
        let wu = apply_word(history, word, at_t)?;
        let d1 = wu.partial(1)?;
        let d2 = if dim >= 2 { Some(wu.partial(2)?) } else { None };
        let u_now = &history
            .iter()
            .find(|s| (s.t - at_t).abs() <= 1e-9 * at_t.abs().max(1.0))
            .unwrap_or(state)
            .u;
        let quad = match &d2 {
            Some(d2) => {
                let mut sum = 0.0;
                let uv = u_now.values();
                let d1v = d1.values();
                let d2v = d2.values();
                for flat in 0..uv.len() {
                    let (s, c) = uv[flat].sin_cos();
                    let (a, b) = (d1v[flat], d2v[flat]);
                    sum += c0 * (c * c * a * a + 2.0 * s * c * a * b + s * s * b * b);
                }
                sum * vol
            }
            None => {
                chunked_zip_sum(u_now.values(), d1.values(), move |u, a| {
                    let c = u.cos();
                    c0 * c * c * a * a
                }) * vol
            }
        };
        total += quad;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::model::{rescaled_matrix, ElasticConstants};

    fn ec(a: f64, b: f64, g: f64) -> ElasticConstants {
        ElasticConstants::new(a, b, g).unwrap()
    }

    /// History with u = f(t, x) sampled exactly and v = exact df/dt.
    fn synthetic_history(
        spec: GridSpec,
        times: &[f64],
        f: impl Fn(f64, [f64; 3]) -> f64 + Copy + Sync,
        fdot: impl Fn(f64, [f64; 3]) -> f64 + Copy + Sync,
    ) -> Vec<State> {
        times
            .iter()
            .map(|&t| {
                State::new(
                    t,
                    ScalarField::from_fn(spec, move |x| f(t, x)),
                    ScalarField::from_fn(spec, move |x| fdot(t, x)),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn generator_counts() {
        assert_eq!(generators(3).len(), 11);
        assert_eq!(generators(2).len(), 7);
        assert_eq!(generators(1).len(), 4);
        assert_eq!(words(3, 2).len(), 1 + 11 + 121);
    }

    #[test]
    fn rotation_annihilates_radial_fields() {
        let spec = GridSpec::cubic(2, 2.0, 24).unwrap();
        let history = synthetic_history(
            spec,
            &[0.0],
            |_, x| x[0] * x[0] + x[1] * x[1],
            |_, _| 0.0,
        );
        let rot = apply_vector_field(&history, VectorFieldId::Rotation(1, 2), 0.0).unwrap();
        assert!(rot.max_abs() < 1e-12);
    }

    #[test]
    fn scaling_fixes_degree_one_homogeneous_fields() {
        let spec = GridSpec::cubic(2, 2.0, 16).unwrap();
        let history = synthetic_history(spec, &[0.0], |_, x| x[0], |_, _| 0.0);
        let scaled = apply_vector_field(&history, VectorFieldId::Scaling, 0.0).unwrap();
        for (flat, v) in scaled.values().iter().enumerate() {
            assert!((v - spec.position(flat)[0]).abs() < 1e-12);
        }
    }

    /// Boost of u = t x1 against the symbolic result t^2 + x1^2; v = x1 is
    /// carried exactly and the spatial stencil is exact on affine fields.
    #[test]
    fn boost_matches_symbolic_oracle() {
        let spec = GridSpec::cubic(2, 2.0, 16).unwrap();
        let t0 = 0.7;
        let history = synthetic_history(spec, &[t0], |t, x| t * x[0], |_, x| x[0]);
        let boosted = apply_vector_field(&history, VectorFieldId::Rotation(0, 1), t0).unwrap();
        for (flat, v) in boosted.values().iter().enumerate() {
            let x1 = spec.position(flat)[0];
            assert!((v - (t0 * t0 + x1 * x1)).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_time_words_need_bracketing_history() {
        let spec = GridSpec::cubic(1, 2.0, 16).unwrap();
        let history = synthetic_history(spec, &[0.5], |t, x| t * x[0], |_, x| x[0]);
        // d_t d_t u needs a centered difference of v: one state is not enough
        let word = [VectorFieldId::Partial(0), VectorFieldId::Partial(0)];
        assert!(matches!(
            apply_word(&history, &word, 0.5),
            Err(DiagnosticsError::InsufficientHistory { .. })
        ));
        let history = synthetic_history(
            spec,
            &[0.4, 0.5, 0.6],
            |t, x| t * t * x[0],
            |t, x| 2.0 * t * x[0],
        );
        let dtt = apply_word(&history, &word, 0.5).unwrap();
        for (flat, v) in dtt.values().iter().enumerate() {
            assert!((v - 2.0 * spec.position(flat)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_norm_order_zero_is_plain_lp() {
        let spec = GridSpec::cubic(2, 1.5, 20).unwrap();
        let history = synthetic_history(
            spec,
            &[0.0],
            |_, x| (x[0] - 0.3).sin() * x[1].cos(),
            |_, _| 0.0,
        );
        for (p, want) in [
            (PNorm::Two, history[0].u.l2_norm()),
            (PNorm::One, history[0].u.l1_norm()),
            (PNorm::Inf, history[0].u.max_abs()),
        ] {
            let got = gamma_norm(&history, GammaNormSpec::new(0, p).unwrap(), 0.0).unwrap();
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn gamma_norm_zero_field_is_zero() {
        let spec = GridSpec::cubic(3, 1.0, 8).unwrap();
        let history = vec![State::zeros(spec)];
        for n in 0..=1 {
            let got =
                gamma_norm(&history, GammaNormSpec::new(n, PNorm::Two).unwrap(), 0.0).unwrap();
            assert_eq!(got, 0.0);
        }
    }

    /// Brute-force oracle: enumerate the eleven generator applications by an
    /// independent direct loop and sum their norms by hand.
    #[test]
    fn gamma_norm_order_one_matches_bruteforce() {
        let spec = GridSpec::cubic(2, 2.0, 24).unwrap();
        let t0 = 0.8;
        let history = synthetic_history(
            spec,
            &[t0],
            |_, x| crate::bump::profile((x[0] * x[0] + x[1] * x[1]).sqrt() / 1.4),
            |_, x| 0.3 * crate::bump::profile((x[0] * x[0] + x[1] * x[1]).sqrt() / 1.2),
        );
        let st = &history[0];
        let vol = spec.cell_volume();
        let l2 = |vals: &[f64]| (vals.iter().map(|v| v * v).sum::<f64>() * vol).sqrt();

        let d1 = st.u.partial(1).unwrap();
        let d2 = st.u.partial(2).unwrap();
        let mut expected = l2(st.u.values());
        expected += l2(st.v.values()); // Partial(0)
        expected += l2(d1.values());
        expected += l2(d2.values());
        let per_cell = |f: &dyn Fn(usize) -> f64| -> f64 {
            let vals: Vec<f64> = (0..spec.len()).map(f).collect();
            l2(&vals)
        };
        // boosts, rotation, scaling assembled by hand
        expected += per_cell(&|i| {
            let x = spec.position(i);
            t0 * d1.values()[i] + x[0] * st.v.values()[i]
        });
        expected += per_cell(&|i| {
            let x = spec.position(i);
            t0 * d2.values()[i] + x[1] * st.v.values()[i]
        });
        expected += per_cell(&|i| {
            let x = spec.position(i);
            x[0] * d2.values()[i] - x[1] * d1.values()[i]
        });
        expected += per_cell(&|i| {
            let x = spec.position(i);
            t0 * st.v.values()[i] + x[0] * d1.values()[i] + x[1] * d2.values()[i]
        });

        let got = gamma_norm(&history, GammaNormSpec::new(1, PNorm::Two).unwrap(), t0).unwrap();
        assert!(
            (got - expected).abs() <= 1e-12 * expected.max(1.0),
            "{got} vs {expected}"
        );
    }

    #[test]
    fn gamma_norm_monotone_in_order_and_homogeneous() {
        let spec = GridSpec::cubic(2, 2.0, 20).unwrap();
        let mk = |scale: f64| {
            synthetic_history(
                spec,
                &[0.3],
                move |_, x| scale * crate::bump::profile((x[0] * x[0] + x[1] * x[1]).sqrt() / 1.5),
                move |_, x| scale * 0.2 * x[0].cos() * crate::bump::profile(x[1].abs() / 1.5),
            )
        };
        let history = mk(1.0);
        let n0 = gamma_norm(&history, GammaNormSpec::new(0, PNorm::Two).unwrap(), 0.3).unwrap();
        let n1 = gamma_norm(&history, GammaNormSpec::new(1, PNorm::Two).unwrap(), 0.3).unwrap();
        assert!(n0 <= n1);

        let doubled = mk(2.0);
        let n1_doubled =
            gamma_norm(&doubled, GammaNormSpec::new(1, PNorm::Two).unwrap(), 0.3).unwrap();
        assert!((n1_doubled - 2.0 * n1).abs() <= 1e-10 * n1.max(1.0));
    }

    #[test]
    fn gamma_norm_rejects_order_above_cap() {
        assert!(matches!(
            GammaNormSpec::new(3, PNorm::Two),
            Err(DiagnosticsError::OrderCapExceeded { order: 3 })
        ));
    }

    #[test]
    fn modified_energy_zero_state_is_zero() {
        let spec = GridSpec::cubic(2, 1.0, 12).unwrap();
        let st = State::zeros(spec);
        let c = ec(1.0, 1.0, 2.0);
        assert_eq!(modified_energy(&st, &[], &c, 0).unwrap(), 0.0);
    }

    #[test]
    fn modified_energy_requires_alpha_le_gamma() {
        let spec = GridSpec::cubic(1, 1.0, 12).unwrap();
        let st = State::zeros(spec);
        assert!(modified_energy(&st, &[], &ec(2.0, 1.0, 1.0), 0).is_err());
    }

    /// With alpha = gamma the semidefinite form vanishes and the modified
    /// energy reduces to the squared L2 norm of (v, grad u).
    #[test]
    fn modified_energy_alpha_eq_gamma_reduction() {
        let spec = GridSpec::cubic(2, 2.0, 24).unwrap();
        let u = ScalarField::from_fn(spec, |x| (0.9 * x[0]).sin() * (0.6 * x[1]).cos());
        let v = ScalarField::from_fn(spec, |x| 0.4 * (x[0] + x[1]).cos());
        let st = State::new(0.0, u, v).unwrap();
        let got = modified_energy(&st, &[], &ec(1.3, 1.0, 1.3), 0).unwrap();

        let d1 = st.u.partial(1).unwrap();
        let d2 = st.u.partial(2).unwrap();
        let want = st.v.l2_norm().powi(2) + d1.l2_norm().powi(2) + d2.l2_norm().powi(2);
        assert!((got - want).abs() <= 1e-10 * want.max(1.0));
    }

    /// Independent assembly oracle: build the abar quadratic form cell by
    /// cell from `rescaled_matrix` and integrate directly.
    #[test]
    fn modified_energy_matches_pointwise_assembly() {
        let spec = GridSpec::cubic(2, 2.0, 24).unwrap();
        let c = ec(1.0, 1.4, 2.2);
        let u = ScalarField::from_fn(spec, |x| {
            0.7 * crate::bump::profile((x[0] * x[0] + x[1] * x[1]).sqrt() / 1.5)
        });
        let v = ScalarField::from_fn(spec, |x| 0.2 * (x[0] * 0.8).cos() * (x[1] * 0.5).sin());
        let st = State::new(0.0, u, v).unwrap();
        let got = modified_energy(&st, &[], &c, 0).unwrap();

        let d1 = st.u.partial(1).unwrap();
        let d2 = st.u.partial(2).unwrap();
        let vol = spec.cell_volume();
        let mut want = 0.0;
        for flat in 0..spec.len() {
            let (a, b) = (d1.values()[flat], d2.values()[flat]);
            let vv = st.v.values()[flat];
            want += (vv * vv + a * a + b * b) * vol;
            let abar = rescaled_matrix(&c, st.u.values()[flat]).unwrap();
            want += (abar.entry(0, 0) * a * a
                + 2.0 * abar.entry(0, 1) * a * b
                + abar.entry(1, 1) * b * b)
                * vol;
        }
        assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} vs {want}");
    }

    /// The semidefinite form is nonnegative, so the modified energy dominates
    /// the plain derivative norm.
    #[test]
    fn modified_energy_dominates_derivative_norm() {
        let spec = GridSpec::cubic(2, 2.0, 20).unwrap();
        let c = ec(1.0, 1.0, 3.0);
        let u = ScalarField::from_fn(spec, |x| 0.5 * (x[0] * 1.1).sin() * (x[1] * 0.7).sin());
        let v = ScalarField::from_fn(spec, |x| 0.3 * (x[0] - x[1]).cos());
        let st = State::new(0.0, u, v).unwrap();
        let me = modified_energy(&st, &[], &c, 0).unwrap();
        let d1 = st.u.partial(1).unwrap();
        let d2 = st.u.partial(2).unwrap();
        let base = st.v.l2_norm().powi(2) + d1.l2_norm().powi(2) + d2.l2_norm().powi(2);
        assert!(me >= base - 1e-12 * base);
        assert!(me >= 0.0);
    }

    /// Order-one modified energy against a direct re-assembly from
    /// single-generator applications.
    #[test]
    fn modified_energy_order_one_matches_direct_sum() {
        let spec = GridSpec::cubic(1, 2.0, 32).unwrap();
        let c = ec(1.0, 1.0, 2.0);
        let times = [0.4, 0.5, 0.6];
        let history = synthetic_history(
            spec,
            &times,
            |t, x| (1.0 + 0.3 * t) * crate::bump::profile(x[0] / 1.4),
            |_, x| 0.3 * crate::bump::profile(x[0] / 1.4),
        );
        let st = history[1].clone();
        let got = modified_energy(&st, &history, &c, 1).unwrap();

        let c0 = c.c0().unwrap();
        let vol = spec.cell_volume();
        let mut want = 0.0;
        for g in generators(1) {
            for base in [0usize, 1] {
                // mu = 0 (velocity) and mu = 1 (d1 u)
                let frames = if base == 0 {
                    Frames::base_velocity(&history).unwrap()
                } else {
                    Frames::base_partial_u(&history, 1).unwrap()
                };
                let f = frames.apply(g).unwrap();
                let f = f.at_time(0.5).unwrap();
                want += f.l2_norm().powi(2);
            }
            let gu = apply_vector_field(&history, g, 0.5).unwrap();
            let d1 = gu.partial(1).unwrap();
            for flat in 0..spec.len() {
                let cu = st.u.values()[flat].cos();
                want += c0 * cu * cu * d1.values()[flat] * d1.values()[flat] * vol;
            }
        }
        assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{got} vs {want}");
    }
}
