//! Empirical probes of the decay and product inequalities: each returns the
//! ratio of the inequality's left side to its right side, so boundedness of
//! the ratio along a run is the observable. Degenerate denominators return
//! `None` instead of dividing by noise.

use super::vector_fields::{gamma_norm, pointwise_word_sum, GammaNormSpec, PNorm};
use super::DiagnosticsError;
use crate::grid::{chunked_zip_sum, ScalarField, State};

/// Denominators below this are treated as degenerate.
pub const PROBE_DENOM_FLOOR: f64 = 1e-14;

/// Decay-inequality probe:
/// `|u|_{Gamma,N,inf} / [(1+t)^{-2/p} (1+|t-|x*||)^{-1/p} |u|_{Gamma,N+[n/p]+1,p}]`
/// where `x*` is the argmax cell of the left side and `n` is the grid
/// dimension. Only `p` in {1, 2} is meaningful; the derived right-side order
/// must respect the desk cap of 2.
pub fn decay_probe(
    history: &[State],
    spec: GammaNormSpec,
    at_t: f64,
) -> Result<Option<f64>, DiagnosticsError> {
    let p_val = match spec.p {
        PNorm::One => 1usize,
        PNorm::Two => 2usize,
        PNorm::Inf => return Err(DiagnosticsError::UnsupportedProbeNorm),
    };
    let first = history
        .first()
        .ok_or(DiagnosticsError::InsufficientHistory { need: 1, have: 0 })?;
    let grid = *first.spec();
    let n = grid.dim();
    let right_order = spec.order_n + n / p_val + 1;
    let right_spec = GammaNormSpec::new(right_order, spec.p)?;

    let right = gamma_norm(history, right_spec, at_t)?;
    if right < PROBE_DENOM_FLOOR {
        return Ok(None);
    }

    let left_spec = GammaNormSpec::new(spec.order_n, PNorm::Inf)?;
    let left = gamma_norm(history, left_spec, at_t)?;

    // cone-distance weight at the argmax cell of the left side
    let argmax = pointwise_word_sum(history, spec.order_n, at_t)?.argmax_abs();
    let x = grid.position(argmax);
    let r = (0..n).map(|i| x[i] * x[i]).sum::<f64>().sqrt();
    let pf = p_val as f64;
    let weight = (1.0 + (at_t - r).abs()).powf(-1.0 / pf);
    let time_decay = (1.0 + at_t).powf(-2.0 / pf);

    Ok(Some(left / (time_decay * weight * right)))
}

/// Product-inequality probe: the empirical constant
/// `|h dw|_{L2} / (|grad h|_{L2} * sum_{|a|<=1} |Gamma^a w|_inf)`,
/// with `dw = (w_t, grad w)`. Finiteness of the ratio is the observable.
pub fn product_probe(
    h: &ScalarField,
    w_history: &[State],
    at_t: f64,
) -> Result<Option<f64>, DiagnosticsError> {
    let state = w_history
        .iter()
        .min_by(|a, b| {
            (a.t - at_t)
                .abs()
                .partial_cmp(&(b.t - at_t).abs())
                .unwrap()
        })
        .ok_or(DiagnosticsError::InsufficientHistory { need: 1, have: 0 })?;
    if h.spec() != state.spec() {
        return Err(DiagnosticsError::Grid(crate::grid::GridError::SpecMismatch));
    }
    let grid = *h.spec();
    let dim = grid.dim();
    let vol = grid.cell_volume();

    // |h dw|_{L2}^2 summed over the derivative components of w
    let mut num_sq =
        chunked_zip_sum(h.values(), state.v.values(), |hv, wv| hv * hv * wv * wv) * vol;
    let mut grad_h_sq = 0.0;
    for axis in 1..=dim {
        let dw = state.u.partial(axis)?;
        num_sq += chunked_zip_sum(h.values(), dw.values(), |hv, wv| hv * hv * wv * wv) * vol;
        let dh = h.partial(axis)?;
        grad_h_sq += dh.l2_norm().powi(2);
    }

    let words = gamma_norm(w_history, GammaNormSpec::new(1, PNorm::Inf)?, state.t)?;
    let denom = grad_h_sq.sqrt() * words;
    if denom < PROBE_DENOM_FLOOR {
        return Ok(None);
    }
    Ok(Some(num_sq.sqrt() / denom))
}
