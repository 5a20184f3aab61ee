//! Sampled verification of the model algebra: spectrum and determinant
//! invariance of the coefficient matrices, semidefiniteness of the rescaled
//! matrix, the planar reduction of the Oseen-Frank density, and the
//! off-diagonal sign discrepancy between the published matrix and the
//! variational one (reported, not gated).

use crate::model::{
    coefficient_matrix, director_from_angle, oseen_frank_density, planar_director_gradient,
    planar_energy_density, rescaled_from_reduction, rescaled_matrix, variational_matrix,
    wave_speeds, ElasticConstants,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deviations are normalized by `max(1, |expected|)` before comparison, so
/// one gate works across the sampled range of elastic constants.
pub const ALGEBRA_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct AlgebraReport {
    pub samples: usize,
    pub seed: u64,
    pub max_spectrum_dev: f64,
    pub max_block_det_dev: f64,
    pub max_speed_trace_dev: f64,
    pub max_rescaled_trace_dev: f64,
    pub min_rescaled_eigenvalue: f64,
    pub max_rescaled_rank_excess: f64,
    pub max_reduction_consistency_dev: f64,
    pub max_rescaling_sign_discrepancy: f64,
    pub max_offdiagonal_sign_gap: f64,
}

impl AlgebraReport {
    pub fn passes(&self) -> bool {
        self.max_spectrum_dev <= ALGEBRA_TOL
            && self.max_block_det_dev <= ALGEBRA_TOL
            && self.max_speed_trace_dev <= ALGEBRA_TOL
            && self.max_rescaled_trace_dev <= ALGEBRA_TOL
            && self.min_rescaled_eigenvalue >= -ALGEBRA_TOL
            && self.max_rescaled_rank_excess <= ALGEBRA_TOL
            && self.max_reduction_consistency_dev <= ALGEBRA_TOL
    }

    /// Machine-readable `key=value` lines.
    pub fn summary(&self) -> String {
        format!(
            "samples={}\nseed={}\nmax_spectrum_dev={:e}\nmax_block_det_dev={:e}\n\
max_speed_trace_dev={:e}\nmax_rescaled_trace_dev={:e}\nmin_rescaled_eigenvalue={:e}\n\
max_rescaled_rank_excess={:e}\nmax_reduction_consistency_dev={:e}\n\
max_rescaling_sign_discrepancy={:e}\nmax_offdiagonal_sign_gap={:e}\nresult={}\n",
            self.samples,
            self.seed,
            self.max_spectrum_dev,
            self.max_block_det_dev,
            self.max_speed_trace_dev,
            self.max_rescaled_trace_dev,
            self.min_rescaled_eigenvalue,
            self.max_rescaled_rank_excess,
            self.max_reduction_consistency_dev,
            self.max_rescaling_sign_discrepancy,
            self.max_offdiagonal_sign_gap,
            if self.passes() { "pass" } else { "fail" }
        )
    }
}

/// Run the sampled identity suite. Constants are drawn log-uniformly from
/// [0.1, 10] (the rescaled checks redraw with gamma >= alpha), angles
/// uniformly from [-10, 10].
pub fn run_algebra_suite(samples: usize, seed: u64) -> AlgebraReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AlgebraReport {
        samples,
        seed,
        max_spectrum_dev: 0.0,
        max_block_det_dev: 0.0,
        max_speed_trace_dev: 0.0,
        max_rescaled_trace_dev: 0.0,
        min_rescaled_eigenvalue: f64::INFINITY,
        max_rescaled_rank_excess: 0.0,
        max_reduction_consistency_dev: 0.0,
        max_rescaling_sign_discrepancy: 0.0,
        max_offdiagonal_sign_gap: 0.0,
    };
    let draw = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-1.0..1.0));

    for _ in 0..samples {
        let alpha = draw(&mut rng);
        let beta = draw(&mut rng);
        let gamma = draw(&mut rng);
        let constants = ElasticConstants::new(alpha, beta, gamma).expect("positive draws");
        let u = rng.gen_range(-10.0..10.0);

        // spectrum {alpha, gamma, beta} and block determinant alpha * gamma,
        // for both off-diagonal sign conventions
        let mut expected = [alpha, gamma, beta];
        expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let scale = expected[2].max(1.0);
        for m in [coefficient_matrix(&constants, u), variational_matrix(&constants, u)] {
            let eigs = m.eigenvalues();
            for k in 0..3 {
                report.max_spectrum_dev =
                    report.max_spectrum_dev.max((eigs[k] - expected[k]).abs() / scale);
            }
            let det_scale = (alpha * gamma).max(1.0);
            report.max_block_det_dev = report
                .max_block_det_dev
                .max((m.block_det() - alpha * gamma).abs() / det_scale);
        }

        let (c1_sq, c2_sq) = wave_speeds(&constants, u);
        report.max_speed_trace_dev = report
            .max_speed_trace_dev
            .max((c1_sq + c2_sq - (alpha + gamma)).abs() / (alpha + gamma).max(1.0));

        // the published A and the variational A differ only in the sign of
        // the off-diagonal entry; report the magnitude of that gap
        let gap = coefficient_matrix(&constants, u)
            .max_abs_diff(&variational_matrix(&constants, u));
        report.max_offdiagonal_sign_gap = report.max_offdiagonal_sign_gap.max(gap);

        // rescaled checks need alpha <= gamma
        let gamma_hi = alpha * 10f64.powf(rng.gen_range(0.0..1.0));
        let ordered = ElasticConstants::new(alpha, beta, gamma_hi).expect("positive");
        let c0 = ordered.c0().expect("alpha <= gamma");
        let c0_scale = c0.max(1.0);
        let abar = rescaled_matrix(&ordered, u).expect("alpha <= gamma");
        let eigs = abar.eigenvalues();
        report.min_rescaled_eigenvalue = report.min_rescaled_eigenvalue.min(eigs[0] / c0_scale);
        report.max_rescaled_rank_excess =
            report.max_rescaled_rank_excess.max(eigs[1].abs() / c0_scale);
        report.max_rescaled_trace_dev =
            report.max_rescaled_trace_dev.max((abar.trace() - c0).abs() / c0_scale);
        let reduced = rescaled_from_reduction(&ordered, u).expect("alpha <= gamma");
        report.max_rescaling_sign_discrepancy = report
            .max_rescaling_sign_discrepancy
            .max(abar.max_abs_diff(&reduced));

        // planar reduction of the Oseen-Frank density
        let grad_u = [
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ];
        let n = director_from_angle(u);
        let grad_n = planar_director_gradient(u, grad_u);
        let of = oseen_frank_density(&constants, &n, &grad_n).expect("unit director");
        let planar = planar_energy_density(&constants, u, grad_u, 0.0).spatial();
        report.max_reduction_consistency_dev = report
            .max_reduction_consistency_dev
            .max((of - planar).abs() / planar.max(1.0));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_and_is_seed_deterministic() {
        let a = run_algebra_suite(2000, 7);
        assert!(a.passes(), "{}", a.summary());
        let b = run_algebra_suite(2000, 7);
        assert_eq!(a.max_spectrum_dev.to_bits(), b.max_spectrum_dev.to_bits());
        assert_eq!(a.summary(), b.summary());
    }

    /// The sign discrepancy between the two rescaling routes is a real
    /// feature of the published matrices, not noise: it reaches order c0.
    #[test]
    fn sign_discrepancy_is_reported_not_hidden() {
        let report = run_algebra_suite(2000, 11);
        assert!(report.max_rescaling_sign_discrepancy > 0.1);
        assert!(report.max_offdiagonal_sign_gap > 0.1);
        // and it does not affect the pass verdict
        assert!(report.passes());
    }

    #[test]
    fn summary_is_machine_readable() {
        let report = run_algebra_suite(100, 3);
        let text = report.summary();
        for key in [
            "samples=",
            "seed=",
            "max_spectrum_dev=",
            "max_reduction_consistency_dev=",
            "result=pass",
        ] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
    }
}
