//! Pointwise algebra of the planar-director model: wave speeds, coefficient
//! matrices, forcing, energy densities, and the director reconstruction.
//!
//! Everything here is a pure function of its arguments; no grids, no state.
//! The angle `u` is an ordinary real (never wrapped mod 2π: all formulas are
//! 2π-periodic and wrapping would corrupt finite differences across the cut).

use thiserror::Error;

/// Tolerance for the unit-norm check on director inputs.
pub const DIRECTOR_UNIT_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("elastic constants must be positive: alpha={alpha}, beta={beta}, gamma={gamma}")]
    NonPositiveConstants { alpha: f64, beta: f64, gamma: f64 },
    #[error("rescaled matrix requires alpha <= gamma, got alpha={alpha}, gamma={gamma}")]
    RescalingRequiresAlphaLeGamma { alpha: f64, gamma: f64 },
    #[error("director must be unit length, |n|^2 deviates by {deviation:e}")]
    NonUnitDirector { deviation: f64 },
}

/// The Frank elastic constants (splay, twist, bend). All strictly positive.
///
/// Inertia is normalized to one and the viscosity to zero; neither is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticConstants {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl ElasticConstants {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0) {
            return Err(ModelError::NonPositiveConstants { alpha, beta, gamma });
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Lower bound `M0 = min(alpha, gamma)` for both planar wave speeds squared.
    pub fn speed_sq_lower(&self) -> f64 {
        self.alpha.min(self.gamma)
    }

    /// Upper bound `M1 = max(alpha, gamma)` for both planar wave speeds squared.
    pub fn speed_sq_upper(&self) -> f64 {
        self.alpha.max(self.gamma)
    }

    /// Maximal characteristic speed `sqrt(max(alpha, gamma, beta))` over all
    /// directions and angles. The spectrum of the coefficient matrix is
    /// `{alpha, gamma, beta}` independent of `u`, so this bound is exact.
    pub fn max_char_speed(&self) -> f64 {
        self.alpha.max(self.gamma).max(self.beta).sqrt()
    }

    /// The semidefinite-rescaling constant `c0 = (gamma - alpha) / alpha`.
    pub fn c0(&self) -> Result<f64, ModelError> {
        if self.alpha > self.gamma {
            return Err(ModelError::RescalingRequiresAlphaLeGamma {
                alpha: self.alpha,
                gamma: self.gamma,
            });
        }
        Ok((self.gamma - self.alpha) / self.alpha)
    }
}

/// A symmetric 3x3 coefficient matrix with the third axis decoupled
/// (entries (1,3) and (2,3) are identically zero for every matrix this
/// module produces).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientMatrix {
    entries: [[f64; 3]; 3],
}

impl CoefficientMatrix {
    fn from_block(a11: f64, a12: f64, a22: f64, a33: f64) -> Self {
        Self {
            entries: [[a11, a12, 0.0], [a12, a22, 0.0], [0.0, 0.0, a33]],
        }
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1] + self.entries[2][2]
    }

    /// Determinant of the top-left 2x2 block.
    pub fn block_det(&self) -> f64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }

    /// Eigenvalues, exploiting the decoupled third axis: the two closed-form
    /// roots of the 2x2 block plus the (3,3) entry. Returned sorted ascending.
    pub fn eigenvalues(&self) -> [f64; 3] {
        debug_assert_eq!(self.entries[0][2], 0.0);
        debug_assert_eq!(self.entries[1][2], 0.0);
        let a = self.entries[0][0];
        let b = self.entries[0][1];
        let c = self.entries[1][1];
        let mean = 0.5 * (a + c);
        let disc = (0.5 * (a - c)).hypot(b);
        let mut eigs = [mean - disc, mean + disc, self.entries[2][2]];
        eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        eigs
    }

    /// Largest absolute entry-wise difference to another matrix.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.entries[i][j] - other.entries[i][j]).abs());
            }
        }
        d
    }
}

/// Unit director vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Director {
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
}

impl Director {
    pub fn norm_sq(&self) -> f64 {
        self.n1 * self.n1 + self.n2 * self.n2 + self.n3 * self.n3
    }
}

/// Pointwise energy density split into its kinetic and elastic parts.
/// Every component is nonnegative for positive constants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyDensity {
    pub kinetic: f64,
    pub splay_like: f64,
    pub twist_axis: f64,
    pub bend_like: f64,
}

impl EnergyDensity {
    pub fn total(&self) -> f64 {
        self.kinetic + self.splay_like + self.twist_axis + self.bend_like
    }

    /// Elastic part only (everything except kinetic).
    pub fn spatial(&self) -> f64 {
        self.splay_like + self.twist_axis + self.bend_like
    }
}

/// Planar wave speeds squared `(c1^2, c2^2)`:
/// `c1^2 = alpha sin^2 u + gamma cos^2 u`, `c2^2 = alpha cos^2 u + gamma sin^2 u`.
pub fn wave_speeds(constants: &ElasticConstants, u: f64) -> (f64, f64) {
    let (s, c) = u.sin_cos();
    let s2 = s * s;
    let c2 = c * c;
    (
        constants.alpha * s2 + constants.gamma * c2,
        constants.alpha * c2 + constants.gamma * s2,
    )
}

/// The coefficient matrix `A(u)` in its published form: 2x2 block
/// `[[c1^2, q], [q, c2^2]]` with `q = (alpha-gamma) sin(2u) / 2` and
/// `beta` on the third diagonal entry (kept explicit rather than scaled to one).
///
/// Note the off-diagonal sign differs from [`variational_matrix`]; see that
/// function for the variant the dynamics actually uses. Both share the
/// spectrum `{alpha, gamma, beta}` for every `u`.
pub fn coefficient_matrix(constants: &ElasticConstants, u: f64) -> CoefficientMatrix {
    let (c1_sq, c2_sq) = wave_speeds(constants, u);
    let q = 0.5 * (constants.alpha - constants.gamma) * (2.0 * u).sin();
    CoefficientMatrix::from_block(c1_sq, q, c2_sq, constants.beta)
}

/// The coefficient matrix of the second-order operator as it appears in the
/// expanded wave equation and in the first variation of the energy: same as
/// [`coefficient_matrix`] but with off-diagonal `(gamma-alpha) sin(2u) / 2`.
///
/// This is the matrix the solver contracts with the second derivatives; using
/// the published sign instead would break both energy conservation and the
/// agreement between the PDE residual and the discrete first variation.
pub fn variational_matrix(constants: &ElasticConstants, u: f64) -> CoefficientMatrix {
    let (c1_sq, c2_sq) = wave_speeds(constants, u);
    let q = 0.5 * (constants.gamma - constants.alpha) * (2.0 * u).sin();
    CoefficientMatrix::from_block(c1_sq, q, c2_sq, constants.beta)
}

/// The rescaled positive-semidefinite matrix `Abar(u)` with 2x2 block
/// `[[c0 cos^2 u, c0 sin(2u)/2], [c0 sin(2u)/2, c0 sin^2 u]]` and zero third
/// row/column. Requires `alpha <= gamma` so that `c0 >= 0`.
///
/// Its eigenvalues are `{c0, 0, 0}` for every `u`.
pub fn rescaled_matrix(constants: &ElasticConstants, u: f64) -> Result<CoefficientMatrix, ModelError> {
    let c0 = constants.c0()?;
    let (s, c) = u.sin_cos();
    let q = c0 * s * c; // c0 sin(2u) / 2
    Ok(CoefficientMatrix::from_block(c0 * c * c, q, c0 * s * s, 0.0))
}

/// The rescaled matrix obtained by direct reduction of the published `A(u)`:
/// `A/alpha - diag(1, 1, beta/alpha)` on the stored entries.
///
/// Its off-diagonal is `-c0 sin(2u)/2`, the opposite of [`rescaled_matrix`];
/// the two routes share the spectrum `{c0, 0, 0}`. The discrepancy is
/// surfaced by [`crate::verify`] rather than silently resolved.
pub fn rescaled_from_reduction(
    constants: &ElasticConstants,
    u: f64,
) -> Result<CoefficientMatrix, ModelError> {
    constants.c0()?; // reject alpha > gamma like the direct route
    let a = coefficient_matrix(constants, u);
    let inv_alpha = 1.0 / constants.alpha;
    Ok(CoefficientMatrix::from_block(
        a.entry(0, 0) * inv_alpha - 1.0,
        a.entry(0, 1) * inv_alpha,
        a.entry(1, 1) * inv_alpha - 1.0,
        a.entry(2, 2) * inv_alpha - constants.beta * inv_alpha,
    ))
}

/// The quadratic forcing term
/// `F = (alpha-gamma) sin(2u) (d1u^2 - d2u^2) / 2 - (alpha-gamma) cos(2u) d1u d2u`.
///
/// Even under `(d1u, d2u) -> (-d1u, -d2u)`: every term is quadratic in the
/// gradient.
pub fn forcing(constants: &ElasticConstants, u: f64, d1u: f64, d2u: f64) -> f64 {
    let ag = constants.alpha - constants.gamma;
    let (s2u, c2u) = (2.0 * u).sin_cos();
    0.5 * ag * s2u * (d1u * d1u - d2u * d2u) - ag * c2u * d1u * d2u
}

/// Energy density of the planar ansatz at a point:
/// kinetic `ut^2/2`, splay `alpha (cos u d2u - sin u d1u)^2 / 2`,
/// twist `beta d3u^2 / 2`, bend `gamma (cos u d1u + sin u d2u)^2 / 2`.
pub fn planar_energy_density(
    constants: &ElasticConstants,
    u: f64,
    grad_u: [f64; 3],
    ut: f64,
) -> EnergyDensity {
    let (s, c) = u.sin_cos();
    let splay = c * grad_u[1] - s * grad_u[0];
    let bend = c * grad_u[0] + s * grad_u[1];
    EnergyDensity {
        kinetic: 0.5 * ut * ut,
        splay_like: 0.5 * constants.alpha * splay * splay,
        twist_axis: 0.5 * constants.beta * grad_u[2] * grad_u[2],
        bend_like: 0.5 * constants.gamma * bend * bend,
    }
}

/// The Oseen-Frank elastic density
/// `alpha (div n)^2 / 2 + beta (n . curl n)^2 / 2 + gamma |n x curl n|^2 / 2`.
///
/// `grad_n[i][j]` holds the derivative of component `n_j` along axis `i`.
/// Rejects a director whose squared norm deviates from one by more than
/// [`DIRECTOR_UNIT_TOL`].
pub fn oseen_frank_density(
    constants: &ElasticConstants,
    n: &Director,
    grad_n: &[[f64; 3]; 3],
) -> Result<f64, ModelError> {
    let deviation = (n.norm_sq() - 1.0).abs();
    if deviation > DIRECTOR_UNIT_TOL {
        return Err(ModelError::NonUnitDirector { deviation });
    }

    let div = grad_n[0][0] + grad_n[1][1] + grad_n[2][2];
    let curl = [
        grad_n[1][2] - grad_n[2][1],
        grad_n[2][0] - grad_n[0][2],
        grad_n[0][1] - grad_n[1][0],
    ];
    let n_dot_curl = n.n1 * curl[0] + n.n2 * curl[1] + n.n3 * curl[2];
    let n_cross_curl = [
        n.n2 * curl[2] - n.n3 * curl[1],
        n.n3 * curl[0] - n.n1 * curl[2],
        n.n1 * curl[1] - n.n2 * curl[0],
    ];
    let cross_sq = n_cross_curl[0] * n_cross_curl[0]
        + n_cross_curl[1] * n_cross_curl[1]
        + n_cross_curl[2] * n_cross_curl[2];

    Ok(0.5 * constants.alpha * div * div
        + 0.5 * constants.beta * n_dot_curl * n_dot_curl
        + 0.5 * constants.gamma * cross_sq)
}

/// The planar director `n = (cos u, sin u, 0)`. Unit norm by construction.
pub fn director_from_angle(u: f64) -> Director {
    let (s, c) = u.sin_cos();
    Director { n1: c, n2: s, n3: 0.0 }
}

/// Gradient matrix of the planar director field induced by the angle field:
/// `d_i n = (-sin u d_i u, cos u d_i u, 0)`.
pub fn planar_director_gradient(u: f64, grad_u: [f64; 3]) -> [[f64; 3]; 3] {
    let (s, c) = u.sin_cos();
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        g[i][0] = -s * grad_u[i];
        g[i][1] = c * grad_u[i];
    }
    g
}
