//! StVK-Hencky elasticity, its constraint forms, yield functions, and the
//! plastic return maps.
//!
//! All plastic projections operate in log-principal-stretch (Hencky) space on
//! the SVD of the trial deformation gradient and reconstruct
//! `F = U exp(eps) V^T`. In this space the supported flow rules have closed
//! forms, except Herschel-Bulkley whose scalar flow equation is solved by
//! bisection.

use thiserror::Error;

use crate::linalg::{log_clamped, svd3, Matrix3, Vector3};
use crate::real::Real;

/// Floor applied to singular values before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-6;

/// Guard on `2 * psi` below which the constraint gradient is taken as zero;
/// scaled by mu. `C = sqrt(2 psi)` is nonsmooth at the energy minimum and the
/// zero subgradient is the correct choice there.
pub const GRADIENT_GUARD_FACTOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ConstitutiveError {
    #[error("Young's modulus must be positive, got {0}")]
    InvalidYoungsModulus(f64),
    #[error("Poisson's ratio must lie in (-1, 0.5), got {0}")]
    InvalidPoissonRatio(f64),
    #[error("material has no plastic component, no yield surface defined")]
    NoYieldSurface,
}

/// Lame parameters derived from engineering constants.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ElasticParams<T> {
    pub youngs_modulus: T,
    pub poisson_ratio: T,
    pub mu: T,
    pub lambda: T,
}

impl<T: Real> ElasticParams<T> {
    pub fn new(youngs_modulus: T, poisson_ratio: T) -> Result<Self, ConstitutiveError> {
        if !(youngs_modulus > T::zero()) {
            return Err(ConstitutiveError::InvalidYoungsModulus(
                youngs_modulus.to_f64_lossy(),
            ));
        }
        let half = T::from_f64_lossy(0.5);
        if !(poisson_ratio > -T::one() && poisson_ratio < half) {
            return Err(ConstitutiveError::InvalidPoissonRatio(
                poisson_ratio.to_f64_lossy(),
            ));
        }
        let one = T::one();
        let two = T::from_f64_lossy(2.0);
        let mu = youngs_modulus / (two * (one + poisson_ratio));
        let lambda = youngs_modulus * poisson_ratio
            / ((one + poisson_ratio) * (one - two * poisson_ratio));
        Ok(Self {
            youngs_modulus,
            poisson_ratio,
            mu,
            lambda,
        })
    }

    /// Lame parameters scaled by a hardening factor (snow stiffening).
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            youngs_modulus: self.youngs_modulus * factor,
            poisson_ratio: self.poisson_ratio,
            mu: self.mu * factor,
            lambda: self.lambda * factor,
        }
    }

    /// Bulk modulus `K = lambda + 2 mu / 3`.
    pub fn bulk_modulus(&self) -> T {
        self.lambda + T::from_f64_lossy(2.0 / 3.0) * self.mu
    }
}

/// Plastic flow rule and its parameters.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum PlasticModel<T> {
    None,
    VonMises {
        yield_stress: T,
    },
    DruckerPrager {
        friction_angle_deg: T,
        cohesion: T,
    },
    Nacc {
        alpha0: T,
        beta: T,
        xi: T,
        m: T,
    },
    HerschelBulkley {
        yield_stress: T,
        power: T,
        viscosity: T,
    },
    SnowClamp {
        crit_compression: T,
        crit_stretch: T,
        hardening: T,
    },
}

/// Constitutive description of one material.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct MaterialModel<T> {
    pub density: T,
    pub elastic: ElasticParams<T>,
    pub plastic: PlasticModel<T>,
}

impl<T: Real> MaterialModel<T> {
    /// Initial value of the per-particle plastic state scalar.
    ///
    /// NACC tracks its hardening variable alpha; SnowClamp tracks the plastic
    /// volume ratio Jp. Other models carry no state.
    pub fn initial_plastic_state(&self) -> T {
        match self.plastic {
            PlasticModel::Nacc { alpha0, .. } => alpha0,
            PlasticModel::SnowClamp { .. } => T::one(),
            _ => T::zero(),
        }
    }

    /// Stiffness multiplier applied to the Lame parameters given the current
    /// plastic state (SnowClamp hardening; 1 otherwise).
    pub fn stiffness_factor(&self, plastic_state: T) -> T {
        match self.plastic {
            PlasticModel::SnowClamp { hardening, .. } => {
                // Cap the exponent so extreme compaction cannot overflow.
                let arg = (hardening * (T::one() - plastic_state))
                    .max(T::from_f64_lossy(-20.0))
                    .min(T::from_f64_lossy(20.0));
                arg.exp()
            }
            _ => T::one(),
        }
    }
}

/// Hencky strain of `F`: the SVD plus clamped log singular values.
pub fn hencky<T: Real>(f: &Matrix3<T>) -> (crate::linalg::SvdTriple<T>, Vector3<T>) {
    let svd = svd3(f);
    let eps = log_clamped(svd.sigma, T::from_f64_lossy(LOG_FLOOR));
    (svd, eps)
}

fn psi_from_eps<T: Real>(elastic: &ElasticParams<T>, eps: Vector3<T>) -> T {
    let tr = eps.sum();
    let half = T::from_f64_lossy(0.5);
    elastic.mu * eps.dot(eps) + half * elastic.lambda * tr * tr
}

/// StVK-Hencky energy density `mu tr(log(S)^2) + lambda/2 (tr log(S))^2`.
pub fn energy_density<T: Real>(elastic: &ElasticParams<T>, f: &Matrix3<T>) -> T {
    let (_, eps) = hencky(f);
    psi_from_eps(elastic, eps)
}

/// Single-constraint form: `C = sqrt(2 psi)`, compliance `alpha = 1 / V0`.
pub fn constraint_value<T: Real>(elastic: &ElasticParams<T>, f: &Matrix3<T>, v0: T) -> (T, T) {
    let psi = energy_density(elastic, f);
    let two = T::from_f64_lossy(2.0);
    ((two * psi).sqrt(), T::one() / v0)
}

/// Two-constraint variant splitting the mu and lambda terms.
pub fn constraint_pair<T: Real>(
    elastic: &ElasticParams<T>,
    f: &Matrix3<T>,
    v0: T,
) -> ((T, T), (T, T)) {
    let (_, eps) = hencky(f);
    let two = T::from_f64_lossy(2.0);
    let c_mu = eps.dot(eps).sqrt();
    let alpha_mu = T::one() / (two * elastic.mu * v0);
    let c_lambda = eps.sum();
    let alpha_lambda = T::one() / (elastic.lambda * v0);
    ((c_mu, alpha_mu), (c_lambda, alpha_lambda))
}

/// Derivative of the energy density with respect to `F`, via the diagonal-
/// space formula `U diag(dpsi/dsigma) V^T`.
pub fn energy_gradient<T: Real>(elastic: &ElasticParams<T>, f: &Matrix3<T>) -> Matrix3<T> {
    let (svd, eps) = hencky(f);
    let tr = eps.sum();
    let floor = T::from_f64_lossy(LOG_FLOOR);
    let two = T::from_f64_lossy(2.0);
    let mut dpsi = Vector3::zero();
    for i in 0..3 {
        // Below the log floor the energy is flat in that stretch direction.
        if svd.sigma[i] > floor {
            dpsi[i] = (two * elastic.mu * eps[i] + elastic.lambda * tr) / svd.sigma[i];
        }
    }
    svd.u * Matrix3::from_diag(dpsi) * svd.v.transpose()
}

/// `dC/dF` for the single-constraint form, with the subgradient guard at the
/// energy minimum.
pub fn dc_df<T: Real>(elastic: &ElasticParams<T>, f: &Matrix3<T>) -> Matrix3<T> {
    let psi = energy_density(elastic, f);
    let two = T::from_f64_lossy(2.0);
    let two_psi = two * psi;
    let guard = T::from_f64_lossy(GRADIENT_GUARD_FACTOR) * elastic.mu;
    if two_psi < guard {
        return Matrix3::zero();
    }
    energy_gradient(elastic, f).scale(T::one() / two_psi.sqrt())
}

/// `(C, alpha, dC/dF)` for the single-constraint form, sharing one SVD.
/// Identical values to [`constraint_value`] plus [`dc_df`]; this fused path
/// exists because the solver evaluates both per particle per iteration.
pub fn constraint_and_gradient<T: Real>(
    elastic: &ElasticParams<T>,
    f: &Matrix3<T>,
    v0: T,
) -> (T, T, Matrix3<T>) {
    let (svd, eps) = hencky(f);
    let psi = psi_from_eps(elastic, eps);
    let two = T::from_f64_lossy(2.0);
    let two_psi = two * psi;
    let c = two_psi.sqrt();
    let alpha = T::one() / v0;
    let guard = T::from_f64_lossy(GRADIENT_GUARD_FACTOR) * elastic.mu;
    if two_psi < guard {
        return (c, alpha, Matrix3::zero());
    }
    let tr = eps.sum();
    let floor = T::from_f64_lossy(LOG_FLOOR);
    let mut dpsi = Vector3::zero();
    for i in 0..3 {
        if svd.sigma[i] > floor {
            dpsi[i] = (two * elastic.mu * eps[i] + elastic.lambda * tr) / svd.sigma[i];
        }
    }
    let grad = (svd.u * Matrix3::from_diag(dpsi) * svd.v.transpose()).scale(T::one() / c);
    (c, alpha, grad)
}

fn deviatoric<T: Real>(eps: Vector3<T>) -> (Vector3<T>, T) {
    let tr = eps.sum();
    let third = T::from_f64_lossy(1.0 / 3.0);
    (eps - Vector3::splat(tr * third), tr)
}

fn reconstruct<T: Real>(svd: &crate::linalg::SvdTriple<T>, eps: Vector3<T>) -> Matrix3<T> {
    svd.u * Matrix3::from_diag(eps.map(|e| e.exp())) * svd.v.transpose()
}

/// Drucker-Prager friction coefficient from the friction angle (degrees).
fn dp_friction_coeff<T: Real>(friction_angle_deg: T) -> T {
    let phi = friction_angle_deg * T::PI() / T::from_f64_lossy(180.0);
    let sin_phi = phi.sin();
    (T::from_f64_lossy(2.0 / 3.0)).sqrt() * T::from_f64_lossy(2.0) * sin_phi
        / (T::from_f64_lossy(3.0) - sin_phi)
}

/// NACC consolidation pressure from the hardening state.
fn nacc_p0<T: Real>(bulk: T, xi: T, alpha: T) -> T {
    let arg = (xi * (-alpha).max(T::zero())).min(T::from_f64_lossy(30.0));
    (bulk * arg.sinh()).max(T::from_f64_lossy(1e-12))
}

/// Signed yield-surface value, dimensionless: `<= 0` inside or on the
/// surface, `> 0` outside.
pub fn yield_value<T: Real>(
    material: &MaterialModel<T>,
    f: &Matrix3<T>,
    plastic_state: T,
) -> Result<T, ConstitutiveError> {
    let elastic = material
        .elastic
        .scaled(material.stiffness_factor(plastic_state));
    let mu = elastic.mu;
    let two = T::from_f64_lossy(2.0);
    match material.plastic {
        PlasticModel::None => Err(ConstitutiveError::NoYieldSurface),
        PlasticModel::VonMises { yield_stress } => {
            let (_, eps) = hencky(f);
            let (dev, _) = deviatoric(eps);
            Ok((two * mu * dev.norm() - yield_stress) / yield_stress)
        }
        PlasticModel::HerschelBulkley { yield_stress, .. } => {
            let (_, eps) = hencky(f);
            let (dev, _) = deviatoric(eps);
            Ok((two * mu * dev.norm() - yield_stress) / yield_stress)
        }
        PlasticModel::DruckerPrager {
            friction_angle_deg,
            cohesion,
        } => {
            let (_, eps) = hencky(f);
            let (dev, tr) = deviatoric(eps);
            let alpha_f = dp_friction_coeff(friction_angle_deg);
            let tr_tau = (two * mu + T::from_f64_lossy(3.0) * elastic.lambda) * tr;
            Ok((two * mu * dev.norm() + alpha_f * tr_tau - cohesion) / mu)
        }
        PlasticModel::Nacc { beta, xi, m, .. } => {
            let (_, eps) = hencky(f);
            let (dev, tr) = deviatoric(eps);
            let bulk = elastic.bulk_modulus();
            let p = -bulk * tr;
            let q = (T::from_f64_lossy(1.5)).sqrt() * two * mu * dev.norm();
            let p0 = nacc_p0(bulk, xi, plastic_state);
            let one_two_beta = T::one() + two * beta;
            let y = one_two_beta * q * q + m * m * (p + beta * p0) * (p - p0);
            let scale = (m * m * (p0 * p0 + p * p) + one_two_beta * q * q)
                .max(T::from_f64_lossy(1e-30));
            Ok(y / scale)
        }
        PlasticModel::SnowClamp {
            crit_compression,
            crit_stretch,
            ..
        } => {
            let svd = svd3(f);
            let lo = T::one() - crit_compression;
            let hi = T::one() + crit_stretch;
            let mut worst = T::neg_infinity();
            for i in 0..3 {
                let s = svd.sigma[i];
                worst = worst.max(s - hi).max(lo - s);
            }
            Ok(worst)
        }
    }
}

/// Plastic return map `Z`: project a trial deformation gradient onto the
/// yield surface per the material's flow rule.
///
/// `plastic_state` is read-only here (NACC hardening alpha, snow Jp); it is
/// advanced separately by [`advance_plastic_state`] at step end.
pub fn return_map<T: Real>(
    material: &MaterialModel<T>,
    f_trial: &Matrix3<T>,
    dt: T,
    plastic_state: T,
) -> Matrix3<T> {
    let elastic = material
        .elastic
        .scaled(material.stiffness_factor(plastic_state));
    let mu = elastic.mu;
    let two = T::from_f64_lossy(2.0);
    match material.plastic {
        PlasticModel::None => *f_trial,
        PlasticModel::VonMises { yield_stress } => {
            let (svd, eps) = hencky(f_trial);
            let (dev, tr) = deviatoric(eps);
            let dev_norm = dev.norm();
            if two * mu * dev_norm <= yield_stress {
                return *f_trial;
            }
            let third = T::from_f64_lossy(1.0 / 3.0);
            let eps_proj =
                Vector3::splat(tr * third) + dev.scale(yield_stress / (two * mu * dev_norm));
            reconstruct(&svd, eps_proj)
        }
        PlasticModel::DruckerPrager {
            friction_angle_deg,
            cohesion,
        } => {
            let (svd, eps) = hencky(f_trial);
            let (dev, tr) = deviatoric(eps);
            let alpha_f = dp_friction_coeff(friction_angle_deg);
            let stiff = two * mu + T::from_f64_lossy(3.0) * elastic.lambda;
            let shift = alpha_f * stiff * tr - cohesion;
            let third = T::from_f64_lossy(1.0 / 3.0);
            if shift > T::zero() {
                // Cone apex: discard the deviator, pin the trace at the apex.
                let tr_apex = cohesion / (alpha_f * stiff).max(T::from_f64_lossy(1e-30));
                return reconstruct(&svd, Vector3::splat(tr_apex * third));
            }
            let dev_norm = dev.norm();
            let f_yield = two * mu * dev_norm + shift;
            if f_yield <= T::zero() {
                return *f_trial;
            }
            let delta_gamma = f_yield / (two * mu);
            let eps_proj =
                Vector3::splat(tr * third) + dev.scale(T::one() - delta_gamma / dev_norm);
            reconstruct(&svd, eps_proj)
        }
        PlasticModel::Nacc { beta, xi, m, .. } => {
            let (svd, eps) = hencky(f_trial);
            let (dev, tr) = deviatoric(eps);
            let bulk = elastic.bulk_modulus();
            let p = -bulk * tr;
            let p0 = nacc_p0(bulk, xi, plastic_state);
            let third = T::from_f64_lossy(1.0 / 3.0);
            if p > p0 {
                // Compaction cap vertex.
                return reconstruct(&svd, Vector3::splat(-p0 / bulk * third));
            }
            if p < -beta * p0 {
                // Tension tip.
                return reconstruct(&svd, Vector3::splat(beta * p0 / bulk * third));
            }
            let sqrt32 = (T::from_f64_lossy(1.5)).sqrt();
            let q = sqrt32 * two * mu * dev.norm();
            let one_two_beta = T::one() + two * beta;
            let y = one_two_beta * q * q + m * m * (p + beta * p0) * (p - p0);
            if y <= T::zero() {
                return *f_trial;
            }
            let q_target = (m * m * (p0 - p) * (p + beta * p0) / one_two_beta)
                .max(T::zero())
                .sqrt();
            let eps_proj = Vector3::splat(tr * third) + dev.scale(q_target / q);
            reconstruct(&svd, eps_proj)
        }
        PlasticModel::HerschelBulkley {
            yield_stress,
            power,
            viscosity,
        } => {
            let (svd, eps) = hencky(f_trial);
            let (dev, tr) = deviatoric(eps);
            let dev_norm = dev.norm();
            if two * mu * dev_norm <= yield_stress {
                return *f_trial;
            }
            // Implicit backward-Euler flow: solve
            //   e - e_trial + dt * ((2 mu e - sigma_y) / eta)^(1/h) = 0
            // for the projected deviator magnitude e by bisection.
            let mut lo = yield_stress / (two * mu);
            let mut hi = dev_norm;
            let g = |e: T| {
                let stress_excess = (two * mu * e - yield_stress).max(T::zero());
                e - dev_norm + dt * (stress_excess / viscosity).powf(T::one() / power)
            };
            for _ in 0..200 {
                if hi - lo <= T::from_f64_lossy(1e-10) * hi.max(T::one()) {
                    break;
                }
                let mid = T::from_f64_lossy(0.5) * (lo + hi);
                if g(mid) > T::zero() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let e = T::from_f64_lossy(0.5) * (lo + hi);
            let third = T::from_f64_lossy(1.0 / 3.0);
            let eps_proj = Vector3::splat(tr * third) + dev.scale(e / dev_norm);
            reconstruct(&svd, eps_proj)
        }
        PlasticModel::SnowClamp {
            crit_compression,
            crit_stretch,
            ..
        } => {
            let svd = svd3(f_trial);
            let lo = T::one() - crit_compression;
            let hi = T::one() + crit_stretch;
            if svd.sigma.x <= hi && svd.sigma.z >= lo {
                return *f_trial;
            }
            let clamped = svd.sigma.map(|s| s.max(lo).min(hi));
            svd.u * Matrix3::from_diag(clamped) * svd.v.transpose()
        }
    }
}

/// Advance the per-particle plastic state scalar across one projection.
///
/// NACC accumulates the plastic volumetric strain into its hardening alpha;
/// SnowClamp tracks the plastic volume ratio Jp. Called once per step at
/// finalize, not inside solver iterations.
pub fn advance_plastic_state<T: Real>(
    material: &MaterialModel<T>,
    f_trial: &Matrix3<T>,
    f_projected: &Matrix3<T>,
    plastic_state: T,
) -> T {
    match material.plastic {
        PlasticModel::Nacc { .. } => {
            let (_, eps_trial) = hencky(f_trial);
            let (_, eps_proj) = hencky(f_projected);
            plastic_state + (eps_trial.sum() - eps_proj.sum())
        }
        PlasticModel::SnowClamp { .. } => {
            let det_trial = f_trial.determinant();
            let det_proj = f_projected.determinant();
            if det_proj.abs() > T::from_f64_lossy(1e-30) {
                plastic_state * det_trial / det_proj
            } else {
                plastic_state
            }
        }
        _ => plastic_state,
    }
}
