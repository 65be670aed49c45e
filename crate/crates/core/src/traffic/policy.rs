//! Static nonlinearities of the longitudinal model.

use super::params::{PlantParams, PolicyParams};
use crate::scalar::Scalar;

/// Desired speed for headway `h`: max{0, min{kappa (h - h_st), v_max}}.
#[inline]
pub fn range_policy<T: Scalar>(policy: &PolicyParams<T>, h: T) -> T {
    (policy.kappa * (h - policy.h_st)).min(policy.v_max).max(T::zero())
}

/// Leader speed clipped at the speed limit.
#[inline]
pub fn speed_policy<T: Scalar>(policy: &PolicyParams<T>, v: T) -> T {
    v.min(policy.v_max)
}

/// Upper acceleration limit min{u_max, P_max / (m_eff v)}; u_max when v <= 0.
#[inline]
pub fn max_acceleration<T: Scalar>(plant: &PlantParams<T>, v: T) -> T {
    if v <= T::zero() {
        plant.u_max
    } else {
        plant.u_max.min(plant.power_max / (plant.effective_mass * v))
    }
}

#[inline]
pub fn saturate<T: Scalar>(plant: &PlantParams<T>, u: T, v: T) -> T {
    let upper = max_acceleration(plant, v);
    if u <= plant.u_min {
        plant.u_min
    } else if u >= upper {
        upper
    } else {
        u
    }
}

/// Rolling and air resistance per unit effective mass, f(v).
#[inline]
pub fn resistance<T: Scalar>(plant: &PlantParams<T>, v: T) -> T {
    (plant.mass * plant.gravity * plant.rolling + plant.air_drag * v * v) / plant.effective_mass
}

/// Energy-consumption nonlinearity g(x) = max{x, 0}.
#[inline]
pub fn positive_part<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}
