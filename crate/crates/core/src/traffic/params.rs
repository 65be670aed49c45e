use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Physical constants and actuator limits of the truck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PlantParams<T> {
    /// kg
    pub mass: T,
    /// kg m^2
    pub rot_inertia: T,
    /// m
    pub wheel_radius: T,
    /// m/s^2
    pub gravity: T,
    pub rolling: T,
    /// kg/m
    pub air_drag: T,
    /// kg
    pub effective_mass: T,
    /// powertrain delay, s
    pub actuation_delay: T,
    /// m/s^2
    pub u_min: T,
    /// m/s^2
    pub u_max: T,
    /// W
    pub power_max: T,
}

impl<T: Scalar> PlantParams<T> {
    /// Class-8 truck used throughout the experiments. The powertrain delay is not published
    /// with the other constants; 0.6 s is the configured default.
    pub fn heavy_truck() -> Self {
        Self {
            mass: T::lit(29484.0),
            rot_inertia: T::lit(39.9),
            wheel_radius: T::lit(0.504),
            gravity: T::lit(9.81),
            rolling: T::lit(0.006),
            air_drag: T::lit(3.84),
            effective_mass: T::lit(29641.0),
            actuation_delay: T::lit(0.6),
            u_min: T::lit(-6.0),
            u_max: T::lit(2.0),
            power_max: T::lit(300_650.0),
        }
    }

    /// m + I / R^2
    pub fn derived_effective_mass(&self) -> T {
        self.mass + self.rot_inertia / (self.wheel_radius * self.wheel_radius)
    }

    pub fn with_derived_effective_mass(mut self) -> Self {
        self.effective_mass = self.derived_effective_mass();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_min < T::zero() && T::zero() < self.u_max) {
            return Err(Error::Domain(format!(
                "need u_min < 0 < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if !(self.power_max > T::zero()) || !(self.effective_mass > T::zero()) || !(self.mass > T::zero()) {
            return Err(Error::Domain("mass and power limit must be positive".into()));
        }
        if self.actuation_delay < T::zero() {
            return Err(Error::Domain("actuation delay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Range and speed policy constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PolicyParams<T> {
    /// m/s
    pub v_max: T,
    /// m
    pub h_st: T,
    /// m
    pub h_go: T,
    /// 1/s
    pub kappa: T,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn new(v_max: T, h_st: T, h_go: T) -> Result<Self> {
        let p = Self {
            v_max,
            h_st,
            h_go,
            kappa: v_max / (h_go - h_st),
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds the policy from its gradient; h_go = h_st + v_max / kappa.
    pub fn from_gradient(v_max: T, h_st: T, kappa: T) -> Result<Self> {
        let p = Self {
            v_max,
            h_st,
            h_go: h_st + v_max / kappa,
            kappa,
        };
        p.validate()?;
        Ok(p)
    }

    /// v_max = 35 m/s, h_st = 5 m, kappa = 0.6 1/s (h_go = 63.33 m).
    pub fn truck() -> Self {
        Self::from_gradient(T::lit(35.0), T::lit(5.0), T::lit(0.6)).expect("valid constants")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > T::zero()) || !(self.h_st < self.h_go) {
            return Err(Error::Domain(format!(
                "need v_max > 0 and h_st < h_go, got v_max = {}, h_st = {}, h_go = {}",
                self.v_max, self.h_st, self.h_go
            )));
        }
        let expected = self.v_max / (self.h_go - self.h_st);
        if ((self.kappa - expected) / expected).abs() > T::lit(1e-9) {
            return Err(Error::Domain(format!(
                "kappa = {} inconsistent with v_max / (h_go - h_st) = {expected}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Equilibrium headway h* with V(h*) = v*.
    pub fn equilibrium_headway(&self, v_star: T) -> T {
        v_star / self.kappa + self.h_st
    }
}

/// Optimal-velocity-model parameters of the human-driven vehicles ahead of the truck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct HumanParams<T> {
    /// 1/s
    pub alpha: T,
    /// 1/s
    pub beta: T,
    /// 1/s
    pub kappa: T,
    /// reaction delay, s
    pub delay: T,
    /// vehicles in the chain, counting the stochastic leader
    pub chain_length: usize,
    /// m
    pub h_st: T,
    /// m/s
    pub v_max: T,
    #[serde(default)]
    pub placement: DelayPlacement,
}

/// Which terms of the human driver law see the reaction delay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayPlacement {
    /// V(h(t - s)) - v(t - s) and W(v_ahead(t - s)) - v(t - s)
    #[default]
    Full,
    /// only the perceived headway and speed ahead are delayed; the own speed is current
    Perception,
}

impl<T: Scalar> HumanParams<T> {
    /// alpha_h = 0.2, beta_h = 0.8, kappa_h = 1, sigma_h = 1 s, L = 8.
    pub fn reference() -> Self {
        Self {
            alpha: T::lit(0.2),
            beta: T::lit(0.8),
            kappa: T::lit(1.0),
            delay: T::lit(1.0),
            chain_length: 8,
            h_st: T::lit(5.0),
            v_max: T::lit(35.0),
            placement: DelayPlacement::Full,
        }
    }

    pub fn with_placement(mut self, placement: DelayPlacement) -> Self {
        self.placement = placement;
        self
    }

    pub fn policy(&self) -> PolicyParams<T> {
        PolicyParams {
            v_max: self.v_max,
            h_st: self.h_st,
            h_go: self.h_st + self.v_max / self.kappa,
            kappa: self.kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.alpha, self.beta, self.kappa, self.delay, self.h_st, self.v_max]
            .iter()
            .all(|&x| x > T::zero());
        if !all_positive || self.chain_length < 2 {
            return Err(Error::Domain("human driver parameters must be positive with L >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Acc,
    Ccc,
}

/// Feedback gain and intentional information delay on one leader's speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderLink<T> {
    /// beta_i, 1/s
    pub gain: T,
    /// sigma_i, s
    pub delay: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ControllerParams<T> {
    /// headway gain, 1/s
    pub alpha: T,
    /// connected set with per-leader gains and delays; always holds vehicle 1
    pub links: BTreeMap<usize, LeaderLink<T>>,
    pub policy: PolicyParams<T>,
    pub mode: ControlMode,
}

impl<T: Scalar> ControllerParams<T> {
    pub fn acc(alpha: T, beta1: T, policy: PolicyParams<T>) -> Self {
        let mut links = BTreeMap::new();
        links.insert(
            1,
            LeaderLink {
                gain: beta1,
                delay: T::zero(),
            },
        );
        Self {
            alpha,
            links,
            policy,
            mode: ControlMode::Acc,
        }
    }

    /// Controller listening to vehicle 1 and to every (index, gain, delay) in `others`.
    pub fn ccc(alpha: T, beta1: T, others: &[(usize, T, T)], policy: PolicyParams<T>) -> Result<Self> {
        let mut c = Self::acc(alpha, beta1, policy);
        c.mode = ControlMode::Ccc;
        for &(i, gain, delay) in others {
            c.links.insert(i, LeaderLink { gain, delay });
        }
        c.validate()?;
        Ok(c)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.links.keys().copied()
    }

    pub fn gain(&self, i: usize) -> T {
        self.links.get(&i).map_or(T::zero(), |l| l.gain)
    }

    pub fn delay(&self, i: usize) -> T {
        self.links.get(&i).map_or(T::zero(), |l| l.delay)
    }

    pub fn gain_sum(&self) -> T {
        self.links.values().map(|l| l.gain).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .links
            .get(&1)
            .ok_or_else(|| Error::Domain("connected set must contain vehicle 1".into()))?;
        if first.delay != T::zero() {
            return Err(Error::Domain("the immediate predecessor cannot carry an information delay".into()));
        }
        if self.links.values().any(|l| l.delay < T::zero()) {
            return Err(Error::Domain("information delays must be non-negative".into()));
        }
        let acc_shape = self.links.len() == 1;
        match (self.mode, acc_shape) {
            (ControlMode::Acc, false) => Err(Error::Domain("ACC mode uses vehicle 1 only".into())),
            (ControlMode::Ccc, true) => Err(Error::Domain("CCC mode needs a connected vehicle beyond 1".into())),
            _ => Ok(()),
        }
    }
}

impl<T: Scalar> Default for PlantParams<T> {
    fn default() -> Self {
        Self::heavy_truck()
    }
}

impl<T: Scalar> Default for PolicyParams<T> {
    fn default() -> Self {
        Self::truck()
    }
}

impl<T: Scalar> Default for HumanParams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_mass_consistent_with_inertia() {
        let p = PlantParams::<f64>::heavy_truck();
        let derived = p.derived_effective_mass();
        assert!((derived - p.effective_mass).abs() / p.effective_mass < 1e-5);
        let d = p.with_derived_effective_mass();
        assert!(((d.effective_mass - (29484.0 + 39.9 / (0.504 * 0.504))) / d.effective_mass).abs() < 1e-9);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn truck_policy_constants() {
        let p = PolicyParams::<f64>::truck();
        assert!((p.h_go - 63.33).abs() < 5e-3);
        assert!(p.validate().is_ok());
        let q = PolicyParams::<f64>::new(35.0, 5.0, 63.33).unwrap();
        assert!(((q.kappa - 0.6) / 0.6).abs() < 1e-4);
        assert!(PolicyParams::new(35.0, 10.0, 5.0).is_err());
        let bad = PolicyParams {
            kappa: 0.7,
            ..PolicyParams::<f64>::truck()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equilibrium_headways() {
        assert!((PolicyParams::<f64>::truck().equilibrium_headway(25.0) - 46.6667).abs() < 1e-3);
        assert_eq!(HumanParams::<f64>::reference().policy().equilibrium_headway(25.0), 30.0);
    }

    #[test]
    fn controller_set_rules() {
        let pol = PolicyParams::<f64>::truck();
        let acc = ControllerParams::acc(0.4, 0.5, pol);
        assert!(acc.validate().is_ok());
        let ccc = ControllerParams::ccc(0.4, 0.3, &[(8, 0.4, 2.0)], pol).unwrap();
        assert_eq!(ccc.indices().collect::<Vec<_>>(), vec![1, 8]);
        assert!((ccc.gain_sum() - 0.7).abs() < 1e-15);
        assert!(ControllerParams::ccc(0.4, 0.3, &[(8, 0.4, -1.0)], pol).is_err());
        let mut delayed_first = acc.clone();
        delayed_first.links.get_mut(&1).unwrap().delay = 0.5;
        assert!(delayed_first.validate().is_err());
        let mut mislabeled = acc;
        mislabeled.mode = ControlMode::Ccc;
        assert!(mislabeled.validate().is_err());
    }
}
