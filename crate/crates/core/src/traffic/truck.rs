//! The connected automated truck: nonlinear plant with saturation and its linearization.

use serde::{Deserialize, Serialize};

use super::dde::{lag_steps, DelayRk4, DelaySystem, Past};
use super::inputs::{at_half, IntegratorSettings, PreparedInputs};
use super::params::{ControllerParams, PlantParams, PolicyParams};
use super::policy::{positive_part, range_policy, resistance, saturate, speed_policy};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::SpeedTrajectory;

/// Per-run energy per unit mass (J/kg) over [t0, tf].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport<T> {
    /// nonlinear metric, present for nonlinear runs
    pub w: Option<T>,
    /// linear surrogate, present for linear runs
    pub wbar: Option<T>,
    pub t0: T,
    pub tf: T,
    /// false when the controller lies outside the plant-stability region
    pub plant_stable: bool,
}

/// Truck response on the data grid.
#[derive(Debug, Clone)]
pub struct TruckRun<T> {
    /// absolute speed (nonlinear) or perturbation (linear), sampled like the inputs
    pub speed: Vec<T>,
    pub headway: Vec<T>,
    /// dv/dt on the data grid
    pub acceleration: Vec<T>,
    pub report: EnergyReport<T>,
}

impl<T: Scalar> TruckRun<T> {
    /// Truck speed as vehicle 0 with its headway, on the given time base.
    pub fn to_trajectory(&self, t0: T, dt: T) -> Result<SpeedTrajectory<T>> {
        let mut out = SpeedTrajectory::new(t0, dt)?;
        out.insert_speed(0, self.speed.clone())?;
        out.insert_headway(0, self.headway.clone())?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruckInit<T> {
    /// m
    pub headway: T,
    /// m/s
    pub speed: T,
}

impl<T: Scalar> TruckInit<T> {
    pub fn equilibrium(policy: &PolicyParams<T>, v_star: T) -> Self {
        Self {
            headway: policy.equilibrium_headway(v_star),
            speed: v_star,
        }
    }
}

struct Link<'a, T> {
    gain: T,
    lag: usize,
    input: &'a [T],
}

fn links<'a, T: Scalar>(
    ctrl: &ControllerParams<T>,
    actuation_delay: T,
    inputs: &'a PreparedInputs<T>,
) -> Result<Vec<Link<'a, T>>> {
    ctrl.validate()?;
    let h = inputs.settings.step;
    ctrl.links
        .iter()
        .map(|(&i, link)| {
            Ok(Link {
                gain: link.gain,
                lag: lag_steps(actuation_delay + link.delay, h),
                input: inputs.get(i)?,
            })
        })
        .collect()
}

fn plant_stable<T: Scalar>(ctrl: &ControllerParams<T>, actuation_delay: T) -> bool {
    crate::freq::stability_region(
        ctrl.alpha.as_f64(),
        ctrl.policy.kappa.as_f64(),
        actuation_delay.as_f64(),
    )
    .map(|r| r.contains(ctrl.gain_sum().as_f64()))
    .unwrap_or(false)
}

struct Nonlinear<'a, T> {
    plant: PlantParams<T>,
    policy: PolicyParams<T>,
    alpha: T,
    lag: usize,
    links: Vec<Link<'a, T>>,
    first: &'a [T],
    v_star: T,
}

impl<T: Scalar> DelaySystem<T> for Nonlinear<'_, T> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: T, x: &[T], past: &Past<'_, T>, dx: &mut [T]) {
        dx[0] = at_half(self.first, past.half_index(0), self.v_star) - x[1];
        let h_d = past.state(self.lag, 0);
        let v_d = past.state(self.lag, 1);
        let mut u = resistance(&self.plant, v_d) + self.alpha * (range_policy(&self.policy, h_d) - v_d);
        for link in &self.links {
            let vi = at_half(link.input, past.half_index(link.lag), self.v_star);
            u += link.gain * (speed_policy(&self.policy, vi) - v_d);
        }
        dx[1] = -resistance(&self.plant, x[1]) + saturate(&self.plant, u, x[1]);
    }
}

struct Linear<'a, T> {
    alpha: T,
    kappa: T,
    lag: usize,
    links: Vec<Link<'a, T>>,
    first: &'a [T],
}

impl<T: Scalar> DelaySystem<T> for Linear<'_, T> {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: T, x: &[T], past: &Past<'_, T>, dx: &mut [T]) {
        dx[0] = at_half(self.first, past.half_index(0), T::zero()) - x[1];
        let h_d = past.state(self.lag, 0);
        let v_d = past.state(self.lag, 1);
        let mut a = self.alpha * (self.kappa * h_d - v_d);
        for link in &self.links {
            a += link.gain * (at_half(link.input, past.half_index(link.lag), T::zero()) - v_d);
        }
        dx[1] = a;
    }
}

/// Runs the integrator over the input record, metering trapezoid energy with `power(x, dx)`.
fn integrate<T: Scalar, S: DelaySystem<T>>(
    sys: &S,
    inputs: &PreparedInputs<T>,
    x0: Vec<T>,
    prehistory: Vec<T>,
    max_lag: usize,
    power: impl Fn(&[T], &[T]) -> T,
    check_collision: bool,
) -> Result<(Vec<T>, Vec<T>, Vec<T>, T)> {
    let h = inputs.settings.step;
    let mut rk = DelayRk4::new(h, inputs.t0, x0, prehistory, max_lag);
    let mut speed = Vec::with_capacity(inputs.samples);
    let mut headway = Vec::with_capacity(inputs.samples);
    let mut accel = Vec::with_capacity(inputs.samples);
    let mut energy = T::zero();
    for n in 0..=inputs.steps {
        let x = [rk.state()[0], rk.state()[1]];
        if check_collision && !(x[0] > T::zero()) {
            return Err(Error::Collision {
                vehicle: 0,
                time: rk.time().as_f64(),
                headway: x[0].as_f64(),
            });
        }
        let dx = if n < inputs.steps {
            let d = rk.step(sys);
            [d[0], d[1]]
        } else {
            let d = rk.derivative(sys);
            [d[0], d[1]]
        };
        let p = power(&x, &dx);
        energy += if n == 0 || n == inputs.steps { T::lit(0.5) * p } else { p };
        if n % inputs.ratio == 0 {
            headway.push(x[0]);
            speed.push(x[1]);
            accel.push(dx[1]);
        }
    }
    Ok((speed, headway, accel, energy * h))
}

/// Nonlinear truck behind the prepared (absolute) speeds. Inputs and states before t0 are held
/// at the equilibrium for `v_star`; `w` integrates v g(dv/dt + f(v)).
pub fn simulate_truck_nonlinear<T: Scalar>(
    inputs: &PreparedInputs<T>,
    plant: &PlantParams<T>,
    ctrl: &ControllerParams<T>,
    v_star: T,
    init: Option<TruckInit<T>>,
) -> Result<TruckRun<T>> {
    plant.validate()?;
    let lag = lag_steps(plant.actuation_delay, inputs.settings.step);
    let links = links(ctrl, plant.actuation_delay, inputs)?;
    let max_lag = links.iter().map(|l| l.lag).max().unwrap_or(0).max(lag);
    let eq = TruckInit::equilibrium(&ctrl.policy, v_star);
    let init = init.unwrap_or(eq);
    let sys = Nonlinear {
        plant: *plant,
        policy: ctrl.policy,
        alpha: ctrl.alpha,
        lag,
        links,
        first: inputs.get(1)?,
        v_star,
    };
    let (speed, headway, acceleration, w) = integrate(
        &sys,
        inputs,
        vec![init.headway, init.speed],
        vec![eq.headway, eq.speed],
        max_lag,
        |x, dx| x[1] * positive_part(dx[1] + resistance(plant, x[1])),
        true,
    )?;
    Ok(TruckRun {
        speed,
        headway,
        acceleration,
        report: EnergyReport {
            w: Some(w),
            wbar: None,
            t0: inputs.t0,
            tf: inputs.t0 + inputs.horizon(),
            plant_stable: plant_stable(ctrl, plant.actuation_delay),
        },
    })
}

/// Linearized truck driven by centralized perturbations; `wbar` integrates (v* + v~) g(dv~/dt).
pub fn simulate_truck_linear<T: Scalar>(
    inputs: &PreparedInputs<T>,
    ctrl: &ControllerParams<T>,
    actuation_delay: T,
    v_star: T,
) -> Result<TruckRun<T>> {
    let lag = lag_steps(actuation_delay, inputs.settings.step);
    let links = links(ctrl, actuation_delay, inputs)?;
    let max_lag = links.iter().map(|l| l.lag).max().unwrap_or(0).max(lag);
    let stable = plant_stable(ctrl, actuation_delay);
    if !stable {
        log::warn!(
            "controller with gain sum {} is outside the plant-stability region",
            ctrl.gain_sum()
        );
    }
    let sys = Linear {
        alpha: ctrl.alpha,
        kappa: ctrl.policy.kappa,
        lag,
        links,
        first: inputs.get(1)?,
    };
    let (speed, headway, acceleration, wbar) = integrate(
        &sys,
        inputs,
        vec![T::zero(); 2],
        vec![T::zero(); 2],
        max_lag,
        |x, dx| (v_star + x[1]) * positive_part(dx[1]),
        false,
    )?;
    Ok(TruckRun {
        speed,
        headway,
        acceleration,
        report: EnergyReport {
            w: None,
            wbar: Some(wbar),
            t0: inputs.t0,
            tf: inputs.t0 + inputs.horizon(),
            plant_stable: stable,
        },
    })
}

/// Convenience wrapper preparing inputs from a trajectory.
pub fn simulate_nonlinear_from<T: Scalar>(
    preceding: &SpeedTrajectory<T>,
    plant: &PlantParams<T>,
    ctrl: &ControllerParams<T>,
    v_star: T,
    settings: IntegratorSettings<T>,
) -> Result<TruckRun<T>> {
    let vehicles: Vec<usize> = ctrl.indices().collect();
    let inputs = PreparedInputs::new(preceding, &vehicles, settings, false)?;
    simulate_truck_nonlinear(&inputs, plant, ctrl, v_star, None)
}

/// Convenience wrapper centralizing and preparing inputs from a trajectory.
pub fn simulate_linear_from<T: Scalar>(
    preceding: &SpeedTrajectory<T>,
    ctrl: &ControllerParams<T>,
    actuation_delay: T,
    v_star: T,
    settings: IntegratorSettings<T>,
) -> Result<TruckRun<T>> {
    let vehicles: Vec<usize> = ctrl.indices().collect();
    let inputs = PreparedInputs::new(preceding, &vehicles, settings, true)?;
    simulate_truck_linear(&inputs, ctrl, actuation_delay, v_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(vehicles: &[usize], v: f64, n: usize) -> SpeedTrajectory<f64> {
        let mut t = SpeedTrajectory::new(0.0, 0.1).unwrap();
        for &i in vehicles {
            t.insert_speed(i, vec![v; n]).unwrap();
        }
        t
    }

    #[test]
    fn equilibrium_costs_only_resistance() {
        let plant = PlantParams::heavy_truck();
        let ctrl = ControllerParams::ccc(0.4, 0.3, &[(8, 0.4, 2.0)], PolicyParams::truck()).unwrap();
        let traj = constant(&[1, 8], 25.0, 1001);
        let run = simulate_nonlinear_from(&traj, &plant, &ctrl, 25.0, IntegratorSettings::default()).unwrap();
        assert!(run.speed.iter().all(|&v| (v - 25.0).abs() < 1e-12));
        let expected = 100.0 * 25.0 * resistance(&plant, 25.0);
        let w = run.report.w.unwrap();
        assert!(((w - expected) / expected).abs() < 1e-12, "{w} vs {expected}");
        assert!(run.report.plant_stable);
    }

    #[test]
    fn zero_perturbation_stays_zero() {
        let ctrl = ControllerParams::acc(0.4, 0.5, PolicyParams::truck());
        let traj = constant(&[1], 25.0, 1001);
        let run = simulate_linear_from(&traj, &ctrl, 0.6, 25.0, IntegratorSettings::default()).unwrap();
        assert!(run.speed.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(run.report.wbar, Some(0.0));
    }

    #[test]
    fn acc_equals_ccc_with_silent_link_bitwise() {
        let pol = PolicyParams::truck();
        let acc = ControllerParams::acc(0.4, 0.5, pol);
        let ccc = ControllerParams::ccc(0.4, 0.5, &[(8, 0.0, 2.0)], pol).unwrap();
        let v1: Vec<f64> = (0..2001).map(|k| 25.0 + (0.3 * k as f64 * 0.1).sin()).collect();
        let v8: Vec<f64> = (0..2001).map(|k| 25.0 + (0.1 * k as f64 * 0.1).cos()).collect();
        let traj = SpeedTrajectory::new(0.0, 0.1)
            .unwrap()
            .with_speed(1, v1)
            .unwrap()
            .with_speed(8, v8)
            .unwrap();
        let inputs = PreparedInputs::new(&traj, &[1, 8], IntegratorSettings::default(), false).unwrap();
        let plant = PlantParams::heavy_truck();
        let a = simulate_truck_nonlinear(&inputs, &plant, &acc, 25.0, None).unwrap();
        let b = simulate_truck_nonlinear(&inputs, &plant, &ccc, 25.0, None).unwrap();
        assert_eq!(a.speed, b.speed);
        assert_eq!(a.report.w, b.report.w);
    }

    #[test]
    fn braking_interval_consumes_nothing() {
        // Steady deceleration of the leader: after the reaction transient the truck brakes
        // harder than resistance alone and draws no power.
        let plant = PlantParams::heavy_truck();
        let ctrl = ControllerParams::acc(0.4, 0.5, PolicyParams::truck());
        let v: Vec<f64> = (0..301).map(|k| 25.0 - 0.5 * (k as f64 * 0.1)).collect();
        let traj = SpeedTrajectory::new(0.0, 0.1).unwrap().with_speed(1, v).unwrap();
        let run = simulate_nonlinear_from(&traj, &plant, &ctrl, 25.0, IntegratorSettings::default()).unwrap();
        let cruise = 30.0 * 25.0 * resistance(&plant, 25.0);
        assert!(run.report.w.unwrap() < 0.1 * cruise, "{:?}", run.report.w);
        let tail = &run.acceleration[100..];
        let speeds = &run.speed[100..];
        assert!(tail.iter().zip(speeds).all(|(&a, &v)| a + resistance(&plant, v) <= 0.0));
    }

    #[test]
    fn unstable_controller_is_flagged() {
        let ctrl = ControllerParams::acc(0.4, 3.0, PolicyParams::truck());
        let traj = constant(&[1], 25.0, 101);
        let run = simulate_linear_from(&traj, &ctrl, 0.6, 25.0, IntegratorSettings::default()).unwrap();
        assert!(!run.report.plant_stable);
    }

    #[test]
    fn step_input_settles_at_dc_gain_one() {
        let ctrl = ControllerParams::acc(0.4, 0.5, PolicyParams::truck());
        let mut v = vec![0.0f64; 100];
        v.extend(vec![1.0; 3901]);
        let traj = SpeedTrajectory::new(0.0, 0.1).unwrap().with_speed(1, v).unwrap();
        let inputs = PreparedInputs::new(&traj, &[1], IntegratorSettings::default(), false).unwrap();
        let run = simulate_truck_linear(&inputs, &ctrl, 0.6, 25.0).unwrap();
        assert!((run.speed.last().unwrap() - 1.0).abs() < 1e-6);
    }
}
