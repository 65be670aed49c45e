//! Chain of human-driven vehicles behind a prescribed lead speed profile.

use super::dde::{lag_steps, DelayRk4, DelaySystem, Past};
use super::inputs::{at_half, IntegratorSettings, PreparedInputs};
use super::params::{DelayPlacement, HumanParams, PolicyParams};
use super::policy::{range_policy, speed_policy};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::SpeedTrajectory;

struct Chain<'a, T> {
    human: HumanParams<T>,
    policy: PolicyParams<T>,
    lead: &'a [T],
    lag: usize,
    v_star: T,
    followers: usize,
}

// State layout: [h_1, v_1, h_2, v_2, ..., h_{L-1}, v_{L-1}].
impl<T: Scalar> DelaySystem<T> for Chain<'_, T> {
    fn dim(&self) -> usize {
        2 * self.followers
    }

    fn rhs(&self, _t: T, x: &[T], past: &Past<'_, T>, dx: &mut [T]) {
        let lead_now = at_half(self.lead, past.half_index(0), self.v_star);
        let lead_lagged = at_half(self.lead, past.half_index(self.lag), self.v_star);
        for i in 0..self.followers {
            let v_ahead = if i + 1 == self.followers { lead_now } else { x[2 * i + 3] };
            dx[2 * i] = v_ahead - x[2 * i + 1];

            let h_d = past.state(self.lag, 2 * i);
            let v_d = match self.human.placement {
                DelayPlacement::Full => past.state(self.lag, 2 * i + 1),
                DelayPlacement::Perception => x[2 * i + 1],
            };
            let ahead_d = if i + 1 == self.followers {
                lead_lagged
            } else {
                past.state(self.lag, 2 * i + 3)
            };
            dx[2 * i + 1] = self.human.alpha * (range_policy(&self.policy, h_d) - v_d)
                + self.human.beta * (speed_policy(&self.policy, ahead_d) - v_d);
        }
    }
}

/// Simulates vehicles L-1..1 behind the lead speed `lead` (vehicle L), starting from the
/// equilibrium at `v_star`. The output holds speeds of vehicles 1..L and headways of 1..L-1 on
/// the lead's time grid.
pub fn simulate_ovm_chain<T: Scalar>(
    lead: &SpeedTrajectory<T>,
    human: &HumanParams<T>,
    v_star: T,
    settings: IntegratorSettings<T>,
) -> Result<SpeedTrajectory<T>> {
    human.validate()?;
    let l = human.chain_length;
    let inputs = PreparedInputs::new(lead, &[l], settings, false)?;
    let policy = human.policy();
    let followers = l - 1;
    let h_star = policy.equilibrium_headway(v_star);
    let mut eq = Vec::with_capacity(2 * followers);
    for _ in 0..followers {
        eq.push(h_star);
        eq.push(v_star);
    }
    let lag = lag_steps(human.delay, settings.step);
    let sys = Chain {
        human: *human,
        policy,
        lead: inputs.get(l)?,
        lag,
        v_star,
        followers,
    };
    let mut rk = DelayRk4::new(settings.step, lead.t0, eq.clone(), eq, lag);

    let mut speeds = vec![Vec::with_capacity(inputs.samples); followers];
    let mut headways = vec![Vec::with_capacity(inputs.samples); followers];
    let record = |x: &[T], speeds: &mut Vec<Vec<T>>, headways: &mut Vec<Vec<T>>| {
        for i in 0..followers {
            headways[i].push(x[2 * i]);
            speeds[i].push(x[2 * i + 1]);
        }
    };
    record(rk.state(), &mut speeds, &mut headways);
    for n in 1..=inputs.steps {
        rk.step(&sys);
        let x = rk.state();
        if let Some(i) = (0..followers).find(|&i| !(x[2 * i] > T::zero())) {
            return Err(Error::Collision {
                vehicle: i + 1,
                time: rk.time().as_f64(),
                headway: x[2 * i].as_f64(),
            });
        }
        if n % inputs.ratio == 0 {
            record(x, &mut speeds, &mut headways);
        }
    }

    let mut out = SpeedTrajectory::new(lead.t0, lead.dt)?;
    for (i, (v, h)) in speeds.into_iter().zip(headways).enumerate() {
        out.insert_speed(i + 1, v)?;
        out.insert_headway(i + 1, h)?;
    }
    out.insert_speed(l, lead.require_speed(l)?.to_vec())?;
    Ok(out)
}
