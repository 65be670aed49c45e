//! Input speed series resampled once onto the integrator's half-step grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trajectory::SpeedTrajectory;

/// Integration settings shared by the chain and truck simulators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings<T> {
    /// s
    pub step: T,
}

impl<T: Scalar> Default for IntegratorSettings<T> {
    fn default() -> Self {
        Self { step: T::lit(0.01) }
    }
}

impl<T: Scalar> IntegratorSettings<T> {
    /// Integration steps per data sample; the data step must be a whole multiple of the step.
    pub fn ratio(&self, data_dt: T) -> Result<usize> {
        if !(self.step > T::zero()) {
            return Err(Error::Domain(format!("integration step must be positive, got {}", self.step)));
        }
        let r = (data_dt / self.step).round();
        if r < T::one() || ((data_dt - r * self.step) / data_dt).abs() > T::lit(1e-9) {
            return Err(Error::Domain(format!(
                "data step {data_dt} is not a whole multiple of the integration step {}",
                self.step
            )));
        }
        Ok(r.to_usize().unwrap_or(1))
    }
}

/// Speed inputs on the half-step grid of the integrator, `2 * steps + 1` points each.
#[derive(Debug, Clone)]
pub struct PreparedInputs<T> {
    pub data_dt: T,
    pub t0: T,
    pub settings: IntegratorSettings<T>,
    /// integration steps per data sample
    pub ratio: usize,
    /// integration steps covering the record
    pub steps: usize,
    /// data samples in the record
    pub samples: usize,
    series: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> PreparedInputs<T> {
    /// Resamples `vehicles` from `traj`, optionally removing each series' sample mean first.
    pub fn new(
        traj: &SpeedTrajectory<T>,
        vehicles: &[usize],
        settings: IntegratorSettings<T>,
        centralize: bool,
    ) -> Result<Self> {
        let samples = traj.len();
        if samples < 2 {
            return Err(Error::Input("need at least two samples to simulate".into()));
        }
        let ratio = settings.ratio(traj.dt)?;
        let steps = (samples - 1) * ratio;
        let mut series = BTreeMap::new();
        for &i in vehicles {
            let raw = traj.require_speed(i)?;
            let data = if centralize {
                crate::spectral::centralize(raw)
            } else {
                raw.to_vec()
            };
            series.insert(i, upsample_linear(&data, 2 * ratio));
        }
        Ok(Self {
            data_dt: traj.dt,
            t0: traj.t0,
            settings,
            ratio,
            steps,
            samples,
            series,
        })
    }

    pub fn get(&self, vehicle: usize) -> Result<&[T]> {
        self.series
            .get(&vehicle)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Input(format!("input for vehicle {vehicle} was not prepared")))
    }

    pub fn vehicles(&self) -> impl Iterator<Item = usize> + '_ {
        self.series.keys().copied()
    }

    /// Horizon t_f - t0 in seconds.
    pub fn horizon(&self) -> T {
        self.data_dt * T::lit((self.samples - 1) as f64)
    }
}

/// Linear interpolation with `factor` output points per input interval.
pub fn upsample_linear<T: Scalar>(data: &[T], factor: usize) -> Vec<T> {
    let n = data.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((n - 1) * factor + 1);
    let f = T::lit(factor as f64);
    for w in data.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        for c in 0..factor {
            out.push(a + d * (T::lit(c as f64) / f));
        }
    }
    out.push(data[n - 1]);
    out
}

/// Input value at a half-step index; `fallback` before the start.
#[inline]
pub fn at_half<T: Scalar>(series: &[T], index: Option<usize>, fallback: T) -> T {
    match index {
        Some(k) => series[k.min(series.len() - 1)],
        None => fallback,
    }
}

/// Trapezoid rule over equally spaced samples.
pub fn trapezoid<T: Scalar>(values: &[T], h: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner: T = values[1..n - 1].iter().copied().sum();
            h * (inner + T::lit(0.5) * (values[0] + values[n - 1]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampling_hits_nodes_and_midpoints() {
        let u = upsample_linear(&[0.0, 1.0, 3.0], 4);
        assert_eq!(u, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn ratio_requires_whole_multiple() {
        let s = IntegratorSettings { step: 0.01 };
        assert_eq!(s.ratio(0.1).unwrap(), 10);
        assert!(s.ratio(0.105).is_err());
        assert!(IntegratorSettings { step: 0.0 }.ratio(0.1).is_err());
    }

    #[test]
    fn trapezoid_exact_on_linear() {
        let v: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        assert!((trapezoid(&v, 0.1) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn prepared_inputs_centralize() {
        let traj = SpeedTrajectory::new(0.0, 0.1)
            .unwrap()
            .with_speed(1, vec![1.0f64, 2.0, 3.0])
            .unwrap();
        let p = PreparedInputs::new(&traj, &[1], IntegratorSettings::default(), true).unwrap();
        let s = p.get(1).unwrap();
        assert_eq!(s.len(), 41);
        assert!((s[0] + 1.0).abs() < 1e-15 && s[20].abs() < 1e-15 && (s[40] - 1.0).abs() < 1e-15);
        assert_eq!(p.steps, 20);
        assert!((p.horizon() - 0.2).abs() < 1e-15);
        assert!(p.get(2).is_err());
    }
}
