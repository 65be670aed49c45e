//! Periodogram and Welch estimates of (cross) power spectral densities.
//!
//! Estimates are one-sided: values live on k = 0..=n/2 of the natural DFT grid of the record
//! (or Welch segment) and equal twice the two-sided density at interior bins.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::MaternKernel;
use crate::scalar::Scalar;
use crate::trajectory::SpeedTrajectory;
use crate::traffic::{DelayPlacement, HumanParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Oracle,
    Periodogram,
    Welch,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Oracle, EstimatorKind::Periodogram, EstimatorKind::Welch];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Periodogram => "periodogram",
            EstimatorKind::Welch => "welch",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(Self::Oracle),
            "periodogram" => Ok(Self::Periodogram),
            "welch" => Ok(Self::Welch),
            other => Err(Error::Input(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Hamming,
}

impl WindowKind {
    /// Periodic-free (symmetric) window of length `n`.
    pub fn weights<T: Scalar>(self, n: usize) -> Vec<T> {
        let denom = T::lit((n.max(2) - 1) as f64);
        (0..n)
            .map(|k| {
                let phase = T::TAU() * T::lit(k as f64) / denom;
                match self {
                    WindowKind::Rectangular => T::one(),
                    WindowKind::Hann => T::lit(0.5) - T::lit(0.5) * phase.cos(),
                    WindowKind::Hamming => T::lit(0.54) - T::lit(0.46) * phase.cos(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    pub overlap_ratio: f64,
    pub window: WindowKind,
}

impl WelchConfig {
    /// floor(n / 8) rounded up to a power of two, 50% overlap, Hamming window.
    pub fn default_for(n: usize) -> Self {
        Self {
            segment_length: (n / 8).max(8).next_power_of_two().min(n.max(8)),
            overlap_ratio: 0.5,
            window: WindowKind::Hamming,
        }
    }

    /// Single rectangular segment spanning the record; reproduces the periodogram.
    pub fn degenerate(n: usize) -> Self {
        Self {
            segment_length: n,
            overlap_ratio: 0.0,
            window: WindowKind::Rectangular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 8 {
            return Err(Error::Input(format!("Welch segment length {} < 8", self.segment_length)));
        }
        if !(0.0..1.0).contains(&self.overlap_ratio) {
            return Err(Error::Input(format!("overlap ratio {} outside [0, 1)", self.overlap_ratio)));
        }
        Ok(())
    }

    /// Distance between segment starts.
    pub fn hop(&self) -> usize {
        let overlap = (self.overlap_ratio * self.segment_length as f64).round() as usize;
        (self.segment_length - overlap.min(self.segment_length - 1)).max(1)
    }

    pub fn segment_count(&self, n: usize) -> usize {
        if n < self.segment_length {
            0
        } else {
            (n - self.segment_length) / self.hop() + 1
        }
    }
}

/// Subtracts the sample mean.
pub fn centralize<T: Scalar>(series: &[T]) -> Vec<T> {
    if series.is_empty() {
        return Vec::new();
    }
    let mean = series.iter().copied().sum::<T>() / T::lit(series.len() as f64);
    series.iter().map(|&x| x - mean).collect()
}

/// Biased sample autocorrelation (1/N) sum x_k x_{k+m} for m = 0..=max_lag of a centralized copy.
pub fn sample_autocorrelation<T: Scalar>(series: &[T], max_lag: usize) -> Vec<T> {
    let x = centralize(series);
    let n = x.len();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|m| x[..n - m].iter().zip(&x[m..]).map(|(&a, &b)| a * b).sum::<T>() / T::lit(n as f64))
        .collect()
}

/// Angular frequencies of the one-sided grid of an `n`-point DFT.
pub fn one_sided_grid<T: Scalar>(n: usize, dt: T) -> Vec<T> {
    let dw = T::TAU() / (T::lit(n as f64) * dt);
    (0..=n / 2).map(|k| dw * T::lit(k as f64)).collect()
}

/// One-sided DFTs of every (windowed) segment of `x`.
fn segment_spectra<T: Scalar>(x: &[T], cfg: &WelchConfig, window: &[T], planner: &mut FftPlanner<T>) -> Vec<Vec<Complex<T>>> {
    let m = cfg.segment_length;
    let fft = planner.plan_fft_forward(m);
    (0..cfg.segment_count(x.len()))
        .map(|s| {
            let start = s * cfg.hop();
            let mut buf: Vec<Complex<T>> = x[start..start + m]
                .iter()
                .zip(window)
                .map(|(&v, &w)| Complex::new(v * w, T::zero()))
                .collect();
            fft.process(&mut buf);
            buf.truncate(m / 2 + 1);
            buf
        })
        .collect()
}

/// Averaged scaled products 2 dt / sum(w^2) X conj(Y) over segments.
fn cross_from_spectra<T: Scalar>(xs: &[Vec<Complex<T>>], ys: &[Vec<Complex<T>>], scale: T) -> Vec<Complex<T>> {
    let bins = xs[0].len();
    let count = T::lit(xs.len() as f64);
    (0..bins)
        .map(|k| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (x, y) in xs.iter().zip(ys) {
                acc += x[k] * y[k].conj() * scale;
            }
            acc / count
        })
        .collect()
}

fn check_pair<T>(x: &[T], y: &[T]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Input(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    Ok(())
}

fn welch_core<T: Scalar>(x: &[T], y: &[T], dt: T, cfg: &WelchConfig) -> Result<Vec<Complex<T>>> {
    check_pair(x, y)?;
    cfg.validate()?;
    if x.len() < cfg.segment_length {
        return Err(Error::Input(format!(
            "record of {} samples is shorter than the segment length {}",
            x.len(),
            cfg.segment_length
        )));
    }
    let window: Vec<T> = cfg.window.weights(cfg.segment_length);
    let power: T = window.iter().map(|&w| w * w).sum();
    let scale = T::lit(2.0) * dt / power;
    let mut planner = FftPlanner::new();
    let xs = segment_spectra(x, cfg, &window, &mut planner);
    let ys = segment_spectra(y, cfg, &window, &mut planner);
    Ok(cross_from_spectra(&xs, &ys, scale))
}

/// One-sided cross periodogram (2 dt / N) X_k conj(Y_k), k = 0..=N/2.
pub fn periodogram_cross<T: Scalar>(x: &[T], y: &[T], dt: T) -> Result<Vec<Complex<T>>> {
    check_pair(x, y)?;
    if x.len() < 8 {
        return Err(Error::Input(format!("record of {} samples is too short", x.len())));
    }
    welch_core(x, y, dt, &WelchConfig::degenerate(x.len()))
}

/// Welch average of windowed cross periodograms on the segment's one-sided grid.
pub fn welch_cross<T: Scalar>(x: &[T], y: &[T], dt: T, cfg: &WelchConfig) -> Result<Vec<Complex<T>>> {
    welch_core(x, y, dt, cfg)
}

/// Hermitian matrix of one-sided spectra over a common frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate<T> {
    pub dt: T,
    /// DFT length behind the grid (record or segment length)
    pub n_fft: usize,
    pub omegas: Vec<T>,
    pub estimator: EstimatorKind,
    values: BTreeMap<(usize, usize), Vec<Complex<T>>>,
}

impl<T: Scalar> SpectralEstimate<T> {
    pub fn new(dt: T, n_fft: usize, estimator: EstimatorKind) -> Self {
        Self {
            dt,
            n_fft,
            omegas: one_sided_grid(n_fft, dt),
            estimator,
            values: BTreeMap::new(),
        }
    }

    pub fn delta_omega(&self) -> T {
        T::TAU() / (T::lit(self.n_fft as f64) * self.dt)
    }

    /// True when the last bin sits exactly at the Nyquist frequency.
    pub fn has_nyquist_bin(&self) -> bool {
        self.n_fft % 2 == 0
    }

    /// Inserts the (i, j) entry together with its conjugate (j, i).
    pub fn insert(&mut self, i: usize, j: usize, series: Vec<Complex<T>>) -> Result<()> {
        if series.len() != self.omegas.len() {
            return Err(Error::Input(format!(
                "entry ({i}, {j}) has {} bins, grid has {}",
                series.len(),
                self.omegas.len()
            )));
        }
        if i != j {
            self.values.insert((j, i), series.iter().map(|c| c.conj()).collect());
        }
        self.values.insert((i, j), series);
        Ok(())
    }

    /// Inserts an entry without adding its conjugate partner.
    pub fn insert_raw(&mut self, i: usize, j: usize, series: Vec<Complex<T>>) {
        self.values.insert((i, j), series);
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&[Complex<T>]> {
        self.values.get(&(i, j)).map(Vec::as_slice)
    }

    pub fn require(&self, i: usize, j: usize) -> Result<&[Complex<T>]> {
        self.get(i, j)
            .ok_or_else(|| Error::Input(format!("spectral estimate has no ({i}, {j}) entry")))
    }

    /// Vehicle indices appearing on the diagonal.
    pub fn indices(&self) -> Vec<usize> {
        self.values.keys().filter(|(i, j)| i == j).map(|&(i, _)| i).collect()
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut out = self.clone();
        for v in out.values.values_mut() {
            for z in v.iter_mut() {
                *z = *z * c;
            }
        }
        out
    }

    /// Checks Hermitian symmetry and real nonnegative diagonals over `indices`, to a relative
    /// tolerance of the largest magnitude.
    pub fn check_hermitian(&self, indices: &[usize], tol: T) -> Result<()> {
        let mut scale = T::zero();
        for &i in indices {
            for &j in indices {
                for z in self.require(i, j)? {
                    scale = scale.max(z.norm());
                }
            }
        }
        let bound = tol * scale.max(T::min_positive_value());
        for &i in indices {
            for (k, z) in self.require(i, i)?.iter().enumerate() {
                if z.im.abs() > bound || z.re < -bound {
                    return Err(Error::Input(format!("diagonal ({i}, {i}) not real nonnegative at bin {k}")));
                }
            }
            for &j in indices {
                let a = self.require(i, j)?;
                let b = self.require(j, i)?;
                if let Some(k) = a.iter().zip(b).position(|(x, y)| (*x - y.conj()).norm() > bound) {
                    return Err(Error::Input(format!("entries ({i}, {j}) and ({j}, {i}) not conjugate at bin {k}")));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["omega", "i", "j", "re", "im", "estimator"])?;
        for (&(i, j), series) in &self.values {
            for (omega, z) in self.omegas.iter().zip(series) {
                w.write_record([
                    omega.to_string(),
                    i.to_string(),
                    j.to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                    self.estimator.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Which estimator to run on data, with the Welch configuration when relevant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataEstimator {
    Periodogram,
    Welch(WelchConfig),
}

/// Full Hermitian matrix over `indices` from the centralized speed series of `traj`.
pub fn estimate_matrix<T: Scalar>(traj: &SpeedTrajectory<T>, indices: &[usize], estimator: DataEstimator) -> Result<SpectralEstimate<T>> {
    let n = traj.len();
    let (cfg, kind) = match estimator {
        DataEstimator::Periodogram => (WelchConfig::degenerate(n), EstimatorKind::Periodogram),
        DataEstimator::Welch(cfg) => (cfg, EstimatorKind::Welch),
    };
    cfg.validate()?;
    if n < cfg.segment_length {
        return Err(Error::Input(format!("record of {n} samples is shorter than the segment length {}", cfg.segment_length)));
    }
    let window: Vec<T> = cfg.window.weights(cfg.segment_length);
    let power: T = window.iter().map(|&w| w * w).sum();
    let scale = T::lit(2.0) * traj.dt / power;
    let mut planner = FftPlanner::new();
    let mut spectra = BTreeMap::new();
    for &i in indices {
        let x = centralize(traj.require_speed(i)?);
        spectra.insert(i, segment_spectra(&x, &cfg, &window, &mut planner));
    }
    let mut est = SpectralEstimate::new(traj.dt, cfg.segment_length, kind);
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a..] {
            est.insert(i, j, cross_from_spectra(&spectra[&i], &spectra[&j], scale))?;
        }
    }
    Ok(est)
}

/// Analytic spectra of the human chain behind a Matérn lead, linearized about equilibrium.
/// Vehicle i sits L - i links behind the lead, so S_ij = H^{L-i} conj(H^{L-j}) S_lead.
#[derive(Debug, Clone)]
pub struct ChainSpectrum {
    pub kernel: MaternKernel<f64>,
    pub chain_length: usize,
    human: HumanParams<f64>,
}

impl ChainSpectrum {
    pub fn new(kernel: MaternKernel<f64>, human: &HumanParams<f64>) -> Result<Self> {
        human.validate()?;
        Ok(Self {
            kernel,
            chain_length: human.chain_length,
            human: *human,
        })
    }

    /// A lone Matérn-driven vehicle numbered 1, with no chain behind it.
    pub fn lead_only(kernel: MaternKernel<f64>) -> Self {
        Self {
            kernel,
            chain_length: 1,
            human: HumanParams::reference(),
        }
    }

    /// Linearized single-link transfer from the speed ahead to the follower's speed.
    pub fn link(&self, omega: f64) -> Result<Complex<f64>> {
        let h = &self.human;
        let s = Complex::new(0.0, omega);
        let ak = h.alpha * h.kappa;
        let lag = (-s * h.delay).exp();
        let (num, den) = match h.placement {
            DelayPlacement::Full => (s * h.beta + ak, s * s / lag + s * (h.alpha + h.beta) + ak),
            DelayPlacement::Perception => ((s * h.beta + ak) * lag, s * s + s * (h.alpha + h.beta) + ak * lag),
        };
        if den.norm() <= 1e-13 * (num.norm() + ak) {
            return Err(Error::Pole { re: 0.0, im: omega });
        }
        Ok(num / den)
    }

    /// Per-vehicle transfer from the lead speed, H(j omega)^{L-i}.
    pub fn from_lead(&self, vehicle: usize, omega: f64) -> Result<Complex<f64>> {
        if vehicle == 0 || vehicle > self.chain_length {
            return Err(Error::Input(format!("vehicle {vehicle} outside the chain 1..={}", self.chain_length)));
        }
        let h = self.link(omega)?;
        Ok(h.powu((self.chain_length - vehicle) as u32))
    }

    /// Two-sided cross spectral density S_ij(omega).
    pub fn density(&self, i: usize, j: usize, omega: f64) -> Result<Complex<f64>> {
        Ok(self.from_lead(i, omega)? * self.from_lead(j, omega)?.conj() * self.kernel.psd(omega))
    }

    /// One-sided values 2 S_ij on the DFT grid of an `n`-point record.
    pub fn estimate(&self, indices: &[usize], n: usize, dt: f64) -> Result<SpectralEstimate<f64>> {
        let mut est = SpectralEstimate::new(dt, n, EstimatorKind::Oracle);
        let omegas = est.omegas.clone();
        for (a, &i) in indices.iter().enumerate() {
            for &j in &indices[a..] {
                let series = omegas
                    .iter()
                    .map(|&w| self.density(i, j, w).map(|z| z * 2.0))
                    .collect::<Result<Vec<_>>>()?;
                est.insert(i, j, series)?;
            }
        }
        Ok(est)
    }
}
