//! Energy-optimal gains and information delays by minimizing the spectral objective.
//!
//! J = sum_k c_k w_k^2 sum_ij T_i(j w_k) conj(T_j(j w_k)) Q_ij(w_k) over the one-sided grid of an
//! estimate Q, with c_k = 1 at DC and at an exact Nyquist bin and 2 elsewhere. This equals the
//! discrete objective summed over all N bins, folded onto k = 0..=N/2.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{stability_region, StabilityRegion};
use crate::spectral::{EstimatorKind, SpectralEstimate};
use crate::traffic::{ControllerParams, PolicyParams};

/// How the discrete frequency sum is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// one-sided grid with interior bins doubled
    #[default]
    Folded,
    /// literal sum over k = 0..N-1 at w_k = 2 pi k / (N dt), super-Nyquist bins included
    TwoSided,
}

/// Search grid and simplex settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpec {
    /// s
    pub sigma_max: f64,
    /// s
    pub sigma_step: f64,
    /// 1/s
    pub beta_min: f64,
    /// 1/s
    pub beta_max: f64,
    /// grid points per gain
    pub beta_points: usize,
    /// best delay cells refined by the simplex
    pub refine_cells: usize,
    pub simplex_tol: f64,
    pub simplex_max_iter: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            sigma_max: 10.0,
            sigma_step: 0.25,
            beta_min: 0.0,
            beta_max: 2.0,
            beta_points: 9,
            refine_cells: 3,
            simplex_tol: 1e-6,
            simplex_max_iter: 500,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_step > 0.0) || self.sigma_max < 0.0 {
            return Err(Error::Domain("delay grid needs a positive step and non-negative maximum".into()));
        }
        if !(self.beta_max > self.beta_min) || self.beta_points < 2 {
            return Err(Error::Domain("gain box needs beta_max > beta_min and at least two points".into()));
        }
        Ok(())
    }

    pub fn sigma_grid(&self) -> Vec<f64> {
        let n = (self.sigma_max / self.sigma_step + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * self.sigma_step).collect()
    }

    pub fn beta_grid(&self) -> Vec<f64> {
        let n = self.beta_points - 1;
        (0..=n)
            .map(|k| self.beta_min + (self.beta_max - self.beta_min) * k as f64 / n as f64)
            .collect()
    }
}

/// Whether the information delays are searched or pinned to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    Free,
    Zero,
}

/// Controller family compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// vehicle 1 only
    Acc,
    /// vehicles 1 and L, no information delay
    Ccc,
    /// vehicles 1 and L with a tuned information delay on L
    CccDelay,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Acc, Mode::Ccc, Mode::CccDelay];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Acc => "acc",
            Mode::Ccc => "ccc",
            Mode::CccDelay => "ccc-delay",
        }
    }

    pub fn leaders(self, leader: usize) -> Vec<usize> {
        match self {
            Mode::Acc => Vec::new(),
            _ => vec![leader],
        }
    }

    pub fn delays(self) -> DelayMode {
        match self {
            Mode::CccDelay => DelayMode::Free,
            _ => DelayMode::Zero,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Input(format!("unknown mode `{s}`, expected acc, ccc or ccc-delay")))
    }
}

#[derive(Debug, Clone)]
pub struct TuneProblem {
    pub alpha: f64,
    pub policy: PolicyParams<f64>,
    /// actuation delay, s
    pub actuation_delay: f64,
    /// connected set, vehicle 1 first
    pub indices: Vec<usize>,
    pub spectra: SpectralEstimate<f64>,
    pub region: StabilityRegion,
    pub search: SearchSpec,
    pub convention: Convention,
    pub delays: DelayMode,
}

impl TuneProblem {
    pub fn new(
        alpha: f64,
        policy: PolicyParams<f64>,
        actuation_delay: f64,
        leaders: &[usize],
        spectra: SpectralEstimate<f64>,
        search: SearchSpec,
    ) -> Result<Self> {
        search.validate()?;
        let region = stability_region(alpha, policy.kappa, actuation_delay)?;
        let mut indices = vec![1];
        indices.extend(leaders.iter().copied().filter(|&i| i != 1));
        spectra.check_hermitian(&indices, 1e-9)?;
        Ok(Self {
            alpha,
            policy,
            actuation_delay,
            indices,
            spectra,
            region,
            search,
            convention: Convention::Folded,
            delays: DelayMode::Free,
        })
    }

    /// Problem for one controller family with leader `leader`.
    pub fn for_mode(
        alpha: f64,
        policy: PolicyParams<f64>,
        actuation_delay: f64,
        mode: Mode,
        leader: usize,
        spectra: SpectralEstimate<f64>,
        search: SearchSpec,
    ) -> Result<Self> {
        Ok(Self::new(alpha, policy, actuation_delay, &mode.leaders(leader), spectra, search)?.with_delays(mode.delays()))
    }

    pub fn with_convention(mut self, c: Convention) -> Self {
        self.convention = c;
        self
    }

    pub fn with_delays(mut self, d: DelayMode) -> Self {
        self.delays = d;
        self
    }

    fn evaluator(&self) -> Evaluator {
        Evaluator::new(self)
    }

    /// J for gains and delays aligned with `indices` (the first delay is ignored).
    pub fn objective(&self, betas: &[f64], sigmas: &[f64]) -> f64 {
        let ev = self.evaluator();
        ev.eval(betas, &ev.phases(sigmas))
    }

    /// Relation between the folded objective and the quadrature acceleration variance.
    pub fn theta_squared_per_j(&self) -> f64 {
        self.spectra.delta_omega() / (4.0 * std::f64::consts::PI)
    }

    fn feasible(&self, betas: &[f64]) -> bool {
        let sum: f64 = betas.iter().sum();
        betas
            .iter()
            .all(|&b| b >= self.search.beta_min && b <= self.search.beta_max)
            && self.region.contains(sum)
    }

    /// Objective with infinite penalty outside the gain box or the stability region.
    pub fn penalized(&self, betas: &[f64], sigmas: &[f64]) -> f64 {
        if self.feasible(betas) {
            self.objective(betas, sigmas)
        } else {
            f64::INFINITY
        }
    }

    fn delay_cells(&self) -> Vec<Vec<f64>> {
        let extra = self.indices.len() - 1;
        let grid = match self.delays {
            DelayMode::Free => self.search.sigma_grid(),
            DelayMode::Zero => vec![0.0],
        };
        let mut cells = vec![vec![0.0]];
        for _ in 0..extra {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    grid.iter().map(move |&s| {
                        let mut c = c.clone();
                        c.push(s);
                        c
                    })
                })
                .collect();
        }
        cells
    }

    fn result(&self, betas: &[f64], sigmas: &[f64], j: f64) -> TuneResult {
        TuneResult {
            alpha: self.alpha,
            betas: self.indices.iter().copied().zip(betas.iter().copied()).collect(),
            sigmas: self.indices.iter().copied().zip(sigmas.iter().copied()).collect(),
            j,
            estimator: self.spectra.estimator,
            feasibility_margin: self.region.margin(betas.iter().sum()),
        }
    }
}

/// Per-bin data shared by every candidate.
struct Evaluator {
    /// c_k w_k^2
    weights: Vec<f64>,
    /// j w_k
    jw: Vec<Complex64>,
    /// -w_k^2 e^{j w_k sigma} + alpha kappa
    base: Vec<Complex64>,
    alpha_kappa: f64,
    alpha: f64,
    m: usize,
    /// Q_ij per bin, flattened [k][i][j]
    q: Vec<Complex64>,
    omegas: Vec<f64>,
}

impl Evaluator {
    fn new(p: &TuneProblem) -> Self {
        let m = p.indices.len();
        let spec = &p.spectra;
        let bins = spec.omegas.len();
        let last = bins - 1;
        let nyquist = spec.has_nyquist_bin();
        let entry = |a: usize, b: usize| spec.require(p.indices[a], p.indices[b]).expect("checked in TuneProblem::new");
        let mut omegas = Vec::new();
        let mut weights = Vec::new();
        let mut q = Vec::new();
        let mut push = |w: f64, c: f64, k: usize, conj: bool| {
            omegas.push(w);
            weights.push(c * w * w);
            for a in 0..m {
                for b in 0..m {
                    let v = entry(a, b)[k];
                    q.push(if conj { v.conj() } else { v });
                }
            }
        };
        match p.convention {
            Convention::Folded => {
                for k in 0..bins {
                    let c = if k == 0 || (k == last && nyquist) { 1.0 } else { 2.0 };
                    push(spec.omegas[k], c, k, false);
                }
            }
            Convention::TwoSided => {
                let n = spec.n_fft;
                let dw = spec.delta_omega();
                for k in 0..n {
                    let (src, conj) = if k <= n / 2 { (k, false) } else { (n - k, true) };
                    push(dw * k as f64, 1.0, src, conj);
                }
            }
        }
        let sigma = p.actuation_delay;
        let alpha_kappa = p.alpha * p.policy.kappa;
        let jw: Vec<Complex64> = omegas.iter().map(|&w| Complex64::new(0.0, w)).collect();
        let base = omegas
            .iter()
            .map(|&w| -w * w * Complex64::new(0.0, w * sigma).exp() + alpha_kappa)
            .collect();
        Self {
            weights,
            jw,
            base,
            alpha_kappa,
            alpha: p.alpha,
            m,
            q,
            omegas,
        }
    }

    /// e^{-j w_k sigma_i} for every non-first index.
    fn phases(&self, sigmas: &[f64]) -> Vec<Vec<Complex64>> {
        sigmas[1..]
            .iter()
            .map(|&s| self.omegas.iter().map(|&w| Complex64::new(0.0, -w * s).exp()).collect())
            .collect()
    }

    fn eval(&self, betas: &[f64], phases: &[Vec<Complex64>]) -> f64 {
        let b = self.alpha + betas.iter().sum::<f64>();
        let m = self.m;
        let mut t = [Complex64::new(0.0, 0.0); 8];
        let mut total = 0.0;
        for (k, &wgt) in self.weights.iter().enumerate() {
            if wgt == 0.0 {
                continue;
            }
            let jw = self.jw[k];
            let d = self.base[k] + jw * b;
            let inv = d.inv();
            t[0] = (jw * betas[0] + self.alpha_kappa) * inv;
            for a in 1..m {
                t[a] = jw * betas[a] * phases[a - 1][k] * inv;
            }
            let q = &self.q[k * m * m..(k + 1) * m * m];
            let mut acc = 0.0;
            for a in 0..m {
                acc += t[a].norm_sqr() * q[a * m + a].re;
                for c in a + 1..m {
                    acc += 2.0 * (t[a] * t[c].conj() * q[a * m + c]).re;
                }
            }
            total += wgt * acc;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub alpha: f64,
    pub betas: BTreeMap<usize, f64>,
    pub sigmas: BTreeMap<usize, f64>,
    #[serde(rename = "J")]
    pub j: f64,
    pub estimator: EstimatorKind,
    pub feasibility_margin: f64,
}

impl TuneResult {
    pub fn gain_sum(&self) -> f64 {
        self.betas.values().sum()
    }

    /// Controller realizing these parameters; ACC when only vehicle 1 is connected.
    pub fn controller(&self, policy: PolicyParams<f64>) -> Result<ControllerParams<f64>> {
        let beta1 = self.betas.get(&1).copied().unwrap_or(0.0);
        if self.betas.len() == 1 {
            return Ok(ControllerParams::acc(self.alpha, beta1, policy));
        }
        let others: Vec<(usize, f64, f64)> = self
            .betas
            .iter()
            .filter(|(&i, _)| i != 1)
            .map(|(&i, &b)| (i, b, self.sigmas.get(&i).copied().unwrap_or(0.0)))
            .collect();
        ControllerParams::ccc(self.alpha, beta1, &others, policy)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub sigmas: Vec<f64>,
    pub betas: Vec<f64>,
    pub j: f64,
}

/// Ordering used for ties: lower J, then smaller delays, then smaller gain sum.
fn better(a: &GridPoint, b: &GridPoint) -> bool {
    if a.j != b.j {
        return a.j < b.j;
    }
    let sa: f64 = a.sigmas.iter().sum();
    let sb: f64 = b.sigmas.iter().sum();
    if sa != sb {
        return sa < sb;
    }
    a.betas.iter().sum::<f64>() < b.betas.iter().sum::<f64>()
}

fn beta_combinations(grid: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|c| {
                grid.iter().map(move |&b| {
                    let mut c = c.clone();
                    c.push(b);
                    c
                })
            })
            .collect();
    }
    out
}

/// Best feasible gain grid point in every delay cell, in cell order.
pub fn grid_cells(problem: &TuneProblem) -> Vec<GridPoint> {
    let ev = problem.evaluator();
    let betas = beta_combinations(&problem.search.beta_grid(), problem.indices.len());
    let feasible: Vec<&Vec<f64>> = betas.iter().filter(|b| problem.feasible(b)).collect();
    problem
        .delay_cells()
        .into_par_iter()
        .map(|sigmas| {
            let phases = ev.phases(&sigmas);
            let mut best = GridPoint {
                sigmas: sigmas.clone(),
                betas: Vec::new(),
                j: f64::INFINITY,
            };
            for b in &feasible {
                let cand = GridPoint {
                    sigmas: sigmas.clone(),
                    betas: (*b).clone(),
                    j: ev.eval(b, &phases),
                };
                if best.betas.is_empty() || better(&cand, &best) {
                    best = cand;
                }
            }
            best
        })
        .collect()
}

/// Exhaustive search over the delay and gain grids.
pub fn grid_search(problem: &TuneProblem) -> Result<TuneResult> {
    let best = best_of(grid_cells(problem))?;
    Ok(problem.result(&best.betas, &best.sigmas, best.j))
}

fn best_of(cells: Vec<GridPoint>) -> Result<GridPoint> {
    cells
        .into_iter()
        .filter(|c| !c.betas.is_empty())
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .ok_or_else(|| Error::Domain("no feasible grid point in the gain box".into()))
}

/// Nelder-Mead minimization of `f` from `x0`; stops when the relative spread of the simplex
/// values drops below `tol` or after `max_iter` iterations.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        // step inward when the start sits on the upper edge of a box
        x[i] += step;
        let mut fx = f(&x);
        if !fx.is_finite() {
            x[i] = x0[i] - step;
            fx = f(&x);
        }
        simplex.push((x, fx));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    for _ in 0..max_iter {
        order(&mut simplex);
        let (lo, hi) = (simplex[0].1, simplex[n].1);
        if hi.is_finite() && (hi - lo).abs() <= tol * lo.abs().max(1e-300) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|p| p.0[d]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(&c, &w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = p.0.iter().zip(&best).map(|(&v, &b)| b + 0.5 * (v - b)).collect();
                    *p = (x.clone(), f(&x));
                }
            }
        }
    }
    order(&mut simplex);
    simplex.swap_remove(0)
}

/// Grid search followed by simplex refinement of the gains in the best delay cells.
pub fn tune(problem: &TuneProblem) -> Result<TuneResult> {
    let mut cells: Vec<GridPoint> = grid_cells(problem).into_iter().filter(|c| !c.betas.is_empty()).collect();
    if cells.is_empty() {
        return Err(Error::Domain("no feasible grid point in the gain box".into()));
    }
    cells.sort_by(|a, b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else if better(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    let ev = problem.evaluator();
    let refined: Vec<GridPoint> = cells
        .iter()
        .take(problem.search.refine_cells.max(1))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|cell| {
            let phases = ev.phases(&cell.sigmas);
            let f = |b: &[f64]| {
                if problem.feasible(b) {
                    ev.eval(b, &phases)
                } else {
                    f64::INFINITY
                }
            };
            let step = 0.05 * (problem.search.beta_max - problem.search.beta_min);
            let (betas, j) = nelder_mead(&f, &cell.betas, step, problem.search.simplex_tol, problem.search.simplex_max_iter);
            if j < cell.j {
                GridPoint {
                    sigmas: cell.sigmas.clone(),
                    betas,
                    j,
                }
            } else {
                cell.clone()
            }
        })
        .collect();
    let best = best_of(refined)?;
    Ok(problem.result(&best.betas, &best.sigmas, best.j))
}

/// Objective minimized over the gains at each fixed delay of the second index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub sigma: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub result: TuneResult,
}

/// For I = {1, L}: tunes the gains at every delay of `sigmas`.
pub fn delay_sweep(problem: &TuneProblem, sigmas: &[f64]) -> Result<Vec<SweepPoint>> {
    if problem.indices.len() != 2 {
        return Err(Error::Input("delay sweep needs exactly one leader beyond vehicle 1".into()));
    }
    sigmas
        .iter()
        .map(|&s| {
            let mut p = problem.clone();
            p.delays = DelayMode::Zero;
            p.search.refine_cells = 1;
            // shift the single delay cell to s
            let sub = FixedDelay { problem: &p, sigma: s };
            let r = sub.tune()?;
            Ok(SweepPoint { sigma: s, j: r.j, result: r })
        })
        .collect()
}

struct FixedDelay<'a> {
    problem: &'a TuneProblem,
    sigma: f64,
}

impl FixedDelay<'_> {
    fn tune(&self) -> Result<TuneResult> {
        let p = self.problem;
        let ev = p.evaluator();
        let sigmas = vec![0.0, self.sigma];
        let phases = ev.phases(&sigmas);
        let mut best: Option<GridPoint> = None;
        for b in beta_combinations(&p.search.beta_grid(), 2) {
            if !p.feasible(&b) {
                continue;
            }
            let cand = GridPoint {
                sigmas: sigmas.clone(),
                j: ev.eval(&b, &phases),
                betas: b,
            };
            if best.as_ref().is_none_or(|cur| better(&cand, cur)) {
                best = Some(cand);
            }
        }
        let cell = best.ok_or_else(|| Error::Domain("no feasible grid point in the gain box".into()))?;
        let f = |b: &[f64]| if p.feasible(b) { ev.eval(b, &phases) } else { f64::INFINITY };
        let step = 0.05 * (p.search.beta_max - p.search.beta_min);
        let (betas, j) = nelder_mead(&f, &cell.betas, step, p.search.simplex_tol, p.search.simplex_max_iter);
        let (betas, j) = if j < cell.j { (betas, j) } else { (cell.betas, cell.j) };
        Ok(p.result(&betas, &sigmas, j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::theta_squared;
    use crate::freq::LinkTransfer;
    use crate::gp::MaternKernel;
    use crate::spectral::ChainSpectrum;
    use crate::traffic::HumanParams;
    use num_complex::Complex;

    fn chain() -> ChainSpectrum {
        ChainSpectrum::new(MaternKernel::new(1.0, 5.0, 2.5).unwrap(), &HumanParams::reference()).unwrap()
    }

    fn problem(leaders: &[usize], n: usize) -> TuneProblem {
        let mut idx = vec![1];
        idx.extend_from_slice(leaders);
        let spectra = chain().estimate(&idx, n, 0.1).unwrap();
        TuneProblem::new(0.4, PolicyParams::truck(), 0.6, leaders, spectra, SearchSpec::default()).unwrap()
    }

    #[test]
    fn objective_is_proportional_to_theta_squared() {
        let p = problem(&[8], 1000);
        let (betas, sigmas) = ([0.3, 0.4], [0.0, 2.5]);
        let j = p.objective(&betas, &sigmas);
        let ctrl = ControllerParams::ccc(0.4, 0.3, &[(8, 0.4, 2.5)], PolicyParams::truck()).unwrap();
        let th = theta_squared(&LinkTransfer::new(&ctrl, 0.6).unwrap(), &p.spectra).unwrap();
        assert!(((j * p.theta_squared_per_j() - th) / th).abs() < 1e-9, "{j} {th}");
    }

    #[test]
    fn two_sided_sum_counts_a_bin_and_its_mirror() {
        // a single-bin spectrum at k0 contributes at w_k0 and, conjugated, at w_(N-k0)
        let (n, k0, dt) = (128usize, 5usize, 0.1);
        let mut vals = vec![Complex::new(0.0, 0.0); n / 2 + 1];
        vals[k0] = Complex::new(2.0, 0.0);
        let mut spec = SpectralEstimate::new(dt, n, EstimatorKind::Periodogram);
        spec.insert(1, 1, vals).unwrap();
        let p = TuneProblem::new(0.4, PolicyParams::truck(), 0.6, &[], spec, SearchSpec::default())
            .unwrap()
            .with_convention(Convention::TwoSided);
        let dw = p.spectra.delta_omega();
        let t1 = |w: f64| {
            let s = Complex::new(0.0, w);
            let d = -w * w * Complex::new(0.0, w * 0.6).exp() + s * 0.9 + 0.24;
            ((s * 0.5 + 0.24) / d).norm_sqr()
        };
        let (wa, wb) = (dw * k0 as f64, dw * (n - k0) as f64);
        let expect = 2.0 * (wa * wa * t1(wa) + wb * wb * t1(wb));
        let j = p.objective(&[0.5], &[0.0]);
        assert!(((j - expect) / expect).abs() < 1e-12, "{j} {expect}");
        let folded = p.clone().with_convention(Convention::Folded).objective(&[0.5], &[0.0]);
        assert!(((folded - 4.0 * wa * wa * t1(wa)) / folded).abs() < 1e-12);
    }

    #[test]
    fn zero_spectra_give_zero_objective() {
        let mut spec = SpectralEstimate::new(0.1, 128, EstimatorKind::Periodogram);
        spec.insert(1, 1, vec![Complex::new(0.0, 0.0); 65]).unwrap();
        let p = TuneProblem::new(0.4, PolicyParams::truck(), 0.6, &[], spec, SearchSpec::default()).unwrap();
        assert_eq!(p.objective(&[0.5], &[0.0]), 0.0);
    }

    #[test]
    fn relabeling_symmetry() {
        // T_1 and T_L only differ in numerator; swapping spectra between slots while keeping
        // the same numerators gives the same J.
        let c = chain();
        let base = c.estimate(&[1, 8], 512, 0.1).unwrap();
        let mut swapped = SpectralEstimate::new(0.1, 512, EstimatorKind::Oracle);
        swapped.insert(1, 1, base.require(1, 1).unwrap().to_vec()).unwrap();
        swapped.insert(8, 8, base.require(1, 1).unwrap().to_vec()).unwrap();
        swapped.insert(1, 8, vec![Complex::new(0.0, 0.0); 257]).unwrap();
        let p = TuneProblem::new(0.4, PolicyParams::truck(), 0.6, &[8], swapped, SearchSpec::default()).unwrap();
        let j = p.objective(&[0.3, 0.4], &[0.0, 1.0]);
        let ev = p.evaluator();
        let ph = ev.phases(&[0.0, 1.0]);
        // direct recomputation: |T_1|^2 S + |T_L|^2 S
        let mut direct = 0.0;
        for k in 0..ev.weights.len() {
            let w = ev.omegas[k];
            let s = Complex::new(0.0, w);
            let d = ev.base[k] + s * 1.1;
            let t1 = (s * 0.3 + 0.24) / d;
            let tl = s * 0.4 * ph[0][k] / d;
            direct += ev.weights[k] * (t1.norm_sqr() + tl.norm_sqr()) * ev.q[k * 4].re;
        }
        assert!(((j - direct) / j).abs() < 1e-12);
    }

    #[test]
    fn monotone_information_on_shared_grid() {
        let acc = grid_search(&problem(&[], 5000)).unwrap();
        let ccc = grid_search(&problem(&[8], 5000)).unwrap();
        assert!(ccc.j <= acc.j);
    }

    #[test]
    fn scaling_spectra_keeps_argmin() {
        let p = problem(&[8], 1000);
        let mut q = p.clone();
        q.spectra = p.spectra.scaled(3.0);
        let a = grid_search(&p).unwrap();
        let b = grid_search(&q).unwrap();
        assert_eq!(a.betas, b.betas);
        assert_eq!(a.sigmas, b.sigmas);
        assert!((b.j / a.j - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tuned_result_is_stable_and_not_worse_than_grid() {
        let p = problem(&[8], 5000);
        let g = grid_search(&p).unwrap();
        let t = tune(&p).unwrap();
        assert!(t.j <= g.j);
        assert!(t.feasibility_margin > 0.0);
        assert!(p.region.contains(t.gain_sum()));
        let ctrl = t.controller(PolicyParams::truck()).unwrap();
        let lt = LinkTransfer::new(&ctrl, 0.6).unwrap();
        let re = crate::freq::rightmost_root_oracle(&lt, &crate::freq::SearchBox::default()).unwrap();
        assert!(re < 0.0);
        let json = t.to_json().unwrap();
        for key in ["\"alpha\"", "\"betas\"", "\"sigmas\"", "\"J\"", "\"estimator\"", "\"feasibility_margin\""] {
            assert!(json.contains(key), "{json}");
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("cc".parse::<Mode>().is_err());
        assert_eq!(Mode::Acc.leaders(8), Vec::<usize>::new());
        assert_eq!(Mode::CccDelay.delays(), DelayMode::Free);
    }

    #[test]
    fn zero_delay_mode_pins_sigma() {
        let p = problem(&[8], 1000).with_delays(DelayMode::Zero);
        let t = tune(&p).unwrap();
        assert_eq!(t.sigmas[&8], 0.0);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + 2.0 * (x[1] - 1.2).powi(2) + 1.0;
        let (x, fx) = nelder_mead(&f, &[1.0, 0.0], 0.1, 1e-14, 2000);
        assert!((x[0] - 0.3).abs() < 1e-5 && (x[1] - 1.2).abs() < 1e-5 && (fx - 1.0).abs() < 1e-10);
    }

    #[test]
    fn delay_sweep_covers_grid() {
        let p = problem(&[8], 1000);
        let curve = delay_sweep(&p, &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve.iter().all(|c| c.j.is_finite() && c.j > 0.0));
        assert!(delay_sweep(&problem(&[], 1000), &[0.0]).is_err());
    }
}
