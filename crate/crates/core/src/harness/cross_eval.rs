//! Observation/testing cross-evaluation: tune on one dataset, meter energy on another.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::spectral::{estimate_matrix, ChainSpectrum, DataEstimator, EstimatorKind, SpectralEstimate};
use crate::traffic::{simulate_truck_linear, simulate_truck_nonlinear, PreparedInputs};
use crate::trajectory::SpeedTrajectory;
use crate::tuner::{tune, Mode, TuneProblem, TuneResult};

/// Invalid-run fraction above which a report is flagged.
pub const INVALID_FRACTION_LIMIT: f64 = 0.01;

/// Estimation, tuning and simulation settings shared by every experiment.
pub struct Pipeline<'a> {
    pub cfg: &'a ExperimentConfig,
    pub chain: ChainSpectrum,
}

/// Test-dataset inputs prepared once and reused for every controller.
pub struct TestInputs {
    pub linear: PreparedInputs<f64>,
    pub nonlinear: PreparedInputs<f64>,
}

/// Energies of one controller on one test dataset, J/kg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub w: Option<f64>,
    pub wbar: Option<f64>,
}

impl Energies {
    pub const INVALID: Energies = Energies { w: None, wbar: None };

    pub fn valid(&self) -> bool {
        matches!((self.w, self.wbar), (Some(a), Some(b)) if a.is_finite() && b.is_finite())
    }
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            chain: ChainSpectrum::new(cfg.gp.kernel()?, &cfg.human)?,
        })
    }

    /// Spectra of vehicles `indices` from a record, or the analytic ones on its grid.
    pub fn estimate(&self, traj: &SpeedTrajectory<f64>, kind: EstimatorKind, indices: &[usize]) -> Result<SpectralEstimate<f64>> {
        match kind {
            EstimatorKind::Oracle => self.chain.estimate(indices, traj.len(), traj.dt),
            EstimatorKind::Periodogram => estimate_matrix(traj, indices, DataEstimator::Periodogram),
            EstimatorKind::Welch => estimate_matrix(traj, indices, DataEstimator::Welch(self.cfg.welch)),
        }
    }

    /// Analytic spectra on the grid of an `n`-sample record at the corpus step.
    pub fn oracle(&self, indices: &[usize], n: usize) -> Result<SpectralEstimate<f64>> {
        self.chain.estimate(indices, n, self.cfg.gp.dt)
    }

    pub fn tune(&self, spectra: SpectralEstimate<f64>, mode: Mode, leader: usize) -> Result<TuneResult> {
        let t = &self.cfg.truck;
        let problem = TuneProblem::for_mode(
            t.alpha,
            t.policy,
            t.plant.actuation_delay,
            mode,
            leader,
            spectra,
            self.cfg.search,
        )?
        .with_convention(self.cfg.convention);
        tune(&problem)
    }

    pub fn prepare(&self, traj: &SpeedTrajectory<f64>, leader: usize) -> Result<TestInputs> {
        let vehicles = [1, leader];
        Ok(TestInputs {
            linear: PreparedInputs::new(traj, &vehicles, self.cfg.integrator, true)?,
            nonlinear: PreparedInputs::new(traj, &vehicles, self.cfg.integrator, false)?,
        })
    }

    /// Linear and nonlinear energies of a tuned controller; failures yield `None` entries.
    pub fn evaluate(&self, inputs: &TestInputs, params: &TuneResult) -> Energies {
        let t = &self.cfg.truck;
        let v_star = self.cfg.gp.mean_speed;
        let ctrl = match params.controller(t.policy) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("cannot build controller: {e}");
                return Energies::INVALID;
            }
        };
        let wbar = match simulate_truck_linear(&inputs.linear, &ctrl, t.plant.actuation_delay, v_star) {
            Ok(run) if run.report.plant_stable => run.report.wbar,
            Ok(_) => None,
            Err(e) => {
                log::warn!("linear run failed: {e}");
                None
            }
        };
        let w = match simulate_truck_nonlinear(&inputs.nonlinear, &t.plant, &ctrl, v_star, None) {
            Ok(run) => run.report.w,
            Err(e) => {
                log::debug!("nonlinear run invalid: {e}");
                None
            }
        };
        Energies { w, wbar }
    }
}

/// Which observation and testing datasets to pair, and what to compare on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalPlan {
    pub estimators: Vec<EstimatorKind>,
    pub modes: Vec<Mode>,
    pub leader: usize,
    /// dataset indices used for observation
    pub observations: Vec<usize>,
    /// dataset indices used for testing
    pub tests: Vec<usize>,
}

impl CrossEvalPlan {
    /// Every ordered pair of distinct datasets in a corpus of `count`.
    pub fn full(count: usize, leader: usize) -> Self {
        Self {
            estimators: EstimatorKind::ALL.to_vec(),
            modes: Mode::ALL.to_vec(),
            leader,
            observations: (0..count).collect(),
            tests: (0..count).collect(),
        }
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.observations
            .iter()
            .flat_map(|&o| self.tests.iter().filter(move |&&t| t != o).map(move |&t| (o, t)))
            .collect()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs().len()
    }
}

/// Controller tuned on one observation dataset (none for the oracle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub obs: Option<usize>,
    pub estimator: EstimatorKind,
    pub mode: Mode,
    pub leader: usize,
    pub result: Option<TuneResult>,
}

#[derive(Debug, Clone, Serialize)]
struct TuneCsvRow {
    obs: Option<usize>,
    estimator: EstimatorKind,
    mode: Mode,
    #[serde(rename = "L")]
    leader: usize,
    alpha: Option<f64>,
    beta1: Option<f64>,
    #[serde(rename = "betaL")]
    beta_l: Option<f64>,
    #[serde(rename = "sigmaL")]
    sigma_l: Option<f64>,
    #[serde(rename = "J")]
    j: Option<f64>,
    feasibility_margin: Option<f64>,
}

impl TuneRecord {
    pub fn beta(&self, i: usize) -> Option<f64> {
        self.result.as_ref().map(|r| r.betas.get(&i).copied().unwrap_or(0.0))
    }

    pub fn sigma(&self, i: usize) -> Option<f64> {
        self.result.as_ref().map(|r| r.sigmas.get(&i).copied().unwrap_or(0.0))
    }

    fn csv_row(&self) -> TuneCsvRow {
        let r = self.result.as_ref();
        TuneCsvRow {
            obs: self.obs,
            estimator: self.estimator,
            mode: self.mode,
            leader: self.leader,
            alpha: r.map(|r| r.alpha),
            beta1: self.beta(1),
            beta_l: self.beta(self.leader),
            sigma_l: self.sigma(self.leader),
            j: r.map(|r| r.j),
            feasibility_margin: r.map(|r| r.feasibility_margin),
        }
    }
}

/// Energy of one controller on one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub run_id: usize,
    pub obs: usize,
    pub test: usize,
    pub estimator: EstimatorKind,
    pub mode: Mode,
    #[serde(rename = "L")]
    pub leader: usize,
    /// J/kg
    pub w: Option<f64>,
    /// J/kg
    pub wbar: Option<f64>,
    pub valid: bool,
}

/// Linear surrogate or nonlinear energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Linear,
    Nonlinear,
}

impl Metric {
    pub fn of(self, row: &EnergyRow) -> Option<f64> {
        if !row.valid {
            return None;
        }
        match self {
            Metric::Linear => row.wbar,
            Metric::Nonlinear => row.w,
        }
    }
}

/// Sample mean and standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                count: 0,
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { count: n, mean, std }
    }
}

/// Aggregates of one (estimator, mode) cell over valid rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub estimator: EstimatorKind,
    pub mode: Mode,
    pub valid: usize,
    pub invalid: usize,
    pub sum_w: f64,
    pub sum_wbar: f64,
    pub mean_w: f64,
    pub mean_wbar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: CrossEvalPlan,
    pub pair_count: usize,
    pub rows: Vec<EnergyRow>,
    pub tunes: Vec<TuneRecord>,
    pub summaries: Vec<Summary>,
    /// SHA-256 of the rows CSV
    pub checksum: String,
}

/// Aggregates recomputed from rows in row order.
pub fn summarize(rows: &[EnergyRow]) -> Vec<Summary> {
    let mut cells: BTreeMap<(EstimatorKind, Mode), Summary> = BTreeMap::new();
    for r in rows {
        let s = cells.entry((r.estimator, r.mode)).or_insert(Summary {
            estimator: r.estimator,
            mode: r.mode,
            valid: 0,
            invalid: 0,
            sum_w: 0.0,
            sum_wbar: 0.0,
            mean_w: f64::NAN,
            mean_wbar: f64::NAN,
        });
        match (r.valid, r.w, r.wbar) {
            (true, Some(w), Some(wbar)) => {
                s.valid += 1;
                s.sum_w += w;
                s.sum_wbar += wbar;
            }
            _ => s.invalid += 1,
        }
    }
    cells
        .into_values()
        .map(|mut s| {
            if s.valid > 0 {
                s.mean_w = s.sum_w / s.valid as f64;
                s.mean_wbar = s.sum_wbar / s.valid as f64;
            }
            s
        })
        .collect()
}

pub fn rows_csv(rows: &[EnergyRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Input(format!("csv buffer: {e}")))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn estimator_rank(e: EstimatorKind) -> usize {
    EstimatorKind::ALL.iter().position(|&k| k == e).unwrap_or(usize::MAX)
}

fn mode_rank(m: Mode) -> usize {
    Mode::ALL.iter().position(|&k| k == m).unwrap_or(usize::MAX)
}

fn lookup(datasets: &[Dataset]) -> BTreeMap<usize, &Dataset> {
    datasets.iter().map(|d| (d.index, d)).collect()
}

/// Tunes every (observation, estimator, mode) of the plan; the oracle once per mode.
pub fn tune_plan(pipeline: &Pipeline<'_>, datasets: &[Dataset], plan: &CrossEvalPlan) -> Result<Vec<TuneRecord>> {
    let by_index = lookup(datasets);
    let leader = plan.leader;
    let indices = [1, leader];
    let first = plan
        .observations
        .first()
        .and_then(|i| by_index.get(i))
        .ok_or_else(|| Error::Input("plan has no observation datasets in the corpus".into()))?;
    let mut jobs: Vec<(Option<usize>, EstimatorKind)> = Vec::new();
    for &e in &plan.estimators {
        if e == EstimatorKind::Oracle {
            jobs.push((None, e));
        } else {
            jobs.extend(plan.observations.iter().map(|&o| (Some(o), e)));
        }
    }
    let nested: Vec<Vec<TuneRecord>> = jobs
        .into_par_iter()
        .map(|(obs, estimator)| {
            let spectra = match obs {
                None => pipeline.oracle(&indices, first.trajectory.len())?,
                Some(o) => {
                    let d = by_index
                        .get(&o)
                        .ok_or_else(|| Error::Input(format!("dataset {o} not in the corpus")))?;
                    pipeline.estimate(&d.trajectory, estimator, &indices)?
                }
            };
            Ok(plan
                .modes
                .iter()
                .map(|&mode| {
                    let result = match pipeline.tune(spectra.clone(), mode, leader) {
                        Ok(r) => Some(r),
                        Err(e) => {
                            log::warn!("tuning {estimator}/{mode} on {obs:?} failed: {e}");
                            None
                        }
                    };
                    TuneRecord {
                        obs,
                        estimator,
                        mode,
                        leader,
                        result,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Runs the plan: tune on observations, simulate on tests, aggregate.
pub fn cross_evaluate(pipeline: &Pipeline<'_>, datasets: &[Dataset], plan: &CrossEvalPlan) -> Result<ExperimentReport> {
    let by_index = lookup(datasets);
    for i in plan.observations.iter().chain(&plan.tests) {
        if !by_index.contains_key(i) {
            return Err(Error::Input(format!("dataset {i} not in the corpus")));
        }
    }
    let tunes = tune_plan(pipeline, datasets, plan)?;
    let find = |obs: Option<usize>, e: EstimatorKind, m: Mode| {
        tunes
            .iter()
            .find(|t| t.obs == obs && t.estimator == e && t.mode == m)
            .and_then(|t| t.result.as_ref())
    };
    let per_test: Vec<Vec<EnergyRow>> = plan
        .tests
        .par_iter()
        .map(|&test| {
            let inputs = pipeline.prepare(&by_index[&test].trajectory, plan.leader)?;
            let mut rows = Vec::new();
            let mut emit = |obs: usize, estimator: EstimatorKind, mode: Mode, e: Energies| {
                rows.push(EnergyRow {
                    run_id: 0,
                    obs,
                    test,
                    estimator,
                    mode,
                    leader: plan.leader,
                    w: e.w,
                    wbar: e.wbar,
                    valid: e.valid(),
                });
            };
            for &estimator in &plan.estimators {
                for &mode in &plan.modes {
                    if estimator == EstimatorKind::Oracle {
                        // oracle parameters do not depend on the observation
                        let e = find(None, estimator, mode)
                            .map(|p| pipeline.evaluate(&inputs, p))
                            .unwrap_or(Energies::INVALID);
                        for &obs in plan.observations.iter().filter(|&&o| o != test) {
                            emit(obs, estimator, mode, e);
                        }
                    } else {
                        for &obs in plan.observations.iter().filter(|&&o| o != test) {
                            let e = find(Some(obs), estimator, mode)
                                .map(|p| pipeline.evaluate(&inputs, p))
                                .unwrap_or(Energies::INVALID);
                            emit(obs, estimator, mode, e);
                        }
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<EnergyRow> = per_test.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.obs, r.test, estimator_rank(r.estimator), mode_rank(r.mode)));
    for (k, r) in rows.iter_mut().enumerate() {
        r.run_id = k;
    }
    let summaries = summarize(&rows);
    let checksum = sha256_hex(&rows_csv(&rows)?);
    let report = ExperimentReport {
        plan: plan.clone(),
        pair_count: plan.pair_count(),
        rows,
        tunes,
        summaries,
        checksum,
    };
    let frac = report.invalid_fraction();
    if frac > INVALID_FRACTION_LIMIT {
        log::warn!(
            "invalid-run fraction {:.2}% exceeds {:.0}%; report flagged for investigation",
            100.0 * frac,
            100.0 * INVALID_FRACTION_LIMIT
        );
    }
    Ok(report)
}

/// Per-pair relative advantage statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    pub values: Vec<f64>,
    pub stats: Stats,
}

impl ExperimentReport {
    pub fn summary(&self, estimator: EstimatorKind, mode: Mode) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.estimator == estimator && s.mode == mode)
    }

    pub fn mean(&self, estimator: EstimatorKind, mode: Mode, metric: Metric) -> Option<f64> {
        self.summary(estimator, mode).map(|s| match metric {
            Metric::Linear => s.mean_wbar,
            Metric::Nonlinear => s.mean_w,
        })
    }

    /// Saving of `mode` against ACC from the means, (mean_ACC - mean_mode) / mean_ACC.
    pub fn saving_vs_acc(&self, estimator: EstimatorKind, mode: Mode, metric: Metric) -> Option<f64> {
        let base = self.mean(estimator, Mode::Acc, metric)?;
        Some((base - self.mean(estimator, mode, metric)?) / base)
    }

    pub fn invalid_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.valid).count()
    }

    pub fn invalid_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            0.0
        } else {
            self.invalid_count() as f64 / self.rows.len() as f64
        }
    }

    pub fn flagged(&self) -> bool {
        self.invalid_fraction() > INVALID_FRACTION_LIMIT
    }

    fn values(&self, estimator: EstimatorKind, mode: Mode, metric: Metric) -> BTreeMap<(usize, usize), f64> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator && r.mode == mode)
            .filter_map(|r| metric.of(r).map(|v| ((r.obs, r.test), v)))
            .collect()
    }

    /// Per pair (x - y) / y with x from `a` and the baseline y from `b`, over pairs valid in both.
    pub fn relative_difference(&self, a: (EstimatorKind, Mode), b: (EstimatorKind, Mode), metric: Metric) -> Advantage {
        let xs = self.values(a.0, a.1, metric);
        let ys = self.values(b.0, b.1, metric);
        let values: Vec<f64> = xs
            .iter()
            .filter_map(|(k, &x)| ys.get(k).map(|&y| (x - y) / y))
            .collect();
        Advantage {
            stats: Stats::of(&values),
            values,
        }
    }

    /// Per pair saving of the tuned information delay, (w_CCC - w_CCC-Delay) / w_CCC.
    pub fn delay_benefit(&self, estimator: EstimatorKind, metric: Metric) -> Advantage {
        let d = self.relative_difference((estimator, Mode::CccDelay), (estimator, Mode::Ccc), metric);
        let values: Vec<f64> = d.values.iter().map(|v| -v).collect();
        Advantage {
            stats: Stats::of(&values),
            values,
        }
    }

    /// Tuned parameters of one estimator and mode, across observations.
    pub fn parameter_stats(&self, estimator: EstimatorKind, mode: Mode) -> ParameterStats {
        parameter_stats(&self.tunes, estimator, mode)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rows.csv"), rows_csv(&self.rows)?)?;
        let mut w = csv::Writer::from_path(dir.join("tunes.csv"))?;
        for t in &self.tunes {
            w.serialize(t.csv_row())?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        for s in &self.summaries {
            w.serialize(s)?;
        }
        w.flush()?;
        let overview = serde_json::json!({
            "plan": self.plan,
            "pair_count": self.pair_count,
            "rows": self.rows.len(),
            "invalid": self.invalid_count(),
            "invalid_fraction": self.invalid_fraction(),
            "flagged": self.flagged(),
            "checksum": self.checksum,
            "summaries": self.summaries,
        });
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&overview)?)?;
        Ok(())
    }
}

/// Spread of tuned gains and delay of the connected leader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterStats {
    pub beta1: Stats,
    pub beta_l: Stats,
    pub sigma_l: Stats,
}

pub fn parameter_stats(tunes: &[TuneRecord], estimator: EstimatorKind, mode: Mode) -> ParameterStats {
    let sel: Vec<&TuneRecord> = tunes
        .iter()
        .filter(|t| t.estimator == estimator && t.mode == mode && t.result.is_some())
        .collect();
    let collect = |f: &dyn Fn(&TuneRecord) -> Option<f64>| Stats::of(&sel.iter().filter_map(|t| f(t)).collect::<Vec<_>>());
    ParameterStats {
        beta1: collect(&|t| t.beta(1)),
        beta_l: collect(&|t| t.beta(t.leader)),
        sigma_l: collect(&|t| t.sigma(t.leader)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::generate_range;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.gp.duration = 100.0;
        cfg.datasets = 3;
        cfg.welch.segment_length = 256;
        cfg.search.sigma_max = 2.0;
        cfg
    }

    #[test]
    fn plan_counts_ordered_distinct_pairs() {
        let plan = CrossEvalPlan::full(101, 8);
        assert_eq!(plan.pair_count(), 101 * 100);
        assert!(plan.pairs().iter().all(|(o, t)| o != t));
    }

    #[test]
    fn stats_use_sample_deviation() {
        let s = Stats::of(&[1.0, 2.0, 3.0]);
        assert_eq!((s.count, s.mean, s.std), (3, 2.0, 1.0));
        assert!(Stats::of(&[]).mean.is_nan());
    }

    #[test]
    fn report_is_deterministic_and_self_consistent() {
        let cfg = small();
        let data = generate_range(&cfg, 0..3).unwrap();
        let pipeline = Pipeline::new(&cfg).unwrap();
        let plan = CrossEvalPlan::full(3, 8);
        let a = cross_evaluate(&pipeline, &data, &plan).unwrap();
        let b = cross_evaluate(&pipeline, &data, &plan).unwrap();
        assert_eq!(a.checksum, b.checksum);
        assert_eq!(rows_csv(&a.rows).unwrap(), rows_csv(&b.rows).unwrap());
        assert_eq!(a.rows.len(), 6 * 9);
        assert_eq!(summarize(&a.rows), a.summaries);
        for s in &a.summaries {
            let rows: Vec<&EnergyRow> = a
                .rows
                .iter()
                .filter(|r| r.estimator == s.estimator && r.mode == s.mode && r.valid)
                .collect();
            let sum: f64 = rows.iter().map(|r| r.wbar.unwrap()).sum();
            assert_eq!(sum, s.sum_wbar);
            assert_eq!(rows.len(), s.valid);
        }
        // oracle rows agree across observations of the same test
        let oracle: Vec<&EnergyRow> = a
            .rows
            .iter()
            .filter(|r| r.estimator == EstimatorKind::Oracle && r.mode == Mode::Acc && r.test == 2)
            .collect();
        assert_eq!(oracle.len(), 2);
        assert_eq!(oracle[0].wbar, oracle[1].wbar);
        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let written = std::fs::read(dir.path().join("rows.csv")).unwrap();
        assert_eq!(sha256_hex(&written), a.checksum);
        let header = String::from_utf8(written).unwrap();
        assert!(header.starts_with("run_id,obs,test,estimator,mode,L,w,wbar,valid\n"), "{header}");
    }

    #[test]
    fn delay_benefit_vanishes_when_optimal_delay_is_zero() {
        let cfg = small();
        let data = generate_range(&cfg, 0..2).unwrap();
        let pipeline = Pipeline::new(&cfg).unwrap();
        let mut plan = CrossEvalPlan::full(2, 8);
        plan.modes = vec![Mode::Ccc, Mode::CccDelay];
        let r = cross_evaluate(&pipeline, &data, &plan).unwrap();
        for t in r.tunes.iter().filter(|t| t.mode == Mode::CccDelay && t.sigma(8) == Some(0.0)) {
            let twin = r
                .tunes
                .iter()
                .find(|u| u.mode == Mode::Ccc && u.obs == t.obs && u.estimator == t.estimator)
                .unwrap();
            assert_eq!(twin.result.as_ref().unwrap().betas, t.result.as_ref().unwrap().betas);
            for row in r.rows.iter().filter(|x| x.obs == t.obs.unwrap_or(x.obs) && x.estimator == t.estimator) {
                let other = r
                    .rows
                    .iter()
                    .find(|y| y.obs == row.obs && y.test == row.test && y.estimator == row.estimator && y.mode != row.mode)
                    .unwrap();
                assert_eq!(row.wbar, other.wbar);
            }
        }
    }
}
