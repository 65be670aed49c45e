//! Delay-benefit and varying-leader studies built on cross-evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cross_eval::{cross_evaluate, parameter_stats, tune_plan, CrossEvalPlan, ExperimentReport, Metric, Pipeline, Stats};
use super::dataset::Dataset;
use super::plot::{histogram, line_chart, Series};
use crate::error::Result;
use crate::spectral::EstimatorKind;
use crate::tuner::Mode;

/// Distribution of the per-pair saving from the tuned information delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayBenefit {
    pub estimator: EstimatorKind,
    pub linear: Stats,
    pub nonlinear: Stats,
    pub linear_values: Vec<f64>,
    pub nonlinear_values: Vec<f64>,
}

/// Runs CCC with the delay pinned to zero and with the tuned delay over the plan.
pub fn delay_benefit_study(pipeline: &Pipeline<'_>, datasets: &[Dataset], plan: &CrossEvalPlan) -> Result<(ExperimentReport, Vec<DelayBenefit>)> {
    let mut plan = plan.clone();
    plan.modes = vec![Mode::Ccc, Mode::CccDelay];
    let report = cross_evaluate(pipeline, datasets, &plan)?;
    let benefits = delay_benefits(&report);
    Ok((report, benefits))
}

pub fn delay_benefits(report: &ExperimentReport) -> Vec<DelayBenefit> {
    report
        .plan
        .estimators
        .iter()
        .map(|&e| {
            let lin = report.delay_benefit(e, Metric::Linear);
            let non = report.delay_benefit(e, Metric::Nonlinear);
            DelayBenefit {
                estimator: e,
                linear: lin.stats,
                nonlinear: non.stats,
                linear_values: lin.values,
                nonlinear_values: non.values,
            }
        })
        .collect()
}

pub fn write_delay_benefits(benefits: &[DelayBenefit], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("delay_benefit.csv"))?;
    w.write_record(["estimator", "metric", "count", "mean", "std"])?;
    for b in benefits {
        for (metric, s) in [("linear", b.linear), ("nonlinear", b.nonlinear)] {
            w.write_record([
                b.estimator.as_str().to_string(),
                metric.to_string(),
                s.count.to_string(),
                s.mean.to_string(),
                s.std.to_string(),
            ])?;
        }
    }
    w.flush()?;
    for (metric, pick) in [
        ("linear", (|b: &DelayBenefit| b.linear_values.clone()) as fn(&DelayBenefit) -> Vec<f64>),
        ("nonlinear", |b: &DelayBenefit| b.nonlinear_values.clone()),
    ] {
        let groups: Vec<(String, Vec<f64>)> = benefits
            .iter()
            .map(|b| (b.estimator.to_string(), pick(b).iter().map(|v| 100.0 * v).collect()))
            .collect();
        let svg = histogram(&format!("Energy saved by the information delay ({metric})"), "saving [%]", &groups, 30);
        std::fs::write(dir.join(format!("delay_benefit_{metric}.svg")), svg)?;
    }
    Ok(())
}

/// Tuned parameters and energies for one leader and estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderPoint {
    pub leader: usize,
    pub estimator: EstimatorKind,
    pub beta1: Stats,
    pub beta_l: Stats,
    pub sigma_l: Stats,
    pub wbar: Stats,
    pub w: Stats,
}

/// CCC with a tuned delay for every leader in `leaders`.
pub fn leader_sweep(pipeline: &Pipeline<'_>, datasets: &[Dataset], base: &CrossEvalPlan, leaders: &[usize]) -> Result<Vec<LeaderPoint>> {
    let mut out = Vec::new();
    for &leader in leaders {
        let plan = CrossEvalPlan {
            modes: vec![Mode::CccDelay],
            leader,
            ..base.clone()
        };
        let report = cross_evaluate(pipeline, datasets, &plan)?;
        for &e in &plan.estimators {
            let p = report.parameter_stats(e, Mode::CccDelay);
            let energy = |m: Metric| {
                let v: Vec<f64> = report
                    .rows
                    .iter()
                    .filter(|r| r.estimator == e)
                    .filter_map(|r| m.of(r))
                    .collect();
                Stats::of(&v)
            };
            out.push(LeaderPoint {
                leader,
                estimator: e,
                beta1: p.beta1,
                beta_l: p.beta_l,
                sigma_l: p.sigma_l,
                wbar: energy(Metric::Linear),
                w: energy(Metric::Nonlinear),
            });
        }
    }
    Ok(out)
}

/// Optimal CCC-Delay parameters for every leader, tuning only.
pub fn leader_parameters(pipeline: &Pipeline<'_>, datasets: &[Dataset], base: &CrossEvalPlan, leaders: &[usize]) -> Result<Vec<LeaderPoint>> {
    let mut out = Vec::new();
    for &leader in leaders {
        let plan = CrossEvalPlan {
            modes: vec![Mode::CccDelay],
            leader,
            ..base.clone()
        };
        let tunes = tune_plan(pipeline, datasets, &plan)?;
        for &e in &plan.estimators {
            let p = parameter_stats(&tunes, e, Mode::CccDelay);
            out.push(LeaderPoint {
                leader,
                estimator: e,
                beta1: p.beta1,
                beta_l: p.beta_l,
                sigma_l: p.sigma_l,
                wbar: Stats::of(&[]),
                w: Stats::of(&[]),
            });
        }
    }
    Ok(out)
}

pub fn write_leader_sweep(points: &[LeaderPoint], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("leader_sweep.csv"))?;
    w.write_record([
        "L", "estimator", "beta1_mean", "beta1_std", "betaL_mean", "betaL_std", "sigmaL_mean", "sigmaL_std", "wbar_mean",
        "wbar_std", "w_mean", "w_std",
    ])?;
    for p in points {
        let mut rec = vec![p.leader.to_string(), p.estimator.as_str().to_string()];
        for s in [p.beta1, p.beta_l, p.sigma_l, p.wbar, p.w] {
            rec.push(s.mean.to_string());
            rec.push(s.std.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    let estimators: Vec<EstimatorKind> = EstimatorKind::ALL
        .into_iter()
        .filter(|e| points.iter().any(|p| p.estimator == *e))
        .collect();
    let charts: [(&str, &str, fn(&LeaderPoint) -> Stats); 5] = [
        ("beta1", "beta_1 [1/s]", |p| p.beta1),
        ("betaL", "beta_L [1/s]", |p| p.beta_l),
        ("sigmaL", "sigma_L [s]", |p| p.sigma_l),
        ("wbar", "linear energy [J/kg]", |p| p.wbar),
        ("w", "nonlinear energy [J/kg]", |p| p.w),
    ];
    for (name, label, pick) in charts {
        let series: Vec<Series> = estimators
            .iter()
            .map(|&e| {
                let sel: Vec<&LeaderPoint> = points.iter().filter(|p| p.estimator == e).collect();
                Series {
                    name: e.to_string(),
                    points: sel.iter().map(|p| (p.leader as f64, pick(p).mean)).collect(),
                    band: Some(sel.iter().map(|p| pick(p).std.max(0.0)).collect()),
                }
            })
            .collect();
        std::fs::write(
            dir.join(format!("leader_{name}.svg")),
            line_chart(&format!("{label} versus connected leader"), "leader L", label, &series),
        )?;
    }
    Ok(())
}
