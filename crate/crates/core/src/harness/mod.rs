//! Experiment orchestration: corpus generation, cross-evaluation and studies.

pub mod config;
pub mod cross_eval;
pub mod dataset;
pub mod plot;
pub mod studies;

pub use config::{ExperimentConfig, GpSettings, SweepSettings, TruckSettings};
pub use cross_eval::{
    cross_evaluate, parameter_stats, summarize, tune_plan, Advantage, CrossEvalPlan, Energies, EnergyRow, ExperimentReport,
    Metric, ParameterStats, Pipeline, Stats, Summary, TestInputs, TuneRecord, INVALID_FRACTION_LIMIT,
};
pub use dataset::{derive_seed, generate_corpus, generate_dataset, generate_range, ingest_external, read_corpus, write_corpus, Dataset};
pub use studies::{delay_benefit_study, delay_benefits, leader_parameters, leader_sweep, write_delay_benefits, write_leader_sweep, DelayBenefit, LeaderPoint};
