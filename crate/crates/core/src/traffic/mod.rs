//! Longitudinal traffic models: human-driven chain and the connected automated truck.

pub mod dde;
pub mod inputs;
pub mod ovm;
pub mod params;
pub mod policy;
pub mod truck;

pub use inputs::{IntegratorSettings, PreparedInputs};
pub use ovm::simulate_ovm_chain;
pub use params::{ControlMode, ControllerParams, DelayPlacement, HumanParams, LeaderLink, PlantParams, PolicyParams};
pub use policy::{positive_part, range_policy, resistance, saturate, speed_policy};
pub use truck::{simulate_truck_linear, simulate_truck_nonlinear, EnergyReport, TruckInit, TruckRun};
