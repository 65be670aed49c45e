pub mod energy;
pub mod error;
pub mod freq;
pub mod gp;
pub mod harness;
pub mod scalar;
pub mod spectral;
pub mod special;
pub mod traffic;
pub mod trajectory;
pub mod tuner;

pub use error::{Error, Result};

/// Double-precision instances of the generic core types.
pub type Kernel = gp::MaternKernel<f64>;
pub type GpSampling = gp::GpConfig<f64>;
pub type Trajectory = trajectory::SpeedTrajectory<f64>;
pub type Spectra = spectral::SpectralEstimate<f64>;
pub type Link = freq::LinkTransfer<f64>;
pub type Plant = traffic::PlantParams<f64>;
pub type Policy = traffic::PolicyParams<f64>;
pub type Human = traffic::HumanParams<f64>;
pub type Controller = traffic::ControllerParams<f64>;
pub type Integrator = traffic::IntegratorSettings<f64>;
pub type Run = traffic::TruckRun<f64>;
pub type Energy = traffic::EnergyReport<f64>;
