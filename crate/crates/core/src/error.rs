use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("covariance embedding is not positive semidefinite: negative eigenvalue mass {negative_mass:.3e} vs trace {trace:.3e} (most negative {min_eigenvalue:.3e})")]
    Embedding {
        negative_mass: f64,
        trace: f64,
        min_eigenvalue: f64,
    },

    #[error("collision: headway {headway:.3} m at t = {time:.2} s (vehicle {vehicle})")]
    Collision {
        vehicle: usize,
        time: f64,
        headway: f64,
    },

    #[error("transfer function pole at s = {re} + {im}j")]
    Pole { re: f64, im: f64 },

    #[error("no plant-stable gains: alpha*kappa = {target:.4} exceeds max of w^2 cos(w sigma) = {max_value:.4} on (0, pi/(2 sigma))")]
    Infeasible { target: f64, max_value: f64 },

    #[error("root counting did not converge: {0}")]
    RootCount(String),

    #[error("ingest {path}: {message}")]
    Ingest { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
