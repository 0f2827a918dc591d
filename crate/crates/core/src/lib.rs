pub mod affine;
pub mod distributions;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod processes;
pub mod pricing;
pub mod quadrature;
