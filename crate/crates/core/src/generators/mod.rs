//! BSDE data: drivers, terminal functionals, structural constants, the
//! smooth `z`-truncation `ρ_N`, and sampling probes of declared constants.

mod driver;
mod spec;
mod truncation;
mod validate;

pub use driver::{
    ConstantDriver, Driver, DriverForm, LinearYDriver, NonConvexDriver, PathSupDriver, QuadraticDriver,
    SumDriver, TanhDriver, ZeroDriver,
};
pub use spec::{fd_grad, Constants, GeneratorSpec};
pub use truncation::{truncate_z, Truncation};
pub use validate::{validate_growth, CheckSummary, GrowthCheck, GrowthReport, Violation};
