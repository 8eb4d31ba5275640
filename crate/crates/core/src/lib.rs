//! Residual FFT-Conv blocks and a multi-scale deblurring network.

pub mod autodiff;
pub mod blocks;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod ops;
pub mod optim;
pub mod params;
pub mod spectral;
pub mod tensor;

pub use autodiff::{Eager, Exec, Graph, Var};
pub use error::{Error, Result};
pub use params::ParamStore;
pub use spectral::HalfSpectrum;
pub use tensor::{Float, Shape, Tensor};
