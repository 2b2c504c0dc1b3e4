//! Neural bug detection and repair for Python functions: lexing, bug
//! injection and mining, dataset construction, a transformer with three
//! task heads, two-phase training and dependency-aware evaluation.

pub mod corpus;
pub mod eval;
pub mod learn;
pub mod model;
pub mod mutate;
pub mod rng;
pub mod scalar;
pub mod syntax;
pub mod toy;

pub use scalar::Scalar;

pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type Prediction32 = model::Prediction<f32>;
pub type Prediction64 = model::Prediction<f64>;
pub type Params32 = model::ModelParams<f32>;
pub type Params64 = model::ModelParams<f64>;
pub type Trainer32 = learn::Trainer<f32>;
pub type Trainer64 = learn::Trainer<f64>;
