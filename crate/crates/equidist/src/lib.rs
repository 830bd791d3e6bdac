//! Effective joint equidistribution toolkit.
//!
//! The numeric core is generic over [`Real`]; the aliases below fix the scalar to `f64`.
//! Trace-formula, class-number and characteristic-polynomial work is exact.

pub mod discrepancy;
pub mod error;
pub mod field_census;
pub mod hecke;
pub mod hk_variation;
pub mod measures;
pub mod scalar;
pub mod selberg;

pub use error::{Error, Result};
pub use measures::{ClosedInterval, FnTransform, FourierCoeffProvider, RegionSpec, Transform};
pub use scalar::Real;

pub type Density = measures::Density1D<f64>;
pub type Product = measures::ProductMeasure<f64>;
pub type Interval = selberg::IntervalMod1<f64>;
pub type TrigPoly = selberg::TrigPolynomial<f64>;
pub type Cochrane = selberg::CochranePolys<f64>;
pub type Sequence = discrepancy::SequenceND<f64>;
pub type WeylSums = discrepancy::WeylSumTable<f64>;
pub type Grid = hk_variation::GridFunction<f64>;
pub type Cells = hk_variation::BoxUnion<f64>;
