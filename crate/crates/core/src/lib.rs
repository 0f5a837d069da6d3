//! Exact distributed volume rendering over spatially partitioned scenes.
//!
//! A scene is cut into disjoint axis-aligned tiles by recursive median splits.
//! Each tile worker integrates its part of every ray into one small packet,
//! and ordered composition of the packets reproduces the single-machine
//! render, including the pairwise distortion loss, up to rounding.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the common double-precision instantiation.

pub mod baselines;
pub mod breakable;
pub mod cli;
pub mod distsim;
pub mod error;
pub mod field;
pub mod geom;
pub mod io;
pub mod num;
pub mod partitioner;
pub mod quadrature;
pub mod scenes;
pub mod segrender;
pub mod verify;

pub use error::{Error, Result};
pub use num::Real;

pub type Vec3f64 = geom::Vec3<f64>;
pub type Aabb64 = geom::Aabb<f64>;
pub type Rgb64 = geom::Rgb<f64>;
pub type Ray64 = geom::Ray<f64>;
pub type Field64 = field::Field<f64>;
pub type SampleInterval64 = quadrature::SampleInterval<f64>;
pub type RayAggregate64 = quadrature::RayAggregate<f64>;
pub type SegmentAggregate64 = segrender::SegmentAggregate<f64>;
pub type PartitionTree64 = partitioner::PartitionTree<f64>;
pub type WorkerPool64 = distsim::WorkerPool<f64>;
pub type Camera64 = distsim::Camera<f64>;
pub type Image64 = io::Image<f64>;

pub type Vec3f32 = geom::Vec3<f32>;
pub type Aabb32 = geom::Aabb<f32>;
pub type Rgb32 = geom::Rgb<f32>;
pub type Ray32 = geom::Ray<f32>;
pub type Field32 = field::Field<f32>;
pub type SampleInterval32 = quadrature::SampleInterval<f32>;
pub type RayAggregate32 = quadrature::RayAggregate<f32>;
pub type SegmentAggregate32 = segrender::SegmentAggregate<f32>;
pub type PartitionTree32 = partitioner::PartitionTree<f32>;
