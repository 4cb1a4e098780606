pub mod dynamics;
pub mod geometry;
pub mod harness;
pub mod hele_shaw;
pub mod noise;
pub mod residual;
pub mod spectral;
pub mod theory;
