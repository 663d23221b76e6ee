pub mod engine;
pub mod geom;
pub mod phantom;
pub mod registration;
pub mod reslice;
pub mod session;
pub mod tracking;
pub mod volume;
pub mod wire;

#[cfg(test)]
mod testing;
