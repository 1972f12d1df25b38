//! Unit commitment by three-block consensus ADMM with QUBO binary updates.

pub mod admm;
pub mod block1;
pub mod model;
pub mod qp;
pub mod qubo;
pub mod solve;
pub mod sparse;
