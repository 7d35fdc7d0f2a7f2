//! Independent solvers used to check the controller and to provide the
//! clairvoyant benchmark.

pub mod grid;
pub mod lp;
pub mod offline;
pub mod qp;
pub mod sparse;
