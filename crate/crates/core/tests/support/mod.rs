//! Reference implementations and acceptance checks shared by the core tests
//! and the workspace acceptance target.
#![allow(dead_code)]

pub mod checks;
pub mod gen;
pub mod oracles;
