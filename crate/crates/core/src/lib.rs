pub mod access;
pub mod conic;
pub mod fronthaul;
pub mod harness;
pub mod optimizer;
pub mod power;
pub mod scenario;
