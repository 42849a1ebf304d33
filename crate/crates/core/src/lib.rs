pub mod energy;
pub mod process;
pub mod samplers;
pub mod dsu;
pub mod metrics;
pub mod oracle;
pub mod nn;
pub mod risk;
pub mod nbi;
pub mod experiment;
