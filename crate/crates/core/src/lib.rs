pub mod baselines;
pub mod bench;
pub mod fullopt;
pub mod geometry;
pub mod instance;
pub mod io;
pub mod miqp;
pub mod oracle;
pub mod planner;
pub mod qp;
pub mod sim;
pub mod symbolic;
pub mod world;
