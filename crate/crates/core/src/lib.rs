pub mod cost;
pub mod model;
pub mod mpc;
pub mod ocp;
pub mod plant;
pub mod risk;
pub mod uncertainty;
