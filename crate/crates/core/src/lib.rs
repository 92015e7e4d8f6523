pub mod formulation;
pub mod harness;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod placement;
pub mod routing;
pub mod solution;
pub mod validate;
