pub mod agents;
pub mod datamodel;
pub mod dpcore;
pub mod netsim;
pub mod secretsharing;
pub mod synthgen;
