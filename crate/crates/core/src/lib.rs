pub mod clustering;
pub mod dataset;
pub mod experiment;
pub mod model;
pub mod sim;
pub mod topology;
pub mod tree;
