pub mod annotation;
pub mod association;
pub mod corpus;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod report;
pub mod synth;
