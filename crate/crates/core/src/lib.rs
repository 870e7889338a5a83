pub mod examples;
pub mod extract;
pub mod model;
pub mod moment;
pub mod nash;
pub mod poly;
pub mod sdpa;
pub mod solver;
pub mod tms;
