pub mod autodiff;
pub mod downstream;
pub mod encoder;
pub mod features;
pub mod graph;
pub mod infomax;
pub mod pipeline;
pub mod sampling;
pub mod seed;
pub mod synth;
pub mod training;
