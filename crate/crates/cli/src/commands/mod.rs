pub mod evaluate;
pub mod hpo;
pub mod predict;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod train;
