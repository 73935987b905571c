pub mod analytics;
pub mod classify;
pub mod filter;
pub mod landscape;
pub mod logparse;
pub mod model;
pub mod sigdb;
pub mod synth;
pub mod report;
