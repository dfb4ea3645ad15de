//! Experiment runners: single train/evaluate runs, sweeps and reports.

mod config;
mod pipeline;
mod render;
mod report;
mod svg;
mod sweeps;

pub use config::*;
pub use pipeline::*;
pub use render::{render_report, Artifact};
pub use report::*;
pub use svg::{bar_chart, heatmap};
pub use sweeps::*;
