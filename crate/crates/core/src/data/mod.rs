//! Recordings, windowing, class splits, normalization and synthetic data.

mod normalize;
mod recording;
mod split;
mod synth;
mod window;

pub use normalize::{normalize, NormStats, SIGMA_FLOOR};
pub use recording::{load_canonical, Recording};
pub use split::{make_split, SplitConfig, SplitFractions, SplitPlan, SplitRule, SPLIT_FORMAT};
pub use synth::{perturb_specs, synth_family, synth_generate, synth_recording, SynthClassSpec, SynthConfig};
pub use window::{segment_windows, LabelRule, LabeledWindow, Segmentation, WindowConfig};
