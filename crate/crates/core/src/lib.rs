//! Open-set gesture recognition for surface-EMG control.
//!
//! A CNN classifies windows of multichannel EMG into known gestures; a
//! discriminator trained adversarially against a generator on the CNN's
//! probability outputs scores whether a window belongs to a known class at
//! all, and a ROC-calibrated threshold on that score gates which
//! classifications are executed.

pub mod classifier;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gate;
pub mod metrics;
pub mod opengan;
pub mod nn;

pub use error::{Error, Result};
pub use nn::{Network, Tensor};
