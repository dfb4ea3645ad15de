//! Minimal deterministic neural-network engine: batched tensors, a handful
//! of layer kinds with hand-written backward passes, losses, SGD/Adam and a
//! finite-difference gradient checker.

mod gemm;
pub mod gradcheck;
pub mod io;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod rng;
mod scalar;
mod tensor;

pub use gradcheck::{gradient_check, Coverage, GradCheck};
pub use io::ModelFile;
pub use layer::{conv2d_forward, dense_forward, softmax, LayerSpec};
pub use loss::{bce_loss, cross_entropy_loss, loss_and_gradients, Target};
pub use network::{GradSeed, Gradients, Network, Session};
pub use optim::{Algorithm, Optimizer};
pub use rng::{derive_seed, sample_gaussian, seeded_rng, StreamRng};
pub use scalar::Scalar;
pub use tensor::Tensor;
