//! Multi-concept prompt learning: several new token embeddings learned
//! jointly from image–caption pairs against a frozen text-conditioned
//! denoiser, with attention masking, a prompt-contrastive loss and
//! adjective binding, plus a synthetic benchmark and evaluation harness.

pub mod archive;
pub mod digest;
pub mod engine;
pub mod eval;
pub mod error;
pub mod grid;
pub mod ldm;
pub mod losses;
pub mod optim;
pub mod par;
pub mod probe;
pub mod scene;
pub mod stats;
pub mod text;

pub use error::{Error, Result};
