//! Speech-based risk screening pipeline: segmentation, acoustic functionals,
//! normalisation, weighted linear SVMs, LOSO evaluation and feature statistics.

pub mod audio;
pub mod segmentation;
pub mod features;
pub mod feature_store;
pub mod normalization;
pub mod svm;
pub mod evaluation;
pub mod stats;
pub mod synth;
pub mod pipeline;

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

/// Derive an independent 64-bit seed for a named task from a base seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
