//! Small trainable pair scorer: hashed character n-gram embeddings feeding
//! a two-layer MLP that emits two-class logits.

mod features;
mod model;
mod optim;

pub use features::{featurize, featurize_text, FeatureVector, BIAS_FEATURE, HASH_SEED, HASH_VERSION, NGRAM_SIZES};
pub use model::{
    backward, backward_cached, forward, forward_cached, ForwardCache, Gradients, ModelConfig, StudentParams,
    TENSOR_NAMES,
};
pub use optim::{adamw_step, adamw_update_slice, lr_at, AdamHyper, OptimState, Schedule};
