//! Zero-shot domain adaptation with latent domain vectors.
//!
//! Each domain's unlabeled feature set is encoded by a permutation-invariant
//! network into a Gaussian posterior over a latent domain vector `z`. A
//! predictor conditioned on `z` gives domain-specific classifiers or
//! regressors, so an unseen domain needs only its feature set at test time.

pub mod artifact;
pub mod data;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod inference;
pub mod objective;
pub mod predictor;
pub mod tensor;
pub mod train;

pub use data::{Domain, DomainDataset, DomainId, PooledSamples, Targets, Task};
pub use encoder::{sample_z, EncoderParams, LatentPosterior};
pub use error::{Error, Result};
pub use inference::{export_posteriors, predict_domain, InferenceConfig, PredictionMode, Score};
pub use objective::{elbo_minibatch, kl_standard_normal, DomainBatch, ElboTerms};
pub use predictor::{Label, PredictiveDistribution, PredictorParams};
pub use tensor::{Matrix, Parameters, Rng};
pub use train::{train, TrainConfig, TrainedModel, TrainingTrace};
pub use harness::{run_loo, sweep_k, sweep_sources, ExperimentSpec, Method, MetricKind, MetricsReport};
