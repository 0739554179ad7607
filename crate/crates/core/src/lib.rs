//! Acoustic scene classification toolkit.
//!
//! The crate covers the full pipeline of a crowdsourced-classifier study:
//! feature and manifest IO, spectrogram preprocessing, mixup and random
//! erasing augmentation, linear and MLP softmax classifiers with cyclic
//! learning rates, location-exclusive K-fold ensembles, pseudo-label
//! self-training, a divergence-driven dataset split balancer, and a
//! public/private leaderboard harness.

pub mod augment;
pub mod balance;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod ssl;

pub use augment::{
    mixup, mixup_batch, random_erase, sample_lambda, EraseConfig, MixedSample, MixupConfig,
};
pub use balance::{
    aggregate_windows, empirical_symmetric_kl, generate_candidates, gmm_fit, gmm_log_density,
    score_candidate_divergence, select_balanced_split, AggregatedPoint, BalancedSplit,
    ClassAssignment, ClassPool, GmmConfig, GmmFit, GmmModel, RecordingGroup, SplitCandidate,
};
pub use data::{
    load_manifest, one_hot, read_feature_matrix, write_feature_matrix, Dataset, FeatureMatrix,
    OneHotTarget, Segment,
};
pub use ensemble::{
    fuse_average, fuse_majority, make_folds, train_kfold, FoldAssignment, GroupKey, KfoldOutcome,
};
pub use error::{Error, Result};
pub use harness::{
    make_eval_split, read_journal, read_submission_csv, read_truth_csv, score_submission,
    truth_with_subsets, write_journal, write_submission_csv, write_truth_csv, EvaluationSplit,
    Leaderboard, SubmissionReceipt, SubmissionRecord, Subset,
};
pub use model::{
    clr_learning_rate, cross_entropy, gradient_check, predict_batch, read_model,
    read_probability_csv, train, write_model, write_probability_csv, Architecture,
    ClassifierModel, ProbabilityRow, ProbabilityVector, SgdTrainer, TrainConfig, Trainer,
    TrainingPair,
};
pub use preprocess::{
    apply_standardizer, background_subtract, fit_standardizer, read_standardizer,
    temporal_average, write_standardizer, StandardizerStats,
};
pub use rng::{derive_seed, derived_rng, Prng};
pub use ssl::{
    accepted_indices, pseudo_label_round, pseudo_label_run, RetrainMode, SslConfig, SslOutcome,
};
