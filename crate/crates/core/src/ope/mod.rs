//! Offline policy evaluation: policy datasets, generalization splits and
//! value-prediction scoring.

mod dataset;
mod harness;
mod split;

pub use dataset::{bucket_checkpoints, collect_dataset, load_dataset, save_dataset, Checkpoint, CollectConfig, EnvSpec, Trainer};
pub use harness::{
    default_pair_cache, epochs_for_ratio, evaluate, run_ope, trial_split, trial_train_config, OpeConfig, OpeRow, OpeScores,
};
pub use split::{make_split, OpeSplit, SplitMode};
