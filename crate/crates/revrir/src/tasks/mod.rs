//! Downstream room fingerprinting: classification heads over the pre-trained
//! encoders, the hand-crafted RIR-feature baseline, and evaluation.

pub mod baseline;
pub mod eval;
pub mod finetune;

pub use baseline::{baseline_features, baseline_train_eval, BaselineConfig, BaselineReport, RirFeatureVector};
pub use eval::{collapse_to_types, confusion, top1_accuracy, ConfusionMatrix};
pub use finetune::{
    embed_rir_set, embed_speech_set, finetune, ClassifierHead, EmbeddedDataset, EncoderChoice,
    EpochMetric, FinetuneConfig, FinetuneOutcome,
};

/// Mean and (population) standard deviation, for multi-seed reporting.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}
