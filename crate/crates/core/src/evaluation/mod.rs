//! Metrics for community recovery, edge prediction, joint-label
//! classification, modularity and sampled-network fidelity.

mod joint;
mod modularity;
mod prediction;
mod recovery;
mod samples;

pub use joint::{classify, joint_classify, observed_state, Baselines, JointClassificationReport, LabelCounts};
pub use modularity::{overlapping_modularity, Aggregation};
pub use prediction::{auc, losses, prediction_report, score_dyads, EntryScores, Losses, PredictionReport, ScoreKind, CLIP};
pub use recovery::{cosine_similarity, CommunityRecoveryReport, EXACT_ALIGNMENT_MAX_K};
pub use samples::{compare_samples, mean_std, SampleComparison, StatRow};

pub(crate) use samples::csv_error;
