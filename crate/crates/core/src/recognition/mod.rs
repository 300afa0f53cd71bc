//! LDA refinement, L1 nearest-neighbour matching, virtual faces and the
//! recognition / verification protocol.

mod eval;
mod lda;
mod matching;
mod virtual_faces;

pub use eval::{
    evaluate, evaluate_recognition, evaluate_repeat, evaluate_verification, lattice_for, repeat_rng, split_counts,
    split_subjects, EvalConfig, EvalReport, Method, MethodReport, PipelineParams, RankMode, RepeatOutcome, Sample,
    SplitPlan, SsmpTraining, SubspaceOverride, VirtualPolicy,
};
pub use lda::{lda_fit, lda_fit_matrix, LdaModel};
pub use matching::{
    auc, cmc_from_ranks, l1_distance, l1_match, rank_of, roc_curve, squared_l2, GalleryEntry, MatchResult, Metric,
    RocPoint,
};
pub use virtual_faces::make_virtual_faces;
