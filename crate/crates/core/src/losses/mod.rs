//! Training objectives: the composite depth loss and the distillation
//! objectives built on it.

pub mod composite;
#[doc(hidden)]
pub mod gradcheck;
pub mod kd;

pub use composite::{composite_loss, composite_loss_with_grad, CompositeLossTerms};
pub use kd::{
    kd_mixed_labeled, kd_mixed_unlabeled, kd_standard, kd_unlabeled_only, supervised, AuxWeighting, DistillSample,
    KdWeight, Objective,
};
