//! Teacher and student training, the KD experiment matrix, the
//! out-of-domain study and the auxiliary-size sweep.

pub mod config;
pub mod experiments;
pub mod optim;
pub mod report;
pub mod train;

pub use config::{ExperimentConfig, Mode, TrainingSets};
pub use experiments::{
    aux_size_sweep, run_matrix, run_study, sweep_curve, sweep_shape, SeedRunner, Setting, SettingSummary, StudyConfig,
    StudyResults,
};
pub use optim::{lr_schedule, lr_schedule_with, Adam, AdamConfig};
pub use report::{
    config_hash, curve_rows, median, read_curve_csv, write_curve_csv, CurveRow, EpochRecord, Role, TrainReport,
};
pub use train::{
    evaluate_model, predict_dataset, train_student, train_student_with_teacher, train_teacher, TeacherTargets,
};
