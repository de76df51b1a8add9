//! Monte Carlo experiments, reports, and validation studies.

pub mod experiment;
pub mod mi;
pub mod report;
pub mod songs;

pub use experiment::{run_matching_experiment, run_matrix_random_user, timed, SimulationConfig, TopicsExperiment};
pub use mi::{
    epoch_mutual_information, plug_in_mutual_information, topics_mi_validation, EpochMi, MiReport, MiValidation,
};
pub use report::{
    emit_accuracy_curve, mean_fraction_interval, wilson_interval, write_curve_csv, write_curve_json, CiMethod,
    CurveRow, ExperimentReport, Setting, Z_95,
};
pub use songs::{ingest_song_dataset, parse_song_triplets, run_song_experiment, SongDataset, SongSampling};
