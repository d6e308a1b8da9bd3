//! Synthetic demonstrations of the tilted-board sliding task, a surrogate
//! electrode-array contact model, and closed-loop execution of learned skills.

mod closed_loop;
mod contact;
mod corpus;
mod scenario;

pub use closed_loop::{closed_loop_unroll, Episode};
pub use contact::{
    build_contact_model, shear_load, ContactModel, ContactState, DEFAULT_NOISE_STD,
    MISALIGNMENT_SATURATION, SHEAR_SATURATION,
};
pub use corpus::{
    demo_dir, read_corpus, read_meta, setting_dir, write_corpus, write_demo, CorpusMeta, META_FILE,
};
pub use scenario::{
    tool_roll, tool_roll_rate, BoardSetting, DemoRecord, SimProfile, Simulator, StageTiming,
    CORRECTION_JITTER, MAX_BOARD_ROLL_DEG, ROLL_AXIS,
};
