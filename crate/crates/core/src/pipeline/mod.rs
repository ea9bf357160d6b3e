//! Three-stage question answering: slot detection, KB query resolution,
//! slot mapping with an emphasis memory, slot filling with a value memory.

mod query;
mod run;

pub use query::{
    construct_kb_query, fill_slots_deterministic, memory_items, parse_number, resolve_query, Comparator, Constraint,
    Filled, KbQuery, Resolution,
};
pub use run::{
    recover_alignment, run_three_stage, PipelineAnswer, PipelineConfig, PipelineTrace, StageGenerator, StageModels,
    FALLBACK_ANSWER,
};
