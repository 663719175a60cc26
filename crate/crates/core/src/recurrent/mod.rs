//! LSTM, adaptive LSTM and recurrent language models.

mod alstm;
mod lm;
mod lstm;
mod stack;

pub use alstm::{
    AdaptationPolicy, AlstmCell, AlstmConfig, AlstmProjections, LatentModel, PolicyModel, PolicyState, StepDiagonals,
};
pub use lm::{LanguageModel, LmConfig, MaskShapes};
pub use lstm::{LstmCell, GATES};
pub use stack::{AdaptiveSpec, LayerState, LayerTensors, RecurrentStack, StackSpec, StepMasks, Summary};
