//! The EQuANt network: QANet trunk plus optional answerability head.

mod config;
mod forward;
mod graph;
mod layers;
mod params;
mod predict;

pub use config::{EncoderSpec, Head1Input, HeadSource, HeadVariant, HighwayWidth, ModelConfig};
pub use forward::{Equant, ForwardVars, ModelOutput};
pub use graph::Graph;
pub use layers::{context_query_attention, encoder_block, encoder_stack, input_embedding, positional_encoding, trilinear, Attention};
pub use params::{block_of, count_params, param_layout, Init, ParamCount, ParamSpec, ParamStore};
pub use predict::{predict, prediction_for, Answer};
