use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    /// Plain QANet, no answerability head.
    #[default]
    None,
    Equant1,
    Equant2,
    Equant3,
}

impl HeadVariant {
    pub fn has_head(self) -> bool {
        self != Self::None
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Equant1 => "equant1",
            Self::Equant2 => "equant2",
            Self::Equant3 => "equant3",
        }
    }
}

impl core::str::FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "equant1" => Ok(Self::Equant1),
            "equant2" => Ok(Self::Equant2),
            "equant3" => Ok(Self::Equant3),
            other => Err(Error::Config(format!("unknown head variant {other:?}"))),
        }
    }
}

/// Where heads 2 and 3 read their input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadSource {
    /// First pass of the model-encoder stack.
    #[default]
    M0,
    /// Projected context-query attention output, before the stack.
    Fused,
}

/// Which view of the similarity matrix head 1 convolves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head1Input {
    #[default]
    RowSoftmax,
    Raw,
}

/// Width at which the highway layers run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighwayWidth {
    /// Project 396 → hidden first, then two highway layers at hidden width.
    #[default]
    Hidden,
    /// Two highway layers at 396, then project to hidden.
    Embed,
}

/// Settings for one stack of encoder blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub blocks: usize,
    pub convs: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_conv_out: usize,
    pub char_conv_width: usize,
    pub hidden: usize,
    pub attention_heads: usize,
    pub highway_layers: usize,
    pub highway_width: HighwayWidth,
    pub embedding_encoder: EncoderSpec,
    pub model_encoder: EncoderSpec,
    pub head_variant: HeadVariant,
    pub head_source: HeadSource,
    pub head_encoder: EncoderSpec,
    pub head1_input: Head1Input,
    pub head1_channels: [usize; 2],
    pub head1_kernel: usize,
    pub head2_channels: usize,
    pub head2_kernel: usize,
    pub equant2_pad_length: usize,
    pub head3_widths: [usize; 2],
    pub stop_head_gradient: bool,
    pub span_length_cap: usize,
    pub answerability_threshold: f64,
    pub dropout: f64,
    pub layer_norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 300,
            char_dim: 64,
            char_conv_out: 96,
            char_conv_width: 5,
            hidden: 96,
            attention_heads: 1,
            highway_layers: 2,
            highway_width: HighwayWidth::Hidden,
            embedding_encoder: EncoderSpec { blocks: 1, convs: 4, kernel: 7 },
            model_encoder: EncoderSpec { blocks: 7, convs: 2, kernel: 5 },
            head_variant: HeadVariant::None,
            head_source: HeadSource::M0,
            head_encoder: EncoderSpec { blocks: 2, convs: 2, kernel: 5 },
            head1_input: Head1Input::RowSoftmax,
            head1_channels: [8, 16],
            head1_kernel: 3,
            head2_channels: 8,
            head2_kernel: 5,
            equant2_pad_length: 400,
            head3_widths: [48, 24],
            stop_head_gradient: false,
            span_length_cap: 30,
            answerability_threshold: 0.5,
            dropout: 0.1,
            layer_norm_eps: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn embed_dim(&self) -> usize {
        self.word_dim + self.char_conv_out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_conv_out", self.char_conv_out),
            ("hidden", self.hidden),
            ("attention_heads", self.attention_heads),
            ("head1_channels", self.head1_channels[0].min(self.head1_channels[1])),
            ("head2_channels", self.head2_channels),
            ("equant2_pad_length", self.equant2_pad_length),
            ("head3_widths", self.head3_widths[0].min(self.head3_widths[1])),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let odd = [
            ("char_conv_width", self.char_conv_width),
            ("embedding_encoder.kernel", self.embedding_encoder.kernel),
            ("model_encoder.kernel", self.model_encoder.kernel),
            ("head_encoder.kernel", self.head_encoder.kernel),
            ("head1_kernel", self.head1_kernel),
            ("head2_kernel", self.head2_kernel),
        ];
        for (name, v) in odd {
            if v % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd, got {v}")));
            }
        }
        if !self.hidden.is_multiple_of(self.attention_heads) {
            return Err(Error::Config(format!(
                "attention_heads {} does not divide hidden {}",
                self.attention_heads, self.hidden
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(0.0..=1.0).contains(&self.answerability_threshold) {
            return Err(Error::Config(format!(
                "answerability_threshold must lie in [0, 1], got {}",
                self.answerability_threshold
            )));
        }
        if self.layer_norm_eps <= 0.0 {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}
