//! Named parameters with a freeze flag.

use serde::{Deserialize, Serialize};

use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    /// Frozen parameters never accumulate gradient and never move under
    /// optimizer steps; they still participate in the forward pass.
    pub frozen: bool,
}

impl Parameter {
    pub fn trainable(name: impl Into<String>, value: Tensor) -> Self {
        Parameter {
            name: name.into(),
            value,
            frozen: false,
        }
    }

    pub fn frozen(name: impl Into<String>, value: Tensor) -> Self {
        Parameter {
            name: name.into(),
            value,
            frozen: true,
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn len(&self) -> usize {
        self.value.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.data.is_empty()
    }
}
