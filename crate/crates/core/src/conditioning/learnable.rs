use candle_core::{Module, Tensor};
use candle_nn::Embedding;

use super::triplet::{ActionTriplet, NUM_INSTRUMENTS, NUM_TARGETS, NUM_VERBS};
use crate::error::Result;
use crate::nn::embedding;
use crate::params::ParamBuilder;

/// Three embedding tables, one row per instrument, verb and target id.
#[derive(Debug, Clone)]
pub struct LearnableTripletEncoder {
    instrument: Embedding,
    verb: Embedding,
    target: Embedding,
}

impl LearnableTripletEncoder {
    pub fn new(b: &mut ParamBuilder<'_>, dim: usize) -> Result<Self> {
        Ok(Self {
            instrument: embedding(&mut b.sub("instrument"), NUM_INSTRUMENTS, dim)?,
            verb: embedding(&mut b.sub("verb"), NUM_VERBS, dim)?,
            target: embedding(&mut b.sub("target"), NUM_TARGETS, dim)?,
        })
    }

    /// `(B, 3, d)` tokens ordered instrument, verb, target.
    pub fn encode(&self, triplets: &[ActionTriplet]) -> Result<Tensor> {
        for t in triplets {
            t.validate()?;
        }
        let device = self.verb.embeddings().device();
        let ids = |f: fn(&ActionTriplet) -> i32| {
            let v: Vec<u32> = triplets.iter().map(|t| f(t) as u32).collect();
            Tensor::from_vec(v, triplets.len(), device)
        };
        let i = self.instrument.forward(&ids(|t| t.instrument)?)?;
        let v = self.verb.forward(&ids(|t| t.verb)?)?;
        let t = self.target.forward(&ids(|t| t.target)?)?;
        Ok(Tensor::stack(&[i, v, t], 1)?)
    }
}
