//! Appearance embeddings: distances, the aggregation loss and a trainable
//! linear embedding head.

pub mod distance;
pub mod head;
pub mod loss;
