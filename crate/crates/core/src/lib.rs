//! Stance detection for headline/body news pairs.
//!
//! Three feature families (sentence-embedding interactions, unigram TF
//! vectors, hand-crafted overlap and polarity features) each feed a small
//! dense branch; a softmax head fuses them into agree / disagree / discuss /
//! unrelated. Scoring follows the FNC-1 weighted metric.
//!
//! With the default `parallel` feature, featurization and the dense matrix
//! products run on rayon. Work is chunked independently of the thread
//! count, so results are bitwise-identical to [`par::Execution::Sequential`].

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod external;
pub mod features;
pub mod nn;
pub mod par;
pub mod predictions;
pub mod statistical;
pub mod text;

pub use corpus::{load_corpus, split, Corpus, Stance, StancePair};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, EvalReport};
pub use features::{Block, BlockLayout, FeatureBundle, FeatureSet, Featurizer};
pub use nn::MlpModel;
pub use par::Execution;
pub use statistical::Vocabulary;
