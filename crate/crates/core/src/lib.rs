//! Differential testing for speech recognizers.
//!
//! Texts from a corpus are synthesized into audio by a TTS engine, transcribed
//! by several ASR engines, and cross-referenced: a case is *failed* for a target
//! ASR when the target mis-transcribes the audio but some other ASR gets it
//! right. A trainable failure estimator prioritizes which texts to spend each
//! iteration's time budget on.

pub mod clock;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod oracle;
pub mod report;
pub mod scheduler;
pub mod store;
pub mod sweep;
pub mod synthetic;

pub use config::{Chunking, ClockKind, RunConfig};
pub use corpus::{load_corpus, normalize_text, CorpusEntry};
pub use engine::{AudioRef, EngineDescriptor, EngineHub, EngineKind, SimModel, Transcription};
pub use error::{Error, Result};
pub use oracle::{classify_case, matches, word_error_rate, CaseRecord, Outcome};
pub use report::RunReport;
pub use scheduler::{run, Runner};
