//! Trainable decoder on top of a frozen encoder: reverse-mode gradients,
//! language-model training, perplexity and reading-time alignment.

mod behavior;
mod model;
mod params;
mod tape;
mod train;

pub use behavior::{
    align_words, behavioral_alignment, planted_reading_times, word_surprisals, BehaviorResult, LanguageModel,
    ReadingRow, ReadingTimeDataset, TokenSurprisal, WordScore,
};
pub use model::{
    grad_check, relative_error, Decoder, DecoderConfig, FeatureSource, GradCheckReport, InputSource,
    DECODER_INIT_STD, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP,
};
pub use params::ParamStore;
pub use tape::{Gradients, Tape, Var, DECODER_LN_EPS};
pub use train::{
    evaluate, perplexity, token_stream, train, windows, LossRecord, LrSchedule, PreparedSplit, TrainConfig,
    TrainOutcome, UnigramModel,
};
