//! Circuit-aware EDA flow parameter tuning.
//!
//! Designs are summarized into embeddings and stored with the best parameter
//! samples found for them. A new design retrieves the guidance of its most
//! similar stored design, and a prompted search uses that guidance next to
//! its own history. Random, TPE and GP-EI searches serve as baselines.
//!
//! Numeric kernels are generic over [`Scalar`]; the aliases below fix the
//! precision used by the database and the search engines.

pub mod analysis;
pub mod db;
pub mod embedding;
pub mod evaluator;
pub mod offline;
pub mod provider;
pub mod rtl;
pub mod scalar;
pub mod search;
pub mod space;
pub mod summarizer;

use rand::SeedableRng;
use thiserror::Error;

pub use scalar::Scalar;

/// Stored embedding precision.
pub type Embedding = embedding::EmbeddingVector<f32>;
pub type Embedding64 = embedding::EmbeddingVector<f64>;
pub type Gp = search::GaussianProcess<f64>;
pub type RankedSeries = analysis::RankedSeries<f64>;

pub type SeededRng = rand_chacha::ChaCha8Rng;

/// The one RNG used for every seeded decision.
pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Any library error, with a stable machine-readable code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Space(#[from] space::SpaceError),
    #[error(transparent)]
    Assignment(#[from] space::AssignmentError),
    #[error(transparent)]
    Rtl(#[from] rtl::RtlError),
    #[error(transparent)]
    Provider(#[from] provider::ProviderError),
    #[error(transparent)]
    Summary(#[from] summarizer::SummaryError),
    #[error(transparent)]
    Embedding(#[from] embedding::EmbeddingError),
    #[error(transparent)]
    Db(#[from] db::DbError),
    #[error(transparent)]
    Eval(#[from] evaluator::EvalError),
    #[error(transparent)]
    Search(#[from] search::SearchError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Space(_) | Error::Assignment(_) => "E_SPACE",
            Error::Rtl(_) => "E_RTL",
            Error::Provider(_) => "E_PROVIDER",
            Error::Summary(_) => "E_SUMMARY",
            Error::Embedding(_) => "E_EMBEDDING",
            Error::Db(_) => "E_DB",
            Error::Eval(_) => "E_EVAL",
            Error::Search(search::SearchError::InvalidConfig(_)) => "E_CONFIG",
            Error::Search(search::SearchError::Provider { .. }) => "E_PROVIDER",
            Error::Search(_) => "E_SEARCH",
            Error::Analysis(analysis::AnalysisError::Incompatible(_)) => "E_INCOMPATIBLE",
            Error::Analysis(_) => "E_ANALYSIS",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
