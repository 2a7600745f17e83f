//! Human-benchmark service: seeded image sessions, recorded selections and
//! AUROC scoring of the binary in/out decisions.

mod server;
mod session;
mod store;

pub use server::{router, serve, ServeConfig};
pub use session::{
    BenchReport, BenchSession, Confusion, ImagePool, ManifestEntry, PageImage, RevealedImage,
    SessionInfo, SessionParams, Source, DEFAULT_PAGE_SIZE,
};
pub use store::SessionStore;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} already exists")]
    DuplicateSession(String),
    #[error("image pool {0} contains no images")]
    EmptyPool(String),
    #[error("page {page} is out of range (session has {pages} pages)")]
    PageOutOfRange { page: usize, pages: usize },
    #[error("image {image:?} is not on page {page}")]
    UnknownImage { image: String, page: usize },
    #[error("{0:?} is not an in-distribution class")]
    InvalidClass(String),
    #[error("session is incomplete: {missing} of {pages} pages not submitted")]
    Incomplete { missing: usize, pages: usize },
    #[error("session has not been scored yet")]
    NotScored,
    #[error("{0}")]
    InvalidRequest(String),
    #[error("{path}: {detail}")]
    Storage { path: String, detail: String },
    #[error("scoring failed: {0}")]
    Metrics(#[from] oodkit_core::Error),
}

impl BenchError {
    fn storage(path: &std::path::Path, detail: impl std::fmt::Display) -> Self {
        Self::Storage { path: path.display().to_string(), detail: detail.to_string() }
    }
}
