//! The seven task environments.
//!
//! Each task is layered: a typed core (hidden state, seeded transitions,
//! scoring math) that the Monte Carlo chance module drives directly, and a
//! text adapter implementing [`TextEnvironment`] that renders prompts, parses
//! replies, and formats feedback for the session loop.

pub mod bandit;
pub mod dcigt;
pub mod nback;
pub mod oddball;
pub mod wcst;
pub mod wpt;

use std::sync::Arc;

use crate::config::{TaskConfig, TaskId};
use crate::embed::{Embedder, HashEmbedder};
use crate::error::ConfigError;
use crate::session::TextEnvironment;

/// Shared resources an environment may need beyond its own config: the
/// oddball stimulus corpus and the embedder used for surprise scoring.
#[derive(Clone)]
pub struct SessionContext {
    pub corpus: Arc<Vec<oddball::OddballItem>>,
    pub embedder: Arc<dyn Embedder>,
}

impl Default for SessionContext {
    fn default() -> Self {
        SessionContext {
            corpus: Arc::new(oddball::builtin_corpus()),
            embedder: Arc::new(HashEmbedder::default()),
        }
    }
}

impl std::fmt::Debug for SessionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionContext")
            .field("corpus_items", &self.corpus.len())
            .field("embedder", &self.embedder.id())
            .finish()
    }
}

/// Build a freshly initialized environment for one session. All hidden state
/// is drawn from streams derived from `seed`, so the same (config, seed) pair
/// always yields the same environment.
pub fn build_env(
    config: &TaskConfig,
    seed: u64,
    ctx: &SessionContext,
) -> Result<Box<dyn TextEnvironment>, ConfigError> {
    config.validate()?;
    Ok(match config.task_id {
        TaskId::Wpt => Box::new(wpt::WptEnv::new(config.clone(), seed)?),
        TaskId::Wcst => Box::new(wcst::WcstEnv::new(config.clone(), seed)?),
        TaskId::Oddball => Box::new(oddball::OddballEnv::new(
            config.clone(),
            seed,
            ctx.corpus.clone(),
            ctx.embedder.clone(),
        )?),
        TaskId::Nback => Box::new(nback::NbackEnv::new(config.clone(), seed)?),
        TaskId::Dcigt => Box::new(dcigt::DcigtEnv::new(config.clone(), seed)?),
        TaskId::Prlt => Box::new(bandit::PrltEnv::new(config.clone(), seed)?),
        TaskId::Mbt => Box::new(bandit::MbtEnv::new(config.clone(), seed)?),
    })
}

/// RNG stream label used by environment hidden-state draws.
pub(crate) const ENV_STREAM: &str = "env";
