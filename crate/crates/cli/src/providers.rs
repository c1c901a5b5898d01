//! Provider and backend construction from command-line specs.

use std::path::Path;
use std::sync::Arc;

use flowtune::embedding::{LocalEmbeddingProvider, DEFAULT_FALLBACK_DIM, MIN_FALLBACK_DIM};
use flowtune::evaluator::{FlowBackend, SubprocessBackend, SyntheticDesign};
use flowtune::offline::OfflineChatProvider;
use flowtune::provider::{
    ChatProvider, EmbeddingProvider, HttpChatProvider, HttpConfig, HttpEmbeddingProvider, ScriptedChatProvider,
    ScriptedEmbeddingProvider,
};
use flowtune::space::ParameterSpace;

use crate::failure::Failure;
use crate::{BackendArgs, CliResult, Global};

pub fn load_space(global: &Global) -> CliResult<ParameterSpace> {
    match &global.space {
        Some(p) => Ok(ParameterSpace::load(p)?),
        None => Ok(ParameterSpace::default_space()),
    }
}

fn http_config(base_env: &str, key_env: &str, model: &str) -> HttpConfig {
    let mut cfg = HttpConfig {
        model: model.to_string(),
        api_key_env: key_env.to_string(),
        ..Default::default()
    };
    if let Ok(url) = std::env::var(base_env) {
        if !url.is_empty() {
            cfg.base_url = url;
        }
    }
    cfg
}

/// `offline`, `mock:<file>` or `http`. `seed` only affects the offline provider.
pub fn chat_provider(global: &Global, space: &ParameterSpace, seed: u64) -> CliResult<Box<dyn ChatProvider>> {
    let spec = global.chat.as_str();
    if spec == "offline" {
        return Ok(Box::new(OfflineChatProvider::new(space.clone(), seed)));
    }
    if spec == "http" {
        if global.chat_model.is_empty() {
            return Err(Failure::usage("--chat http needs --chat-model"));
        }
        let cfg = http_config("CHAT_BASE_URL", "CHAT_API_KEY", &global.chat_model);
        return Ok(Box::new(HttpChatProvider::new(cfg)));
    }
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Box::new(ScriptedChatProvider::load(Path::new(path))?));
    }
    Err(Failure::usage(format!(
        "unknown chat provider `{spec}` (expected offline, mock:<file> or http)"
    )))
}

/// `local[:dim]`, `mock:<file>` or `http`.
pub fn embedding_provider(global: &Global) -> CliResult<Box<dyn EmbeddingProvider>> {
    let spec = global.embed.as_str();
    if spec == "local" {
        return Ok(Box::new(LocalEmbeddingProvider {
            dim: DEFAULT_FALLBACK_DIM,
        }));
    }
    if let Some(d) = spec.strip_prefix("local:") {
        let dim: usize = d
            .parse()
            .map_err(|_| Failure::usage(format!("bad embedding dimension `{d}`")))?;
        if dim < MIN_FALLBACK_DIM {
            return Err(Failure::usage(format!(
                "embedding dimension must be at least {MIN_FALLBACK_DIM}"
            )));
        }
        return Ok(Box::new(LocalEmbeddingProvider { dim }));
    }
    if spec == "http" {
        if global.embed_model.is_empty() {
            return Err(Failure::usage("--embed http needs --embed-model"));
        }
        let cfg = http_config("EMBED_BASE_URL", "EMBED_API_KEY", &global.embed_model);
        return Ok(Box::new(HttpEmbeddingProvider::new(cfg)));
    }
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Box::new(ScriptedEmbeddingProvider::load(Path::new(path))?));
    }
    Err(Failure::usage(format!(
        "unknown embedding provider `{spec}` (expected local[:dim], mock:<file> or http)"
    )))
}

pub fn flow_backend(args: &BackendArgs, space: &ParameterSpace) -> CliResult<Arc<dyn FlowBackend>> {
    match args.backend.as_str() {
        "synthetic" => Ok(Arc::new(SyntheticDesign::generate(
            args.synthetic_seed,
            space.len(),
            args.synthetic_pairs,
        ))),
        "command" => {
            let cmd = args
                .command
                .as_deref()
                .ok_or_else(|| Failure::usage("--backend command needs --command"))?;
            Ok(Arc::new(SubprocessBackend::new(cmd, &args.work_dir)))
        }
        other => Err(Failure::usage(format!(
            "unknown backend `{other}` (expected synthetic or command)"
        ))),
    }
}
