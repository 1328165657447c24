use std::path::{Path, PathBuf};

use metarank::promptc::DEFAULT_TOKEN_BUDGET;
use metarank::{BackendConfig, RerankConfig};
use serde::{Deserialize, Serialize};

/// Service configuration file. Every field is optional; command-line flags
/// and environment variables override what the file sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub index_path: Option<PathBuf>,
    pub backend: BackendConfig,
    pub rerank: RerankConfig,
    pub token_budget: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            index_path: None,
            backend: BackendConfig::default(),
            rerank: RerankConfig::default(),
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading config {}: {e}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("parsing config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.backend.validate()?;
        self.rerank.validate()?;
        anyhow::ensure!(self.token_budget > 0, "token_budget must be positive");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: ServiceConfig =
            serde_json::from_str(r#"{"port": 9000, "rerank": {"batch_size": 2}}"#).unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.rerank.batch_size, 2);
        assert_eq!(cfg.rerank.top_n, 5);
        assert_eq!(cfg.backend.dim, 384);
        assert!(cfg.validate().is_ok());
        assert!(serde_json::from_str::<ServiceConfig>(r#"{"prot": 1}"#).is_err());
    }
}
