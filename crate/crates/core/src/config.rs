//! TOML configuration files for every binary.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

pub use crate::client::ClientConfig;
pub use crate::storage::StorageConfig;
pub use crate::system::SystemConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn save_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), ConfigError> {
    let text = toml::to_string_pretty(value).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    crate::persist::atomic_write(path, text.as_bytes()).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn storage_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StorageConfig {
            id: "s1".into(),
            data_dir: PathBuf::from("/var/lib/s1"),
            seed: 100,
            listen: "127.0.0.1:7101".parse().unwrap(),
            admin: "127.0.0.1:7201".parse().unwrap(),
            allowed_peers: vec!["127.0.0.1".parse().unwrap()],
        };
        let p = dir.path().join("s1.toml");
        save_toml(&p, &cfg).unwrap();
        let back: StorageConfig = load_toml(&p).unwrap();
        assert_eq!(back.seed, 100);
        assert_eq!(back.allowed_peers, cfg.allowed_peers);
    }

    #[test]
    fn missing_and_garbled_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.toml");
        let err = load_toml::<StorageConfig>(&p).unwrap_err();
        assert!(err.to_string().contains("x.toml"));
        fs::write(&p, "seed = \"many\"").unwrap();
        assert!(matches!(
            load_toml::<StorageConfig>(&p),
            Err(ConfigError::Parse { .. })
        ));
    }
}
