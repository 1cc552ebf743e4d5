//! Per-command manifests chaining artifacts to the config that produced them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpstreamRef {
    pub command: String,
    pub manifest_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub overrides: BTreeMap<String, String>,
    pub upstream: Vec<UpstreamRef>,
    pub outputs: Vec<FileRef>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// State shared by every command of one invocation.
pub struct Run {
    pub cfg: LoadedConfig,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub overrides: BTreeMap<String, String>,
}

impl Run {
    pub fn new(cfg: LoadedConfig, out_dir: Option<PathBuf>, seed: Option<u64>) -> CliResult<Self> {
        let mut overrides = BTreeMap::new();
        if let Some(s) = seed {
            overrides.insert("seed".to_string(), s.to_string());
        }
        let out_dir = match out_dir {
            Some(d) => d,
            None => cfg.resolve(&cfg.config.output_dir),
        };
        std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
        Ok(Run {
            seed: seed.or(cfg.config.seed),
            cfg,
            out_dir,
            overrides,
        })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// The seed; randomized commands refuse to run without one.
    pub fn require_seed(&self, command: &str) -> CliResult<u64> {
        self.seed.ok_or_else(|| CliError::Config {
            path: self.cfg.path.clone(),
            message: format!("`{command}` is randomized and needs `seed = <integer>` in the config or --seed"),
        })
    }

    /// `#` header lines for CSV outputs.
    pub fn header(&self, command: &str) -> Vec<String> {
        let mut h = vec![
            format!("seiscox {VERSION} {command}"),
            format!("config_hash: {}", self.cfg.hash),
        ];
        match self.seed {
            Some(s) => h.push(format!("seed: {s}")),
            None => h.push("seed: none".to_string()),
        }
        h
    }

    fn manifest_path(&self, command: &str) -> PathBuf {
        self.out(&format!("{command}.manifest.json"))
    }

    /// Load an upstream manifest, check it was produced under the same config,
    /// and that its outputs are unchanged.
    pub fn upstream(&self, command: &'static str) -> CliResult<(Manifest, UpstreamRef)> {
        let path = self.manifest_path(command);
        if !path.is_file() {
            return Err(CliError::MissingUpstream {
                artifact: path,
                command,
            });
        }
        let manifest: Manifest = read_json(&path)?;
        if manifest.config_hash != self.cfg.hash {
            return Err(CliError::Mismatch(format!(
                "{} was produced with a different config (hash {}, current {}); rerun `seiscox {command}`",
                path.display(),
                manifest.config_hash,
                self.cfg.hash
            )));
        }
        for f in &manifest.outputs {
            let p = self.out(&f.path);
            if !p.is_file() {
                return Err(CliError::MissingUpstream {
                    artifact: p,
                    command,
                });
            }
            if sha256_file(&p)? != f.sha256 {
                return Err(CliError::Mismatch(format!(
                    "{} does not match the `{command}` manifest; rerun `seiscox {command}`",
                    p.display()
                )));
            }
        }
        let r = UpstreamRef {
            command: command.to_string(),
            manifest_sha256: sha256_file(&path)?,
        };
        Ok((manifest, r))
    }

    pub fn finish(&self, command: &str, upstream: Vec<UpstreamRef>, outputs: &[String]) -> CliResult<()> {
        let outputs = outputs
            .iter()
            .map(|name| {
                Ok(FileRef {
                    path: name.clone(),
                    sha256: sha256_file(&self.out(name))?,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let manifest = Manifest {
            command: command.to_string(),
            version: VERSION.to_string(),
            config_hash: self.cfg.hash.clone(),
            seed: self.seed,
            overrides: self.overrides.clone(),
            upstream,
            outputs,
        };
        write_json(&self.manifest_path(command), &manifest)?;
        log::info!("{command}: wrote {} files to {}", manifest.outputs.len(), self.out_dir.display());
        Ok(())
    }
}
