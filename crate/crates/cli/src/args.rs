//! Flag parsing: `<subcommand> [--key value]...` with optional `--config
//! FILE` defaults. Values given on the command line override config-file
//! entries; keys are flag names with `-` mapped to `_`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lamlab_core::io::Manifest;
use lamlab_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct Args {
    pub subcommand: String,
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Args {
    pub fn parse(mut argv: Vec<String>) -> Result<Args> {
        if argv.is_empty() {
            return Err(Error::config(
                "missing subcommand (gen-data | train-lam | eval-mi | probe | vp-eval | ablate | report)",
            ));
        }
        let subcommand = argv.remove(0);
        let mut values = BTreeMap::new();

        // Collect flags first so --config can be loaded before overrides.
        let mut pairs = Vec::new();
        let mut it = argv.into_iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::config(format!("expected --flag, got `{flag}`")))?
                .replace('-', "_");
            let value = it
                .next()
                .ok_or_else(|| Error::config(format!("flag --{key} needs a value")))?;
            pairs.push((key, value));
        }
        if let Some((_, path)) = pairs.iter().find(|(k, _)| k == "config") {
            let m = Manifest::read(Path::new(path))?;
            for (k, v) in m.entries() {
                if k == "stage" {
                    // Provenance marker in recorded configs, not a flag.
                    continue;
                }
                values.insert(k.replace('-', "_"), v.clone());
            }
        }
        for (k, v) in pairs {
            values.insert(k, v);
        }
        Ok(Args {
            subcommand,
            values,
            consumed: Default::default(),
        })
    }

    fn mark(&self, key: &str) {
        self.consumed.borrow_mut().insert(key.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.mark(key);
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(format!("missing required flag --{}", key.replace('_', "-"))))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| Error::config(format!("flag --{key} has unparseable value `{raw}`"))),
        }
    }

    pub fn path_or(&self, key: &str, default: &str) -> PathBuf {
        PathBuf::from(self.get(key).unwrap_or(default))
    }

    pub fn req_path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require(key)?))
    }

    /// Comma-separated u64 list.
    pub fn seeds_or(&self, key: &str, default: &[u64]) -> Result<Vec<u64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::config(format!("bad seed `{tok}` in --{key}")))
                })
                .collect(),
        }
    }

    /// Comma-separated f64 list.
    pub fn floats_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("bad float `{tok}` in --{key}")))
                })
                .collect(),
        }
    }

    /// `expert:play` fraction pair; fractions must sum to 1.
    pub fn mixture_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => {
                let (e, p) = raw
                    .split_once(':')
                    .ok_or_else(|| Error::config(format!("--{key} expects expert:play, got `{raw}`")))?;
                let expert: f64 = e
                    .parse()
                    .map_err(|_| Error::config(format!("bad expert fraction `{e}`")))?;
                let play: f64 = p
                    .parse()
                    .map_err(|_| Error::config(format!("bad play fraction `{p}`")))?;
                if (expert + play - 1.0).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "mixture fractions must sum to 1, got {expert} + {play}"
                    )));
                }
                Ok(expert)
            }
        }
    }

    /// Split `dir/name` into (dir, name).
    pub fn dataset_ref(&self, key: &str) -> Result<(PathBuf, String)> {
        let raw = self.require(key)?;
        let path = PathBuf::from(raw);
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::config(format!("--{key} needs dir/name, got `{raw}`")))?
            .to_string();
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((dir, name))
    }

    /// Reject unknown flags: every provided key must have been consumed by
    /// the subcommand that ran.
    pub fn finish(&self) -> Result<()> {
        self.mark("config");
        let consumed = self.consumed.borrow();
        for key in self.values.keys() {
            if !consumed.contains(key) {
                return Err(Error::config(format!(
                    "unknown flag --{} for subcommand `{}`",
                    key.replace('_', "-"),
                    self.subcommand
                )));
            }
        }
        Ok(())
    }
}
