//! Command options: TOML config sections overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::error::CliError;

/// Declares an options record whose every field is optional, both as a flag and
/// as a TOML key, together with `overlay` (flags win over the config file).
macro_rules! options {
    ($(#[$sm:meta])* $name:ident { $( $(#[$m:meta])* $field:ident : $ty:ty ),* $(,)? }) => {
        $(#[$sm])*
        #[derive(clap::Args, serde::Serialize, serde::Deserialize, Default, Debug, Clone, PartialEq)]
        #[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
        pub struct $name {
            $( $(#[$m])* #[arg(long)] pub $field: Option<$ty>, )*
        }

        impl $name {
            pub fn overlay(self, base: Self) -> Self {
                Self { $( $field: self.$field.or(base.$field), )* }
            }
        }
    };
}

pub(crate) use options;

options!(
    /// Flags shared by every command.
    Global {
        /// PRNG seed for training and random search.
        seed: u64,
        /// Worker threads; 1 gives bit-reproducible output including timings.
        threads: usize,
        /// Output directory.
        out: PathBuf,
    }
);

/// Parsed config file: global keys at top level, one table per command.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub table: toml::Table,
    pub path: Option<PathBuf>,
    pub text: Option<String>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(ConfigFile { table, path: Some(path.to_path_buf()), text: Some(text) })
    }

    pub fn global(&self) -> Result<Global, CliError> {
        let mut top = self.table.clone();
        top.retain(|_, v| !v.is_table());
        self.decode(toml::Value::Table(top), "top level")
    }

    pub fn section<T: DeserializeOwned + Default>(&self, name: &str) -> Result<T, CliError> {
        match self.table.get(name) {
            None => Ok(T::default()),
            Some(v) => self.decode(v.clone(), name),
        }
    }

    fn decode<T: DeserializeOwned>(&self, v: toml::Value, what: &str) -> Result<T, CliError> {
        let where_ = self.path.as_deref().map_or("config".to_string(), |p| p.display().to_string());
        v.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("{where_} [{what}]: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    options!(Probe { count: usize, name: String });

    #[test]
    fn flags_override_config() {
        let cfg = ConfigFile { table: "seed = 4\n[probe]\ncount = 3\nname = \"a\"\n".parse().unwrap(), ..ConfigFile::default() };
        let base: Probe = cfg.section("probe").unwrap();
        let flags = Probe { count: Some(9), name: None };
        assert_eq!(flags.overlay(base), Probe { count: Some(9), name: Some("a".into()) });
        assert_eq!(cfg.global().unwrap().seed, Some(4));
    }

    #[test]
    fn unknown_keys_rejected() {
        let cfg = ConfigFile { table: "[probe]\ncolor = 1\n".parse().unwrap(), ..ConfigFile::default() };
        assert!(cfg.section::<Probe>("probe").is_err());
    }
}
