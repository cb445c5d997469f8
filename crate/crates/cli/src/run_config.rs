use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use taylorcast_core::config::KeyValues;

use crate::CliError;

pub const RUN_CONFIG_FILE: &str = "run_config.txt";

/// Parameters of one command, resolved from defaults, then the config file,
/// then flags. Saved next to the outputs so the run can be repeated.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: &'static str,
    values: KeyValues,
}

impl RunConfig {
    pub fn resolve(
        command: &'static str,
        defaults: KeyValues,
        known: &[&str],
        file: Option<&Path>,
        flags: &KeyValues,
    ) -> Result<Self, CliError> {
        let mut values = defaults;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            let parsed = KeyValues::parse(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            values.merge(&parsed);
        }
        values.merge(flags);
        values.remove("command");
        values
            .check_known(known)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self { command, values })
    }

    pub fn values(&self) -> &KeyValues {
        &self.values
    }

    pub fn set_default(&mut self, key: &str, value: impl Display) {
        if !self.values.contains(key) {
            self.values.set(key, value);
        }
    }

    pub fn values_remove(&mut self, key: &str) {
        self.values.remove(key);
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains(key)
    }

    pub fn str(&self, key: &str) -> Result<&str, CliError> {
        self.values
            .get(key)
            .ok_or_else(|| CliError::Usage(format!("{} needs `{key}`", self.command)))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.str(key)?;
        raw.parse()
            .map_err(|e| CliError::Usage(format!("{key}={raw}: {e}")))
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        let raw = self.str(key)?;
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|e| CliError::Usage(format!("{key}={raw}: {e}")))
            })
            .collect()
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        Ok(PathBuf::from(self.str("out")?))
    }

    pub fn to_text(&self) -> String {
        let mut kv = self.values.clone();
        kv.set("command", self.command);
        kv.to_text()
    }

    /// Creates the output directory and writes the resolved config into it.
    pub fn save(&self) -> Result<PathBuf, CliError> {
        let dir = self.out_dir()?;
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join(RUN_CONFIG_FILE);
        std::fs::write(&path, self.to_text())
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(text: &str) -> KeyValues {
        KeyValues::parse(text).unwrap()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.txt");
        std::fs::write(&file, "# run\nseed=3\nclips=5\n").unwrap();
        let rc = RunConfig::resolve(
            "eval",
            kv("seed=0\nclips=16\nout=x\n"),
            &["seed", "clips", "out"],
            Some(&file),
            &kv("clips=7\n"),
        )
        .unwrap();
        assert_eq!(rc.get::<u64>("seed").unwrap(), 3);
        assert_eq!(rc.get::<usize>("clips").unwrap(), 7);
        assert!(rc.to_text().contains("command=eval\n"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        let bad = RunConfig::resolve("lab", kv("out=x\n"), &["out"], None, &kv("nope=1\n"));
        assert!(matches!(bad, Err(CliError::Usage(_))));
        let rc = RunConfig::resolve(
            "lab",
            kv("out=x\nsteps=ten\n"),
            &["out", "steps"],
            None,
            &KeyValues::new(),
        )
        .unwrap();
        assert!(matches!(rc.get::<usize>("steps"), Err(CliError::Usage(_))));
        assert!(matches!(rc.str("missing"), Err(CliError::Usage(_))));
    }

    #[test]
    fn saved_config_resolves_to_itself() {
        let rc = RunConfig::resolve(
            "rollout",
            kv("out=a\nsteps=10,5,1\n"),
            &["out", "steps"],
            None,
            &KeyValues::new(),
        )
        .unwrap();
        let again = RunConfig::resolve(
            "rollout",
            KeyValues::new(),
            &["out", "steps"],
            None,
            &kv(&rc.to_text()),
        )
        .unwrap();
        assert_eq!(again.to_text(), rc.to_text());
        assert_eq!(again.list::<usize>("steps").unwrap(), vec![10, 5, 1]);
    }
}
