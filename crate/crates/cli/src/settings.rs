//! Resolved run settings: built-in defaults, overlaid by an optional INI
//! config file, overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use geodr::error::{Error, Result};
use ini::Ini;

/// Known keys of one section with their defaults. An empty default means
/// "unset".
pub type Section = (&'static str, &'static [(&'static str, &'static str)]);

pub struct Settings {
    schema: &'static [Section],
    values: BTreeMap<(&'static str, &'static str), String>,
}

impl Settings {
    /// Apply `config` (if any) and then `overrides` on top of the defaults.
    /// Sections or keys outside `schema` are rejected.
    pub fn resolve(
        schema: &'static [Section],
        config: Option<&Path>,
        overrides: &[(&'static str, &'static str, Option<String>)],
    ) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (sec, keys) in schema {
            for (key, default) in *keys {
                values.insert((*sec, *key), (*default).to_string());
            }
        }
        if let Some(path) = config {
            let ini = Ini::load_from_file(path).map_err(|e| match e {
                ini::Error::Io(e) => Error::Io(e),
                ini::Error::Parse(e) => Error::Config(format!("{}: {e}", path.display())),
            })?;
            for (sec, props) in &ini {
                let Some(name) = sec else {
                    if let Some((k, _)) = props.iter().next() {
                        return Err(Error::Config(format!(
                            "{}: key `{k}` must be inside a [section]",
                            path.display()
                        )));
                    }
                    continue;
                };
                let Some((sname, keys)) = schema.iter().find(|(s, _)| *s == name) else {
                    return Err(Error::Config(format!("{}: unknown section [{name}]", path.display())));
                };
                for (k, v) in props.iter() {
                    let Some((kname, _)) = keys.iter().find(|(key, _)| *key == k) else {
                        return Err(Error::Config(format!("{}: unknown key `{k}` in [{name}]", path.display())));
                    };
                    values.insert((*sname, *kname), v.trim().to_string());
                }
            }
        }
        for (sec, key, v) in overrides {
            if let Some(v) = v {
                let slot = values
                    .get_mut(&(*sec, *key))
                    .unwrap_or_else(|| panic!("flag maps to unknown key {sec}.{key}"));
                *slot = v.clone();
            }
        }
        Ok(Settings { schema, values })
    }

    fn raw(&self, sec: &str, key: &str) -> &str {
        self.values
            .iter()
            .find(|((s, k), _)| *s == sec && *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("unknown key {sec}.{key}"))
    }

    pub fn opt<T: FromStr>(&self, sec: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.raw(sec, key);
        if v.is_empty() {
            return Ok(None);
        }
        v.parse()
            .map(Some)
            .map_err(|e| Error::Config(format!("[{sec}] {key} = {v:?}: {e}")))
    }

    pub fn get<T: FromStr>(&self, sec: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(sec, key)?
            .ok_or_else(|| Error::Config(format!("[{sec}] {key} is required")))
    }

    /// The resolved settings as INI text, sections and keys in schema order.
    pub fn to_ini(&self) -> String {
        let mut ini = Ini::new();
        for (sec, keys) in self.schema {
            let mut s = ini.with_section(Some(*sec));
            for (key, _) in *keys {
                s.set(*key, self.raw(sec, key));
            }
        }
        let mut out = Vec::new();
        ini.write_to(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("INI text is UTF-8")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ini())?;
        Ok(())
    }
}
