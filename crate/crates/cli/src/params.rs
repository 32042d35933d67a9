//! Layered parameters: built-in defaults, then a JSON config file, then flags.
//!
//! Every command declares its keys in a table. The same kebab-case key is the
//! long flag, the config-file field and the manifest entry.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use roadseg::manifest::Manifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Existing file or directory read by the command.
    Input,
    /// Path written by the command.
    Output,
    Value,
}

#[derive(Debug, Clone, Copy)]
pub struct Spec {
    pub key: &'static str,
    pub default: Option<&'static str>,
    pub kind: Kind,
    pub help: &'static str,
}

pub const fn input(key: &'static str, help: &'static str) -> Spec {
    Spec {
        key,
        default: None,
        kind: Kind::Input,
        help,
    }
}

pub const fn output(key: &'static str, help: &'static str) -> Spec {
    Spec {
        key,
        default: None,
        kind: Kind::Output,
        help,
    }
}

pub const fn value(key: &'static str, default: Option<&'static str>, help: &'static str) -> Spec {
    Spec {
        key,
        default,
        kind: Kind::Value,
        help,
    }
}

/// Failure attributed to the user's input; maps to exit code 1.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

pub fn invalid(key: &str, message: impl fmt::Display) -> InputError {
    InputError(format!("invalid value for `{key}`: {message}"))
}

/// Reads a flat JSON object. Arrays of scalars become comma-separated lists.
pub fn load_config(path: &Path, known: &dyn Fn(&str) -> bool) -> Result<BTreeMap<String, String>, InputError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| invalid("config", format!("cannot read {}: {e}", path.display())))?;
    let json: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    let obj = json
        .as_object()
        .ok_or_else(|| invalid("config", "top level must be an object"))?;
    let mut out = BTreeMap::new();
    for (key, v) in obj {
        if !known(key) {
            return Err(InputError(format!("unknown config key `{key}` in {}", path.display())));
        }
        let scalar = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Ok(s.clone()),
            serde_json::Value::Number(n) => Ok(n.to_string()),
            serde_json::Value::Bool(b) => Ok(b.to_string()),
            _ => Err(invalid(key, "expected a string, number, boolean or list of those")),
        };
        let s = match v {
            serde_json::Value::Array(items) => items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(","),
            other => scalar(other)?,
        };
        out.insert(key.clone(), s);
    }
    Ok(out)
}

/// Resolved parameters of one command invocation.
#[derive(Debug, Clone)]
pub struct Params {
    pub command: &'static str,
    specs: &'static [Spec],
    values: BTreeMap<&'static str, String>,
}

impl Params {
    /// Later layers win. Keys absent from `specs` are ignored, so one config
    /// file can serve several commands.
    pub fn resolve(command: &'static str, specs: &'static [Spec], layers: &[&BTreeMap<String, String>]) -> Self {
        let mut values = BTreeMap::new();
        for spec in specs {
            let mut v = spec.default.map(str::to_string);
            for layer in layers {
                if let Some(s) = layer.get(spec.key) {
                    v = Some(s.clone());
                }
            }
            if let Some(v) = v {
                values.insert(spec.key, v);
            }
        }
        Self { command, specs, values }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(self.specs.iter().any(|s| s.key == key), "undeclared key {key}");
        self.values.get(key).map(String::as_str)
    }

    pub fn required(&self, key: &str) -> Result<&str, InputError> {
        self.raw(key)
            .ok_or_else(|| InputError(format!("missing required value `{key}` (flag --{key})")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, InputError>
    where
        T::Err: fmt::Display,
    {
        let s = self.required(key)?;
        s.trim().parse().map_err(|e| invalid(key, format!("{s:?}: {e}")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, InputError>
    where
        T::Err: fmt::Display,
    {
        let s = self.required(key)?;
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse().map_err(|e| invalid(key, format!("{p:?}: {e}"))))
            .collect()
    }

    pub fn input_path(&self, key: &str) -> Result<PathBuf, InputError> {
        let p = PathBuf::from(self.required(key)?);
        if !p.exists() {
            return Err(invalid(key, format!("{} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn input_path_opt(&self, key: &str) -> Result<Option<PathBuf>, InputError> {
        match self.raw(key) {
            Some(_) => self.input_path(key).map(Some),
            None => Ok(None),
        }
    }

    pub fn output_dir(&self, key: &str) -> Result<PathBuf, InputError> {
        let p = PathBuf::from(self.required(key)?);
        std::fs::create_dir_all(&p).map_err(|e| invalid(key, format!("cannot create {}: {e}", p.display())))?;
        Ok(p)
    }

    /// `command` first, then every resolved key in declaration order.
    pub fn manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.set("command", self.command);
        for spec in self.specs {
            if let Some(v) = self.values.get(spec.key) {
                m.set(spec.key, v);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPECS: &[Spec] = &[
        value("tau", Some("0.75"), ""),
        value("theta", Some("0.01"), ""),
        input("images", ""),
    ];

    fn layer(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = layer(&[("tau", "0.5"), ("theta", "0.2")]);
        let flags = layer(&[("theta", "0.3")]);
        let p = Params::resolve("fuse", SPECS, &[&file, &flags]);
        assert_eq!(p.parse::<f64>("tau").unwrap(), 0.5);
        assert_eq!(p.parse::<f64>("theta").unwrap(), 0.3);
        assert!(p.raw("images").is_none());
        let p = Params::resolve("fuse", SPECS, &[]);
        assert_eq!(p.parse::<f64>("tau").unwrap(), 0.75);
    }

    #[test]
    fn bad_number_names_key() {
        let flags = layer(&[("tau", "high")]);
        let p = Params::resolve("fuse", SPECS, &[&flags]);
        let e = p.parse::<f64>("tau").unwrap_err();
        assert!(e.0.contains("`tau`"), "{e}");
    }

    #[test]
    fn manifest_in_declaration_order() {
        let p = Params::resolve("fuse", SPECS, &[&layer(&[("images", "a")])]);
        assert_eq!(
            p.manifest().to_string(),
            "command=fuse\ntau=0.75\ntheta=0.01\nimages=a\n"
        );
    }
}
