//! Layered settings: command-line flags, then the command's table in the
//! TOML file (`[fbm-sim]`, `[distance]`, ...), then the file's top level.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use toml::{Table, Value};

/// Invalid or missing settings; maps to exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: String) -> Result<T, ConfigError> {
    Err(ConfigError(msg))
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Hurst index H.
    #[arg(long)]
    pub hurst: Option<f64>,
    /// Number of grid cells n on [0, 1].
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Vector field family (identity, const-sigma, sin-perturbed).
    #[arg(long)]
    pub field: Option<String>,
    /// Field parameter override, repeatable.
    #[arg(long = "field-param", value_name = "K=V")]
    pub field_param: Vec<String>,
    /// Start point, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Target point, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    /// Sweep radii, comma-separated.
    #[arg(long)]
    pub radii: Option<String>,
    /// Horizons, comma-separated.
    #[arg(long)]
    pub t_list: Option<String>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub struct Settings {
    command: &'static str,
    flags: Table,
    section: Table,
    top: Table,
}

fn parse_list(key: &str, text: &str) -> Result<Value, ConfigError> {
    let items: Result<Vec<Value>, _> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map(Value::Float))
        .collect();
    match items {
        Ok(v) if !v.is_empty() => Ok(Value::Array(v)),
        _ => fail(format!(
            "`{key}`: expected a comma-separated list of numbers, got `{text}`"
        )),
    }
}

impl Flags {
    fn to_table(&self) -> Result<Table, ConfigError> {
        let mut t = Table::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                t.insert(k.to_string(), v);
            }
        };
        put("hurst", self.hurst.map(Value::Float));
        put("grid_n", self.grid_n.map(|v| Value::Integer(v as i64)));
        put("field", self.field.clone().map(Value::String));
        put("count", self.count.map(|v| Value::Integer(v as i64)));
        put("seed", self.seed.map(|v| Value::Integer(v as i64)));
        put("threads", self.threads.map(|v| Value::Integer(v as i64)));
        put(
            "out_dir",
            self.out_dir
                .as_ref()
                .map(|p| Value::String(p.display().to_string())),
        );
        for (k, v) in [
            ("x", &self.x),
            ("y", &self.y),
            ("radii", &self.radii),
            ("t_list", &self.t_list),
        ] {
            if let Some(text) = v {
                t.insert(k.to_string(), parse_list(k, text)?);
            }
        }
        if !self.field_param.is_empty() {
            let mut params = Table::new();
            for kv in &self.field_param {
                let Some((k, v)) = kv.split_once('=') else {
                    return fail(format!("`field-param`: expected K=V, got `{kv}`"));
                };
                let value: f64 = v.trim().parse().map_err(|_| {
                    ConfigError(format!("`field-param`: `{k}` needs a number, got `{v}`"))
                })?;
                params.insert(k.trim().to_string(), Value::Float(value));
            }
            t.insert("field_params".into(), Value::Table(params));
        }
        Ok(t)
    }
}

impl Settings {
    /// `file` is read when given; otherwise `fracdens.toml` in the working
    /// directory is used if present.
    pub fn load(
        command: &'static str,
        file: Option<&Path>,
        flags: &Flags,
    ) -> Result<Self, ConfigError> {
        let implicit = PathBuf::from("fracdens.toml");
        let path = match file {
            Some(p) => Some(p.to_path_buf()),
            None => implicit.exists().then_some(implicit),
        };
        let mut top = match &path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| ConfigError(format!("config {}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        let section = match top.remove(command) {
            Some(Value::Table(t)) => t,
            Some(_) => return fail(format!("config key `{command}` must be a table")),
            None => Table::new(),
        };
        Ok(Self {
            command,
            flags: flags.to_table()?,
            section,
            top,
        })
    }

    #[cfg(test)]
    pub fn from_tables(command: &'static str, flags: Table, top: Table) -> Self {
        let mut top = top;
        let section = match top.remove(command) {
            Some(Value::Table(t)) => t,
            _ => Table::new(),
        };
        Self {
            command,
            flags,
            section,
            top,
        }
    }

    fn lookup(&self, key: &str) -> Option<&Value> {
        self.flags
            .get(key)
            .or_else(|| self.section.get(key))
            .or_else(|| self.top.get(key))
    }

    fn missing(&self, key: &str) -> ConfigError {
        ConfigError(format!(
            "missing required key `{key}` for `{}` (set it in the config file or pass --{})",
            self.command,
            key.replace('_', "-")
        ))
    }

    fn require(&self, key: &str) -> Result<&Value, ConfigError> {
        self.lookup(key).ok_or_else(|| self.missing(key))
    }

    fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => fail(format!("`{key}`: expected a number, got {v}")),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        Self::as_f64(key, self.require(key)?)
    }

    fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => fail(format!("`{key}`: expected a non-negative integer, got {v}")),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        Self::as_u64(key, self.require(key)?)
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        Ok(self.u64(key)? as usize)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.lookup(key) {
            Some(v) => Ok(Self::as_u64(key, v)? as usize),
            None => Ok(default),
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.lookup(key)
            .map(|v| Ok(Self::as_u64(key, v)? as usize))
            .transpose()
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.lookup(key) {
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => fail(format!("`{key}`: expected true or false, got {v}")),
            None => Ok(default),
        }
    }

    pub fn string(&self, key: &str) -> Result<String, ConfigError> {
        match self.require(key)? {
            Value::String(s) => Ok(s.clone()),
            v => fail(format!("`{key}`: expected a string, got {v}")),
        }
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.opt_list(key)?.ok_or_else(|| self.missing(key))
    }

    pub fn opt_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.lookup(key) {
            None => Ok(None),
            Some(Value::Array(items)) if !items.is_empty() => items
                .iter()
                .map(|v| Self::as_f64(key, v))
                .collect::<Result<_, _>>()
                .map(Some),
            Some(v) => fail(format!(
                "`{key}`: expected a non-empty list of numbers, got {v}"
            )),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.string(key).map(PathBuf::from)
    }

    /// `field_params` from the file, with per-key flag overrides.
    pub fn field_params(&self) -> Result<BTreeMap<String, f64>, ConfigError> {
        let mut out = BTreeMap::new();
        for layer in [&self.top, &self.section, &self.flags] {
            match layer.get("field_params") {
                None => {}
                Some(Value::Table(t)) => {
                    for (k, v) in t {
                        out.insert(k.clone(), Self::as_f64(&format!("field_params.{k}"), v)?);
                    }
                }
                Some(v) => return fail(format!("`field_params`: expected a table, got {v}")),
            }
        }
        Ok(out)
    }

    /// H, checked against `(lo, 1)` with the field named in the message.
    pub fn hurst(&self, lo: f64, lo_text: &str) -> Result<fracdens::Hurst, ConfigError> {
        let h = self.f64("hurst")?;
        if !(h > lo && h < 1.0) {
            return fail(format!(
                "invalid `hurst`: H = {h} must lie in ({lo_text}, 1)"
            ));
        }
        fracdens::Hurst::new(h).map_err(|e| ConfigError(format!("invalid `hurst`: {e}")))
    }
}
