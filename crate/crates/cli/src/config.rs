//! `--config` support: a flat JSON object whose keys replace the values of
//! the same-named flags (dashes or underscores both accepted).

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub fn load(path: &Path) -> Result<Map<String, Value>> {
    match crate::read_json::<Value>(path)? {
        Value::Object(map) => Ok(map),
        _ => bail!("{}: config must be a JSON object", path.display()),
    }
}

pub fn apply<T: Serialize + DeserializeOwned>(args: T, overrides: Option<&Map<String, Value>>) -> Result<T> {
    let Some(overrides) = overrides else { return Ok(args) };
    let mut value = serde_json::to_value(&args)?;
    let fields = value.as_object_mut().context("arguments serialize to an object")?;
    for (key, v) in overrides {
        fields.insert(key.replace('-', "_"), v.clone());
    }
    serde_json::from_value(value).context("applying config file")
}
