//! Flat `key = value` configuration text over a serde struct's defaults.
//! `#` starts a comment; values parse as bool, integer, float or string.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

fn value_of(raw: &str) -> serde_json::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return b.into();
    }
    if let Ok(u) = raw.parse::<u64>() {
        return u.into();
    }
    if let Ok(f) = raw.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(f) {
            return serde_json::Value::Number(n);
        }
    }
    raw.into()
}

pub fn to_kv<T: Serialize>(title: &str, cfg: &T) -> String {
    let v = serde_json::to_value(cfg).expect("config serialises");
    let mut out = format!("# {title}\n");
    for (k, val) in v.as_object().expect("config is a struct") {
        let text = match val {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => continue,
            other => other.to_string(),
        };
        out.push_str(&format!("{k} = {text}\n"));
    }
    out
}

/// Apply `text` over `base`. Unknown keys are rejected with their line.
pub fn from_kv_over<T: Serialize + DeserializeOwned>(base: &T, text: &str, origin: &Path) -> Result<T> {
    let mut map = serde_json::to_value(base).expect("config serialises");
    let obj = map.as_object_mut().expect("config is a struct");
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(origin, format!("line {}: expected key = value", no + 1)));
        };
        let k = k.trim();
        if !obj.contains_key(k) {
            return Err(Error::parse(origin, format!("line {}: unknown key {k}", no + 1)));
        }
        obj.insert(k.to_string(), value_of(v.trim()));
    }
    serde_json::from_value(map).map_err(|e| Error::parse(origin, e.to_string()))
}

pub fn from_kv<T: Serialize + DeserializeOwned + Default>(text: &str, origin: &Path) -> Result<T> {
    from_kv_over(&T::default(), text, origin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Demo {
        rate: f64,
        count: usize,
        name: String,
        on: bool,
    }

    #[test]
    fn round_trip_and_errors() {
        let d = Demo {
            rate: 0.25,
            count: 3,
            name: "x".into(),
            on: true,
        };
        let text = to_kv("demo", &d);
        assert_eq!(from_kv::<Demo>(&text, Path::new("d")).unwrap(), d);
        let err = from_kv::<Demo>("count = 2\nbogus = 1\n", Path::new("d.cfg")).unwrap_err();
        assert!(err.to_string().contains("line 2: unknown key bogus"), "{err}");
        let f: Demo = from_kv("rate = 1  # integer text into a float\n", Path::new("d")).unwrap();
        assert_eq!(f.rate, 1.0);
    }
}
