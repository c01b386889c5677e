//! Layered run configuration: defaults, then a `key = value` file, then
//! flags. A command's keys may be spread over two structs; each line of the
//! file goes to whichever struct owns its key.

use std::collections::BTreeSet;
use std::path::Path;

use lumenlab_core::kvconfig::{from_kv_over, to_kv};
use lumenlab_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const ECHO_FILE: &str = "config.kv";

fn keys_of<T: Serialize>(v: &T) -> BTreeSet<String> {
    serde_json::to_value(v)
        .expect("config serialises")
        .as_object()
        .expect("config is a struct")
        .keys()
        .cloned()
        .collect()
}

/// Split `text` between `a` and `b`, keeping line numbers, and apply each
/// part over its defaults.
pub fn layered<A, B>(a: A, b: B, text: Option<&str>, origin: &Path) -> Result<(A, B)>
where
    A: Serialize + DeserializeOwned,
    B: Serialize + DeserializeOwned,
{
    let Some(text) = text else {
        return Ok((a, b));
    };
    let (ka, kb) = (keys_of(&a), keys_of(&b));
    let (mut ta, mut tb) = (String::new(), String::new());
    for (no, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        let key = body.split_once('=').map(|(k, _)| k.trim().to_string());
        let (to_a, to_b) = match key {
            None => (line, line),
            Some(k) if ka.contains(&k) => (line, ""),
            Some(k) if kb.contains(&k) => ("", line),
            Some(k) => return Err(Error::parse(origin, format!("line {}: unknown key {k}", no + 1))),
        };
        ta.push_str(to_a);
        ta.push('\n');
        tb.push_str(to_b);
        tb.push('\n');
    }
    Ok((from_kv_over(&a, &ta, origin)?, from_kv_over(&b, &tb, origin)?))
}

pub fn read_config(path: Option<&Path>) -> Result<Option<String>> {
    path.map(|p| std::fs::read_to_string(p).map_err(|e| Error::io(p, e)))
        .transpose()
}

/// Write the resolved configuration to `out/config.kv`.
pub fn echo<A: Serialize, B: Serialize>(out: &Path, command: &str, a: &A, b: Option<&B>) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut text = to_kv(&format!("lumenlab {command}: run settings"), a);
    if let Some(b) = b {
        text.push_str(&to_kv("parameters", b));
    }
    let path = out.join(ECHO_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
