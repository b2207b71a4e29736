//! Reports are built as JSON values; the text form is derived from the same value so the two
//! cannot disagree.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Phase};

/// Wall-clock duration per phase, in order of completion.
#[derive(Debug, Default)]
pub struct PhaseTimer {
    done: Vec<(Phase, f64)>,
}

impl PhaseTimer {
    pub fn time<T>(&mut self, phase: Phase, work: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = work();
        self.done.push((phase, start.elapsed().as_secs_f64()));
        out
    }

    fn to_value(&self) -> Value {
        let map: Map<String, Value> =
            self.done.iter().map(|(phase, secs)| (phase.to_string(), Value::from(*secs))).collect();
        Value::Object(map)
    }
}

/// Tool identification plus, unless `deterministic`, a timestamp and phase timings.
pub fn metadata(command: &str, deterministic: bool, timer: &PhaseTimer) -> Value {
    let mut map = Map::new();
    map.insert("tool".into(), "stfit".into());
    map.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    map.insert("command".into(), command.into());
    if !deterministic {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        map.insert("unix_time".into(), now.into());
        map.insert("timings_s".into(), timer.to_value());
    }
    Value::Object(map)
}

pub fn to_value<T: Serialize>(item: &T) -> Value {
    serde_json::to_value(item).expect("report types serialize to JSON")
}

/// One `dotted.key: value` line per leaf, keys in sorted order.
pub fn to_text(report: &Value) -> String {
    let mut out = String::new();
    flatten(report, String::new(), &mut out);
    out
}

fn flatten(value: &Value, key: String, out: &mut String) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                let child = if key.is_empty() { k.clone() } else { format!("{key}.{k}") };
                flatten(v, child, out);
            }
        }
        Value::Array(items) if items.iter().any(|v| v.is_object() || v.is_array()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(v, format!("{key}[{i}]"), out);
            }
        }
        Value::String(s) => out.push_str(&format!("{key}: {s}\n")),
        leaf => out.push_str(&format!("{key}: {leaf}\n")),
    }
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, report: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).expect("JSON values always serialize");
    text.push('\n');
    write_file(path, text)
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}
