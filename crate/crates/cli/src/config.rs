use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, Result};

/// Reads a JSON object from `path` and writes its keys over `base`.
/// Unknown keys are rejected by the target type.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let patch: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(patch) = patch else {
        return Err(CliError::Usage(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    };
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let obj = merged.as_object_mut().expect("config is an object");
    obj.extend(patch);
    serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, to_json(value)).map_err(|e| CliError::io(path, e))
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use jex_core::TrainConfig;

    #[test]
    fn overlay_keeps_base_for_missing_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"epochs": 3, "learning_rate": 0.5}"#).unwrap();
        let c = overlay(&TrainConfig::toy(), &p).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.learning_rate, 0.5);
        assert_eq!(c.t_e, TrainConfig::toy().t_e);
    }

    #[test]
    fn overlay_rejects_unknown_keys_and_non_objects() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"epoch": 3}"#).unwrap();
        assert!(matches!(
            overlay(&TrainConfig::toy(), &p),
            Err(CliError::Usage(_))
        ));
        fs::write(&p, "[1]").unwrap();
        assert!(matches!(
            overlay(&TrainConfig::toy(), &p),
            Err(CliError::Usage(_))
        ));
        let missing = dir.path().join("nope.json");
        assert!(matches!(
            overlay(&TrainConfig::toy(), &missing),
            Err(CliError::MissingPath(p)) if p == missing
        ));
    }
}
