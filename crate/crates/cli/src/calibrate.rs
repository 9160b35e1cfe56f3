//! `feather calibrate`: fit cost parameters to target ratios.

use std::path::Path;

use feather_core::simcore::calibrate::{calibrate, CalibrationTargets};
use feather_core::CostParams;
use serde::Deserialize;

use crate::config::{read_table, read_text};
use crate::error::CliError;

/// Targets file: optional `base` cost file plus the targets themselves.
#[derive(Debug, Clone, Deserialize)]
struct TargetsFile {
    #[serde(default)]
    base: Option<std::path::PathBuf>,
    #[serde(flatten)]
    targets: CalibrationTargets,
}

/// Read `path` and return fitted parameters.
pub fn fit_file(path: &Path) -> Result<CostParams, CliError> {
    let text = read_text(path)?;
    let file: TargetsFile =
        toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })?;
    let base = match &file.base {
        Some(b) => {
            let b = path.parent().unwrap_or(Path::new(".")).join(b);
            let mut t = toml::Table::try_from(CostParams::default()).expect("cost params serialize");
            crate::config::merge(&mut t, read_table(&b)?);
            toml::Value::Table(t)
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config { path: b.clone(), msg: e.to_string() })?
        }
        None => CostParams::default(),
    };
    calibrate(&base, &file.targets).map_err(|e| CliError::Config { path: path.to_path_buf(), msg: e.to_string() })
}

/// TOML text of `params`, loadable as a `cost_file`.
pub fn to_toml(params: &CostParams) -> String {
    toml::to_string(params).expect("cost params serialize")
}
