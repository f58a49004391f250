use std::path::Path;

use spdmbi_core::states::{dicke_state, ghz_state, x_polarized};
use spdmbi_core::{PureState, SpinSystem};

use crate::error::{config, CliError};

pub const DEFAULT_INPUT: &str = "x-polarized";

/// Resolves an input-state selector such as `dicke:+J` or `custom:psi.json`.
pub fn parse_input(system: SpinSystem, selector: &str) -> Result<PureState, CliError> {
    let (kind, arg) = match selector.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (selector, None),
    };
    let state = match (kind.to_ascii_lowercase().as_str(), arg) {
        ("x-polarized" | "x_polarized" | "x", None) => x_polarized(system),
        ("ghz", None) => ghz_state(system),
        ("dicke", Some(m)) => {
            let j = system.j();
            let m = match m.trim() {
                "+J" | "J" => j,
                "-J" => -j,
                other => other
                    .parse::<f64>()
                    .map_err(|_| config(format!("bad Dicke index '{other}' (use +J, -J or a number)")))?,
            };
            dicke_state(system, m)?
        }
        ("custom", Some(path)) => PureState::read_json(system, Path::new(path))?,
        _ => {
            return Err(config(format!(
                "unknown input '{selector}' (x-polarized, ghz, dicke:+J, dicke:-J, dicke:<m>, custom:<file>)"
            )))
        }
    };
    Ok(state)
}
