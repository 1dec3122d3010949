//! Canned scenarios shipped with the binary. Parameter choices are
//! documented in `scenarios/README.md`.

use mpdccp_core::{parse_scenario, ScenarioConfig};

use crate::{CliError, Result};

pub const CANNED: [(&str, &str); 10] = [
    (
        "srtt-handover",
        include_str!("../scenarios/srtt-handover.json"),
    ),
    (
        "otias-moderate",
        include_str!("../scenarios/otias-moderate.json"),
    ),
    (
        "otias-saturated",
        include_str!("../scenarios/otias-saturated.json"),
    ),
    (
        "rr-saturated",
        include_str!("../scenarios/rr-saturated.json"),
    ),
    (
        "adaptive-jump",
        include_str!("../scenarios/adaptive-jump.json"),
    ),
    ("pdv-default", include_str!("../scenarios/pdv-default.json")),
    (
        "pdv-adaptive",
        include_str!("../scenarios/pdv-adaptive.json"),
    ),
    ("pdv-otias", include_str!("../scenarios/pdv-otias.json")),
    ("pdv-srtt", include_str!("../scenarios/pdv-srtt.json")),
    (
        "delay-equalize",
        include_str!("../scenarios/delay-equalize.json"),
    ),
];

pub fn canned_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = CANNED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| CliError::UnknownScenario(name.to_string()))?;
    Ok(parse_scenario(text)?)
}

pub fn canned() -> Result<Vec<ScenarioConfig>> {
    CANNED.iter().map(|(n, _)| canned_scenario(n)).collect()
}
