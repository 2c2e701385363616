//! Scenarios bundled with the library.

use super::{parse_scenario_with, Scenario, ScenarioError, ScenarioErrors};

pub const FIXTURE_NAMES: [&str; 11] = [
    "fig3_1", "fig3_12", "fig3_15", "fig3_17", "fig3_23", "fig3_25", "fig4_2", "fig5_1", "fig5_8", "fig5_12", "appC2",
];

const APPC2_WIND: &str = include_str!("../../fixtures/appC2_wind.csv");

pub fn fixture_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3_1" => include_str!("../../fixtures/fig3_1.scn"),
        "fig3_12" => include_str!("../../fixtures/fig3_12.scn"),
        "fig3_15" => include_str!("../../fixtures/fig3_15.scn"),
        "fig3_17" => include_str!("../../fixtures/fig3_17.scn"),
        "fig3_23" => include_str!("../../fixtures/fig3_23.scn"),
        "fig3_25" => include_str!("../../fixtures/fig3_25.scn"),
        "fig4_2" => include_str!("../../fixtures/fig4_2.scn"),
        "fig5_1" => include_str!("../../fixtures/fig5_1.scn"),
        "fig5_8" => include_str!("../../fixtures/fig5_8.scn"),
        "fig5_12" => include_str!("../../fixtures/fig5_12.scn"),
        "appC2" => include_str!("../../fixtures/appC2.scn"),
        _ => return None,
    })
}

/// Parses a bundled scenario; its `series_file` references resolve to the
/// bundled data files.
pub fn load_fixture(name: &str) -> Result<Scenario, ScenarioErrors> {
    let text = fixture_text(name).ok_or_else(|| {
        ScenarioErrors(vec![ScenarioError {
            line: None,
            location: String::new(),
            message: format!("unknown fixture `{name}` (available: {})", FIXTURE_NAMES.join(", ")),
        }])
    })?;
    parse_scenario_with(text, &|file: &str| match file {
        "appC2_wind.csv" => Ok(APPC2_WIND.to_string()),
        other => Err(format!("no bundled data file `{other}`")),
    })
}
