//! Sectioned `key = value` scenario text.
//!
//! ```text
//! # comment
//! [sim]
//! t_end = 15
//! [machine.sg1]
//! mode = const_power
//! p_mech = 0.5e6
//! ```

use std::collections::HashSet;
use std::path::Path;

use super::{
    apply_event_key, apply_grid, apply_load, apply_machine, apply_sim, apply_wind, event_from_draft,
    fixtures, EventDraft, GovernorKind, GridSpec, LoadSpec, MachineSpec, Scenario, ScenarioError,
    ScenarioErrors, WindSeries, WindSpec,
};
use crate::network::{GridSourceParams, RLLoadParams};

/// Reads the contents of a file named in a scenario (`series_file`).
pub type Resolver<'a> = dyn Fn(&str) -> Result<String, String> + 'a;

enum Target {
    Sim,
    Grid,
    Machine(usize),
    Load(usize),
    Wind(usize),
    Event(usize),
    Skip,
}

struct Section {
    name: String,
    line: usize,
    keys: HashSet<String>,
}

/// Parses with `series_file` paths read relative to the working directory.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioErrors> {
    parse_scenario_with(text, &|path: &str| std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}")))
}

pub fn parse_scenario_with(text: &str, resolve: &Resolver<'_>) -> Result<Scenario, ScenarioErrors> {
    let mut sc = Scenario::default();
    let mut errors: Vec<ScenarioError> = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    let mut drafts: Vec<(String, usize, EventDraft)> = Vec::new();
    let mut target = Target::Skip;
    let err = |line: usize, location: &str, message: String| ScenarioError {
        line: Some(line),
        location: location.to_string(),
        message,
    };

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let Some(name) = header.strip_suffix(']').map(str::trim) else {
                errors.push(err(line, "", format!("malformed section header `{content}`")));
                target = Target::Skip;
                continue;
            };
            if sections.iter().any(|s| s.name == name) {
                errors.push(err(line, name, format!("duplicate section [{name}]")));
                target = Target::Skip;
                continue;
            }
            let (kind, id) = match name.split_once('.') {
                Some((kind, id)) => (kind, Some(id)),
                None => (name, None),
            };
            target = match (kind, id) {
                ("sim", None) => Target::Sim,
                ("grid", None) => {
                    sc.grid = Some(GridSpec { id: "grid".into(), params: GridSourceParams::default(), connected: true });
                    Target::Grid
                }
                ("machine", Some(id)) if valid_id(id) => {
                    sc.machines.push(MachineSpec::new(id));
                    Target::Machine(sc.machines.len() - 1)
                }
                ("load", Some(id)) if valid_id(id) => {
                    sc.loads.push(LoadSpec { id: id.into(), params: RLLoadParams { r: 0.0, l: 0.0, connected: true } });
                    Target::Load(sc.loads.len() - 1)
                }
                ("wind", Some(id)) if valid_id(id) => {
                    sc.winds.push(WindSpec::new(id));
                    Target::Wind(sc.winds.len() - 1)
                }
                ("event", Some(id)) if valid_id(id) => {
                    drafts.push((id.to_string(), line, EventDraft::default()));
                    Target::Event(drafts.len() - 1)
                }
                _ => {
                    errors.push(err(line, name, format!("unknown section [{name}]")));
                    Target::Skip
                }
            };
            if !matches!(target, Target::Skip) {
                sections.push(Section { name: name.to_string(), line, keys: HashSet::new() });
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(err(line, "", format!("expected `key = value`, found `{content}`")));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if matches!(target, Target::Skip) {
            if sections.is_empty() {
                errors.push(err(line, "", format!("`{key}` appears before any section")));
            }
            continue;
        }
        let section = sections.last_mut().expect("section open");
        if !section.keys.insert(key.to_string()) {
            errors.push(err(line, &section.name, format!("duplicate key `{key}`")));
            continue;
        }
        let result = match target {
            Target::Sim => apply_sim(&mut sc.sim, key, value),
            Target::Grid => apply_grid(sc.grid.as_mut().expect("grid section"), key, value),
            Target::Machine(i) => apply_machine(&mut sc.machines[i], key, value),
            Target::Load(i) => apply_load(&mut sc.loads[i], key, value),
            Target::Wind(i) if key == "series_file" => resolve(value)
                .and_then(|text| WindSeries::from_csv(&text))
                .map(|s| sc.winds[i].series = Some(s)),
            Target::Wind(i) => apply_wind(&mut sc.winds[i], key, value),
            Target::Event(i) => apply_event_key(&mut drafts[i].2, key, value),
            Target::Skip => Ok(()),
        };
        if let Err(message) = result {
            errors.push(err(line, &section.name, message));
        }
    }

    let has = |name: &str, key: &str| sections.iter().any(|s| s.name == name && s.keys.contains(key));
    let header_line = |name: &str| sections.iter().find(|s| s.name == name).map(|s| s.line);
    for m in sc.machines.iter_mut() {
        let name = format!("machine.{}", m.id);
        if !has(&name, "f0") {
            m.droop.f0 = m.params.f_rated;
        }
        if !has(&name, "v0") {
            m.droop.v0_ll = m.params.v_rated_ll;
        }
        match m.governor {
            GovernorKind::ConstPower if !has(&name, "p_mech") => errors.push(ScenarioError {
                line: header_line(&name),
                location: name.clone(),
                message: "const_power mode needs `p_mech`".into(),
            }),
            GovernorKind::Droop if !has(&name, "p_mech") => m.p_mech = m.droop.p_nominal,
            _ => {}
        }
    }
    for l in &sc.loads {
        let name = format!("load.{}", l.id);
        if !has(&name, "r") && !has(&name, "l") {
            errors.push(ScenarioError {
                line: header_line(&name),
                location: name.clone(),
                message: "load needs `r` and/or `l`".into(),
            });
        }
    }
    for (label, line, d) in &drafts {
        match event_from_draft(label, d) {
            Ok(e) => sc.events.push(e),
            Err(msgs) => errors.extend(msgs.into_iter().map(|m| ScenarioError {
                line: Some(*line),
                location: format!("event.{label}"),
                message: m,
            })),
        }
    }
    sc.sort_events();

    for mut e in sc.validate() {
        e.line = header_line(&e.location).or_else(|| {
            let suffix = format!(".{}", e.location);
            sections.iter().rev().find(|s| s.name.ends_with(&suffix)).map(|s| s.line)
        });
        if !errors.iter().any(|x| x.message == e.message && x.location == e.location) {
            errors.push(e);
        }
    }
    if errors.is_empty() {
        Ok(sc)
    } else {
        errors.sort_by_key(|e| e.line.unwrap_or(0));
        Err(ScenarioErrors(errors))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Loads a scenario file, or a bundled fixture when no such file exists.
/// `series_file` paths resolve relative to the scenario file.
pub fn load_scenario(path_or_fixture: &str) -> Result<Scenario, ScenarioErrors> {
    let path = Path::new(path_or_fixture);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioErrors(vec![ScenarioError { line: None, location: String::new(), message: format!("{path_or_fixture}: {e}") }])
        })?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        return parse_scenario_with(&text, &|file: &str| {
            let p = base.join(file);
            std::fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
        });
    }
    if fixtures::fixture_text(path_or_fixture).is_some() {
        return fixtures::load_fixture(path_or_fixture);
    }
    Err(ScenarioErrors(vec![ScenarioError {
        line: None,
        location: String::new(),
        message: format!("`{path_or_fixture}` is neither a readable file nor a bundled fixture"),
    }]))
}
