//! The same level-sensor interference with and without the protective plate.
//!
//! ```bash
//! cargo run --example level_interference
//! ```

use cyclone::controller::ControllerConfig;
use cyclone::plant::{FaultKind, FaultSpec, PlantConfig};
use cyclone::scenario::{run_scenario, Expectations, RunOptions, Scenario};

fn scenario(shield: bool) -> Scenario {
    Scenario {
        version: 1,
        name: if shield { "shielded" } else { "bare" }.into(),
        description: String::new(),
        seed: 7,
        duration_ms: 240_000,
        autostart: true,
        controller: ControllerConfig {
            level_automation_enabled: true,
            ..Default::default()
        },
        plant: PlantConfig {
            shield_installed: shield,
            ..Default::default()
        },
        faults: vec![FaultSpec::new(0, FaultKind::LevelInterference { rate: 0.2 })],
        commands: Vec::new(),
        expect: Expectations::default(),
    }
}

fn main() {
    for shield in [false, true] {
        let s = scenario(shield);
        let r = run_scenario(&s, &RunOptions::default()).unwrap().report;
        let level_alarms: Vec<_> = r.alarms.iter().filter(|a| a.code.is_level_related()).collect();
        println!(
            "{:<9} cycles={:>2} early_fill_cuts={} extensions={} level_alarms={:?} final={}",
            s.name,
            r.cycles_completed,
            r.early_fill_truncations,
            r.discharge_extensions,
            level_alarms.iter().map(|a| (a.t_ms, a.code)).collect::<Vec<_>>(),
            r.final_state.phase
        );
    }
}
