//! Test support for the cotrain workspace: independent brute-force
//! references for every algorithm in `cotrain-core`, random generators for
//! scenarios, worlds and criteria, and access to the bundled scenarios.

pub mod collab;
pub mod decision_oracle;
pub mod gen;
pub mod hands_oracle;
pub mod marking;
pub mod scoring;

use std::path::PathBuf;

/// Directory holding the bundled scenarios and example configs.
pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// (file name, contents) of every bundled `.lora.txt` scenario, by name.
pub fn bundled_scenarios() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios directory")
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.to_string_lossy().ends_with(".lora.txt"))
        .map(|p| {
            let name = p.file_name().expect("file").to_string_lossy().into_owned();
            let text = std::fs::read_to_string(&p).expect("readable scenario");
            (name, text)
        })
        .collect();
    out.sort();
    out
}

pub fn bundled(name: &str) -> String {
    std::fs::read_to_string(scenarios_dir().join(name)).expect("bundled scenario")
}
