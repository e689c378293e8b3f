#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use reckon::model::ProgramModel;
use reckon::modelio::load_model;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn load_fixture(name: &str) -> ProgramModel {
    load_model(&fixture_text(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn reckon_bin() -> &'static str {
    env!("CARGO_BIN_EXE_reckon")
}
