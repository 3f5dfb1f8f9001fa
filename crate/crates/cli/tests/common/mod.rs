#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use listener_cli::{run_pipeline, PipelineSummary, RunConfig, StageError};

pub const TRANSCRIPTS: [&str; 8] = [
    "My cat passed away yesterday",
    "I finally got the job I interviewed for last month!",
    "The train was delayed again so I missed the whole meeting.",
    "We're thinking about moving to the coast next year.",
    "I tried baking bread this weekend and it came out like a brick.",
    "My sister just had twins, two little girls.",
    "Honestly I don't think the project is going to ship on time.",
    "Have you seen the new exhibit at the science museum?",
];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// A private copy of the fixture tree, so runs never touch checked-in files.
pub fn fixture_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures(), dir.path());
    dir
}

pub fn fixture_config(root: &Path) -> RunConfig {
    let mut config = RunConfig::default();
    config.apply_file(&root.join("pipeline.conf")).unwrap();
    config.out_dir = root.join("out");
    config
}

pub fn run_fixture(root: &Path, force: bool) -> Result<PipelineSummary, StageError> {
    run_pipeline(fixture_config(root), force)
}

/// Print one acceptance line outside the test harness's output capture.
pub fn report_line(name: &str, pass: bool, detail: &str) {
    use std::io::Write;
    let status = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance [{status}] {name}: {detail}");
    let _ = out.flush();
}
