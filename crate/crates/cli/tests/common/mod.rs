//! Shared fixtures for the CLI integration tests: a synthetic feature
//! corpus on disk and helpers for running the binary.

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asc_core::{derived_rng, write_feature_matrix, FeatureMatrix};
use rand::Rng;

pub fn asc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_asc"))
}

pub fn run<S: AsRef<OsStr>>(args: &[S]) -> Output {
    asc().args(args).output().expect("binary runs")
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        output.status.code(),
        stdout(output),
        stderr(output)
    );
}

/// Shape of a synthetic corpus. Classes are separable three ways: a level
/// offset (survives raw and temporal averaging), and a class-dependent
/// temporal pattern (survives background subtraction).
pub struct CorpusSpec {
    pub classes: usize,
    pub recordings_per_class: usize,
    pub segments_per_recording: usize,
    pub bins: usize,
    pub frames: usize,
    pub locations: usize,
    /// Blank out every Nth segment's label when set.
    pub unlabeled_every: Option<usize>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            classes: 3,
            recordings_per_class: 4,
            segments_per_recording: 3,
            bins: 4,
            frames: 6,
            locations: 6,
            unlabeled_every: None,
            seed: 42,
        }
    }
}

/// Write `features/*.ascf` plus `manifest.csv` under `dir` and return the
/// manifest path.
pub fn make_corpus(dir: &Path, spec: &CorpusSpec) -> PathBuf {
    let features_dir = dir.join("features");
    std::fs::create_dir_all(&features_dir).expect("create features dir");
    let mut rng = derived_rng(spec.seed, "corpus");
    let mut manifest = String::from("segment_id,recording_id,location_id,scene_label,feature_path\n");
    let mut segment_counter = 0usize;
    for class in 0..spec.classes {
        for rec in 0..spec.recordings_per_class {
            let recording_id = format!("c{class}r{rec:02}");
            let location = (class * spec.recordings_per_class + rec) % spec.locations;
            for seg in 0..spec.segments_per_recording {
                let segment_id = format!("{recording_id}s{seg:02}");
                let mut values = Vec::with_capacity(spec.bins * spec.frames);
                for _bin in 0..spec.bins {
                    for frame in 0..spec.frames {
                        let level = 3.0 * class as f64;
                        let pattern = ((frame * (class + 1)) % 4) as f64 * 0.8;
                        let noise: f64 = rng.random_range(-0.5..0.5);
                        values.push(level + pattern + noise);
                    }
                }
                let matrix = FeatureMatrix::new(spec.bins, spec.frames, values).expect("shape");
                let feature_path = format!("features/{segment_id}.ascf");
                write_feature_matrix(&matrix, &dir.join(&feature_path)).expect("write features");
                let label = match spec.unlabeled_every {
                    Some(n) if segment_counter % n == n - 1 => String::new(),
                    _ => format!("scene{class}"),
                };
                manifest.push_str(&format!(
                    "{segment_id},{recording_id},loc{location},{label},{feature_path}\n"
                ));
                segment_counter += 1;
            }
        }
    }
    let manifest_path = dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).expect("write manifest");
    manifest_path
}
