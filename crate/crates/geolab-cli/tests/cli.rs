//! End-to-end tests of the `geolab` binary: build, run, resume, metrics,
//! filtering, and validation, all offline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geolab::agent::trajectory::read_trajectories;
use geolab::dataset::{synthetic_instances, write_instances};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geolab"))
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../geolab/tests/fixtures")
}

fn write_config(dir: &Path, dataset: &Path, conditions: &[&str], extra: &str) -> PathBuf {
    let config_path = dir.join("run.toml");
    let conditions_toml = conditions
        .iter()
        .map(|c| format!("\"{c}\""))
        .collect::<Vec<_>>()
        .join(", ");
    let content = format!(
        r#"
dataset_path = "{dataset}"
conditions = [{conditions_toml}]
output_dir = "{out}"
seed = 13
parallelism = 2
{extra}
"#,
        dataset = dataset.display(),
        out = dir.join("out").display(),
    );
    std::fs::write(&config_path, content).unwrap();
    config_path
}

fn expect_success(output: &Output) {
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn dir_digest(dir: &Path) -> String {
    use sha2::{Digest, Sha256};
    let mut entries: Vec<PathBuf> = walk(dir);
    entries.sort();
    let mut hasher = Sha256::new();
    for path in entries {
        hasher.update(path.strip_prefix(dir).unwrap().to_string_lossy().as_bytes());
        hasher.update(std::fs::read(&path).unwrap());
    }
    format!("{:x}", hasher.finalize())
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files
}

#[test]
fn build_ecosystem_exports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    write_instances(&dataset, &synthetic_instances(3, 21)).unwrap();
    let config = write_config(dir.path(), &dataset, &["trace", "single_page"], "");

    let output = bin().args(["build-ecosystem", "--config"]).arg(&config).output().unwrap();
    expect_success(&output);

    let ecosystems = dir.path().join("out/ecosystems");
    for instance in ["synthetic-0001", "synthetic-0002", "synthetic-0003"] {
        let trace_dir = ecosystems.join(instance).join("trace");
        let pages = std::fs::read_dir(&trace_dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().map(|x| x == "md").unwrap_or(false))
            .count();
        assert_eq!(pages, 7, "trace export has one file per page");
        let single_dir = ecosystems.join(instance).join("single_page");
        let pages = std::fs::read_dir(&single_dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().map(|x| x == "md").unwrap_or(false))
            .count();
        assert_eq!(pages, 1, "single-page export has one page");
    }

    // Re-export into a fresh directory: byte-identical trees.
    let first = dir_digest(&ecosystems);
    std::fs::remove_dir_all(&ecosystems).unwrap();
    let output = bin().args(["build-ecosystem", "--config"]).arg(&config).output().unwrap();
    expect_success(&output);
    assert_eq!(first, dir_digest(&ecosystems));
}

#[test]
fn scripted_run_answers_resume_adds_no_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    let all = synthetic_instances(5, 33);
    // Interrupted run: only the first three instances exist at first.
    write_instances(&dataset, &all[..3]).unwrap();

    let script_path = dir.path().join("script.json");
    std::fs::write(
        &script_path,
        serde_json::json!([
            {"search": {"query": "{query}"}},
            {"crawl_rank": {"round": 1, "rank": 5}},
            {"search": {"query": "{name} specifications"}},
            {"crawl_rank": {"round": 2, "rank": 1}},
            {"answer": {"text": "I recommend the {name}."}}
        ])
        .to_string(),
    )
    .unwrap();
    let extra = format!(
        "[policy]\nmode = \"scripted\"\nscript_path = \"{}\"\n",
        script_path.display()
    );
    let config = write_config(dir.path(), &dataset, &["trace"], &extra);

    let output = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    expect_success(&output);

    let log = dir.path().join("out/logs/custom__trace.jsonl");
    let trajectories = read_trajectories(&log).unwrap();
    assert_eq!(trajectories.len(), 3);
    assert!(trajectories.iter().all(|t| t.final_answer.is_some()));

    // Resume with the full dataset: the three finished episodes are skipped.
    write_instances(&dataset, &all).unwrap();
    let output = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    expect_success(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("episodes run: 2"), "stdout: {stdout}");
    assert!(stdout.contains("skipped (already logged): 3"), "stdout: {stdout}");

    let trajectories = read_trajectories(&log).unwrap();
    assert_eq!(trajectories.len(), 5);
    let mut ids: Vec<_> = trajectories.iter().map(|t| t.episode_id.clone()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 5, "no duplicate episode ids after resume");
}

#[test]
fn forced_mode_marks_first_crawl() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    write_instances(&dataset, &synthetic_instances(2, 44)).unwrap();
    let config = write_config(dir.path(), &dataset, &["coordinated"], "");

    let output = bin()
        .args(["run", "--forced-first-crawl", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    expect_success(&output);

    let log = dir.path().join("out/logs/custom__coordinated.jsonl");
    for traj in read_trajectories(&log).unwrap() {
        match &traj.events[2].body {
            geolab::agent::EventBody::CrawlIssued { forced, .. } => assert!(forced),
            other => panic!("expected the forced crawl as the first crawl, got {other:?}"),
        }
    }
}

#[test]
fn metrics_command_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    write_instances(&dataset, &synthetic_instances(4, 55)).unwrap();
    let config = write_config(dir.path(), &dataset, &["trace", "single_page"], "");

    expect_success(&bin().args(["run", "--config"]).arg(&config).output().unwrap());
    let output = bin().args(["metrics", "--config"]).arg(&config).output().unwrap();
    expect_success(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("condition"), "table header on stdout: {stdout}");
    assert!(stdout.contains("trace"));

    let text = std::fs::read_to_string(dir.path().join("out/reports/metrics.txt")).unwrap();
    assert!(text.starts_with("# config:"), "provenance header embedded");
    let csv_raw = std::fs::read_to_string(dir.path().join("out/reports/metrics.csv")).unwrap();
    let reports = geolab::metrics::parse_csv_report(&csv_raw).unwrap();
    assert_eq!(reports.len(), 2);
    for report in &reports {
        assert_eq!(report.n_episodes, 4);
    }

    // Empty logs directory: header-only report, still success.
    let empty = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(empty.path().join("logs")).unwrap();
    let output = bin()
        .args(["metrics", "--config"])
        .arg(&config)
        .arg("--logs")
        .arg(empty.path().join("logs"))
        .output()
        .unwrap();
    expect_success(&output);
}

#[test]
fn filter_queries_replays_the_recorded_cassette() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    write_instances(&dataset, &synthetic_instances(1, 66)).unwrap();
    let cassette = fixtures_dir().join("safesearch_intent_cassette.json");
    let extra = format!(
        "[judges.intent]\nmode = \"cassette\"\ncassette_path = \"{}\"\n",
        cassette.display()
    );
    let config = write_config(dir.path(), &dataset, &["trace"], &extra);
    let raw = fixtures_dir().join("safesearch_raw_301.jsonl");

    let output = bin()
        .args(["filter-queries", "--config"])
        .arg(&config)
        .arg("--raw")
        .arg(&raw)
        .output()
        .unwrap();
    expect_success(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("retained: 64"), "stdout: {stdout}");
    assert!(stdout.contains("rejected: 237"), "stdout: {stdout}");

    let retained_path = dir.path().join("out/filter/safesearch_raw_301.retained.jsonl");
    let rejected_path = dir.path().join("out/filter/safesearch_raw_301.rejected.jsonl");
    assert_eq!(std::fs::read_to_string(&retained_path).unwrap().lines().count(), 64);
    assert_eq!(std::fs::read_to_string(&rejected_path).unwrap().lines().count(), 237);

    // Deterministic rerun: identical output bytes.
    let first_retained = std::fs::read(&retained_path).unwrap();
    let first_rejected = std::fs::read(&rejected_path).unwrap();
    expect_success(
        &bin()
            .args(["filter-queries", "--config"])
            .arg(&config)
            .arg("--raw")
            .arg(&raw)
            .output()
            .unwrap(),
    );
    assert_eq!(std::fs::read(&retained_path).unwrap(), first_retained);
    assert_eq!(std::fs::read(&rejected_path).unwrap(), first_rejected);

    // Empty input produces empty outputs.
    let empty_raw = dir.path().join("empty.jsonl");
    std::fs::write(&empty_raw, "").unwrap();
    let output = bin()
        .args(["filter-queries", "--config"])
        .arg(&config)
        .arg("--raw")
        .arg(&empty_raw)
        .output()
        .unwrap();
    expect_success(&output);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("out/filter/empty.retained.jsonl"))
            .unwrap()
            .lines()
            .count(),
        0
    );
}

#[test]
fn validate_flags_corrupted_exports() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    write_instances(&dataset, &synthetic_instances(1, 77)).unwrap();
    let config = write_config(dir.path(), &dataset, &["trace"], "");
    expect_success(&bin().args(["build-ecosystem", "--config"]).arg(&config).output().unwrap());

    let export_dir = dir.path().join("out/ecosystems/synthetic-0001/trace");
    let output = bin().arg("validate").arg(&export_dir).output().unwrap();
    expect_success(&output);
    assert!(String::from_utf8_lossy(&output.stdout).contains("ok"));

    // Corrupt one page body so it no longer names the product.
    let page = std::fs::read_dir(&export_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().map(|x| x == "md").unwrap_or(false))
        .unwrap();
    std::fs::write(&page, "# Replaced\n\nThis body no longer names anything relevant.").unwrap();
    let output = bin().arg("validate").arg(&export_dir).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stdout).contains("violations"));
}

#[test]
fn page_geo_run_uses_per_instance_rewritten_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("instances.jsonl");
    let instances = synthetic_instances(2, 88);
    write_instances(&dataset, &instances).unwrap();

    let bodies = dir.path().join("rewritten");
    std::fs::create_dir_all(&bodies).unwrap();
    for instance in &instances {
        std::fs::write(
            bodies.join(format!("{}.md", instance.instance_id)),
            format!(
                "# {name}\n\nExternally rewritten copy positioning the {name} as the clear \
                 category leader for value-focused buyers.",
                name = instance.product.name
            ),
        )
        .unwrap();
    }
    let extra = format!("page_geo_body_path = \"{}\"\n", bodies.display());
    let config = write_config(dir.path(), &dataset, &["page_geo:external"], &extra);

    expect_success(&bin().args(["run", "--config"]).arg(&config).output().unwrap());
    let log = dir.path().join("out/logs/custom__page_geo-external.jsonl");
    let trajectories = read_trajectories(&log).unwrap();
    assert_eq!(trajectories.len(), 2);
    for traj in &trajectories {
        assert!(traj.final_answer.is_some());
        // Round 1 injects the single rewritten official page at rank 5.
        let round1 = traj.rounds()[0];
        let synth = round1.synthetic_result().unwrap();
        assert_eq!(synth.rank, 5);
        assert!(synth.link.contains("officialbrandpages"));
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("broken.toml");
    std::fs::write(&config_path, "definitely not valid toml [").unwrap();
    let output = bin().args(["run", "--config"]).arg(&config_path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}
