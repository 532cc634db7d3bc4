use std::fs;

use fliphat::config::ExperimentConfig;
use fliphat::plot::{emit_svg_plot, render_svg};
use fliphat::report::{emit_csv, emit_json, read_aggregate_csv, read_raw_csv, write_trace, AGGREGATE_FILE, RAW_FILE};
use fliphat::sweep::{run_sweep, SweepResult};

fn sweep(text: &str) -> SweepResult {
    run_sweep(&ExperimentConfig::parse(text).unwrap()).unwrap()
}

fn small() -> SweepResult {
    sweep("dimensions = 16, 64\nepsilons = 0.8, 2, 5\ns_star = 2\nhorizon = 40\nrepetitions = 3\nm_max = 5")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn single_cell_csv_has_header_and_one_row() {
    let res = sweep("dimensions = 10\nepsilons = 1\ns_star = 2\nhorizon = 10\nrepetitions = 1");
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&res, dir.path()).unwrap();
    let raw = fs::read_to_string(dir.path().join(RAW_FILE)).unwrap();
    let lines: Vec<&str> = raw.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "d,epsilon,delta,repetition,final_regret,seed_path");
    let agg = fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
    assert_eq!(agg.lines().next().unwrap(), "d,epsilon,mean_regret,stddev,ci95_halfwidth,repetitions");
    assert_eq!(agg.lines().count(), 2);
}

#[test]
fn csv_round_trips() {
    let res = small();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&res, dir.path()).unwrap();
    let raw = read_raw_csv(&dir.path().join(RAW_FILE)).unwrap();
    assert_eq!(raw.len(), res.cells.len());
    for (row, cell) in raw.iter().zip(&res.cells) {
        assert_eq!((row.d, row.repetition), (cell.key.dim, cell.key.repetition));
        assert_eq!(row.epsilon, cell.key.epsilon.to_string());
        assert!(close(row.final_regret, cell.final_regret));
        assert_eq!(row.seed_path, cell.seed_path);
    }
    let agg = read_aggregate_csv(&dir.path().join(AGGREGATE_FILE)).unwrap();
    for (row, a) in agg.iter().zip(&res.aggregates) {
        assert_eq!((row.d, row.repetitions), (a.dim, a.repetitions));
        assert!(close(row.mean_regret, a.mean_regret));
        assert!(close(row.stddev, a.stddev));
        assert!(close(row.ci95_halfwidth, a.ci95_halfwidth));
    }
}

#[test]
fn rewriting_reports_is_idempotent() {
    let res = small();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&res, dir.path()).unwrap();
    emit_json(&res, dir.path()).unwrap();
    let first = fs::read(dir.path().join(RAW_FILE)).unwrap();
    let ledger = fs::read(dir.path().join("ledger.json")).unwrap();
    emit_csv(&res, dir.path()).unwrap();
    emit_json(&res, dir.path()).unwrap();
    assert_eq!(first, fs::read(dir.path().join(RAW_FILE)).unwrap());
    assert_eq!(ledger, fs::read(dir.path().join("ledger.json")).unwrap());
}

#[test]
fn ledger_report_lists_every_cell() {
    let res = small();
    let dir = tempfile::tempdir().unwrap();
    emit_json(&res, dir.path()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("ledger.json")).unwrap()).unwrap();
    assert_eq!(report["cells"].as_array().unwrap().len(), res.cells.len());
    assert_eq!(report["max_per_user"]["epsilon"].as_f64().unwrap(), 5.0);
    assert!(report["cells"].as_array().unwrap().iter().all(|c| c["disjoint"].as_bool().unwrap()));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["horizon"].as_u64().unwrap(), 40);
    assert!(meta["config_text"].as_str().unwrap().contains("x_max = 10"));
}

#[test]
fn unwritable_directory_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert!(emit_csv(&small(), &blocker.join("sub")).is_err());
    assert!(emit_svg_plot(&small(), &blocker.join("sub").join("p.svg")).is_err());
}

#[test]
fn trace_has_one_line_per_step() {
    let res = small();
    let mut buf = Vec::new();
    write_trace(&res.cells[0].trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 41);
    assert_eq!(lines[0], "t,episode,action,reward,instant_regret,cumulative_regret");
    assert!(lines[1].starts_with("1,0,"));
    assert!(lines[32].starts_with("32,5,"));
}

#[test]
fn svg_has_one_curve_per_privacy_level() {
    let two_dims = sweep("dimensions = 16, 64\nepsilons = 1\ns_star = 2\nhorizon = 20\nrepetitions = 2");
    let svg = render_svg(&two_dims);
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_eq!(svg.matches("<polygon").count(), 1);

    let svg = render_svg(&small());
    assert_eq!(svg.matches("<polyline").count(), 3);
    for label in ["ε = 0.8", "ε = 2", "ε = 5"] {
        assert!(svg.contains(label), "{label}");
    }
    assert!(svg.contains(r#"viewBox="0 0 800 500""#));
    assert!(svg.matches("<line").count() >= 2);
    for tick in [">16<", ">32<", ">64<"] {
        assert!(svg.contains(tick), "{tick}");
    }
}

#[test]
fn svg_rendering_is_deterministic() {
    let res = small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plot.svg");
    emit_svg_plot(&res, &path).unwrap();
    let first = fs::read(&path).unwrap();
    emit_svg_plot(&small(), &path).unwrap();
    assert_eq!(first, fs::read(&path).unwrap());
}

#[test]
fn earlier_repetitions_survive_a_larger_sweep() {
    let base = "dimensions = 16\nepsilons = 1, inf\ns_star = 2\nhorizon = 30\n";
    let five = sweep(&format!("{base}repetitions = 5"));
    let ten = sweep(&format!("{base}repetitions = 10"));
    for c in &five.cells {
        let twin = ten.cells.iter().find(|m| m.key == c.key).unwrap();
        assert_eq!(twin.final_regret.to_bits(), c.final_regret.to_bits());
        assert_eq!(twin.trace, c.trace);
    }
}
