use std::process::{Command, Output};

fn lanesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanesim")).args(args).env_remove("LANESIM_VIZ_PORT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_one_line_per_episode() {
    let o = lanesim(&["run", "right_turn_simple", "autopilot", "5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5);
    assert!(out.lines().all(|l| l.contains("destination")));
}

#[test]
fn usage_errors_exit_2() {
    let o = lanesim(&["run", "bogus_task"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("right_turn_simple") && err.contains("stop_sign"), "{err}");
    assert_eq!(lanesim(&["run", "lane_merge", "butler"]).status.code(), Some(2));
    assert_eq!(lanesim(&["evaluate", "lane_merge", "zero", "0"]).status.code(), Some(2));
    assert_eq!(lanesim(&["evaluate", "lane_merge", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(lanesim(&["run", "lane_merge", "external"]).status.code(), Some(2));
    assert_eq!(lanesim(&["run", "lane_merge", "--overrides", "{oops"]).status.code(), Some(2));
}

#[test]
fn random_agent_does_not_finish_navigation() {
    let o = lanesim(&["run", "navigation", "random", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("timeout") || out.contains("out_of_lane"), "{out}");
}

#[test]
fn evaluate_formats() {
    let csv = stdout(&lanesim(&["evaluate", "right_turn_simple", "autopilot", "20", "--format", "csv"]));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("task,success_rate,success_se,collision_rate,collision_se,avg_speed,avg_speed_se"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[..3], ["right_turn_simple", "100.0000", "0.0000"]);

    let json: serde_json::Value =
        serde_json::from_str(&stdout(&lanesim(&["evaluate", "lane_merge", "random", "3", "--format", "json"]))).unwrap();
    for key in ["success_rate", "collision_rate", "avg_speed"] {
        assert!(json[key]["mean"].is_number() && json[key]["stderr"].is_number(), "{key}");
    }

    let table = stdout(&lanesim(&["evaluate", "right_turn_simple", "autopilot", "20"]));
    assert!(table.contains("Success Rate") && table.contains("100.00% ± 0.00%"), "{table}");
}

#[test]
fn output_is_reproducible() {
    let args = ["evaluate", "right_turn_medium", "random", "3", "--seed", "9", "--format", "json"];
    assert_eq!(lanesim(&args).stdout, lanesim(&args).stdout);
}

#[test]
fn map_validation() {
    let o = lanesim(&["map-validate"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("ok ")).count(), 8);
    let dir = std::env::temp_dir().join(format!("lanesim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"lanes":[{"id":"a","width":-1,"centerline":[[0,0],[1,0]]}]}"#).unwrap();
    let o = lanesim(&["map_validate", bad.to_str().unwrap()]);
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("width"));
}
