use lanesim::env::{read_rollouts, record_rollouts, replay, write_rollouts, AutopilotAgent, RandomAgent};
use lanesim::DrivingEnv;
use serde_json::{json, Value};

#[test]
fn recorded_episodes_replay_bit_for_bit() {
    let mut env = DrivingEnv::from_task("roundabout", &json!({})).unwrap();
    let mut buf = Vec::new();
    let logs = record_rollouts(&mut env, &mut AutopilotAgent::default(), 2, 30, &mut buf).unwrap();
    let back = read_rollouts(&buf[..]).unwrap();
    assert_eq!(back, logs);
    for log in &back {
        assert_eq!(replay(log).unwrap(), None);
    }
    let mut again = Vec::new();
    write_rollouts(&back, &mut again).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn tampering_is_pinpointed() {
    let mut env = DrivingEnv::from_task("lane_merge", &json!({})).unwrap();
    let mut buf = Vec::new();
    record_rollouts(&mut env, &mut RandomAgent::new(4), 1, 8, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // line 0 is the header, line k + 1 is step k
    let mut step: Value = serde_json::from_str(&lines[6]).unwrap();
    step["reward"] = json!(step["reward"].as_f64().unwrap() * 1.000001 + 1e-12);
    lines[6] = step.to_string();
    let logs = read_rollouts(lines.join("\n").as_bytes()).unwrap();
    let m = replay(&logs[0]).unwrap().expect("mismatch");
    assert_eq!((m.episode, m.step, m.field), (0, 5, "reward"));
    assert!(m.to_string().contains("step 5"));
}

#[test]
fn truncated_logs_are_errors() {
    assert!(read_rollouts(r#"{"type":"step"}"#.as_bytes()).is_err());
    assert!(read_rollouts("{".as_bytes()).is_err());
}
