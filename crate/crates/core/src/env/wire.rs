//! Newline-delimited JSON protocol over TCP, one thread per client.
//!
//! ```text
//! {"cmd":"make","task":"lane_merge","overrides":{...}}  -> {"ok":true,"env_id":0}
//! {"cmd":"reset","env_id":0,"seed":7}                   -> {"ok":true,"obs":{...},"info":{...}}
//! {"cmd":"step","env_id":0,"action":[1.0,0.0]}          -> {"ok":true,"obs":{...},"reward":..,"terminated":..,"truncated":..,"info":{...}}
//! {"cmd":"close","env_id":0}                            -> {"ok":true}
//! ```
//!
//! Failures answer `{"ok":false,"error":"..."}` and leave the connection open.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Action, DrivingEnv, EnvError, Info, StepResult};
use crate::observer::ObservationBundle;

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Make {
        task: String,
        #[serde(default)]
        overrides: Value,
    },
    Reset {
        env_id: u64,
        seed: u64,
    },
    Step {
        env_id: u64,
        action: Action,
    },
    Close {
        env_id: u64,
    },
}

pub type EnvFactory = Arc<dyn Fn(&str, &Value) -> Result<DrivingEnv, EnvError> + Send + Sync>;

/// Environments built from the task registry.
pub fn registry_factory() -> EnvFactory {
    Arc::new(|task, overrides| DrivingEnv::from_task(task, overrides))
}

pub fn reset_response(obs: &ObservationBundle, info: &Info) -> Result<Value, EnvError> {
    Ok(json!({"ok": true, "obs": obs.to_json()?, "info": info}))
}

pub fn step_response(r: &StepResult) -> Result<Value, EnvError> {
    Ok(json!({
        "ok": true,
        "obs": r.obs.to_json()?,
        "reward": r.reward,
        "terminated": r.terminated,
        "truncated": r.truncated,
        "info": r.info,
    }))
}

pub fn error_response(message: impl std::fmt::Display) -> Value {
    json!({"ok": false, "error": message.to_string()})
}

/// Per-connection state: the environments this client has made.
pub struct Session {
    envs: BTreeMap<u64, DrivingEnv>,
    next_id: u64,
    factory: EnvFactory,
}

impl Session {
    pub fn new(factory: EnvFactory) -> Self {
        Self { envs: BTreeMap::new(), next_id: 0, factory }
    }

    fn env(&mut self, id: u64) -> Result<&mut DrivingEnv, EnvError> {
        self.envs.get_mut(&id).ok_or_else(|| EnvError::Protocol(format!("unknown env_id {id}")))
    }

    pub fn handle(&mut self, req: Request) -> Result<Value, EnvError> {
        match req {
            Request::Make { task, overrides } => {
                let env = (self.factory)(&task, &overrides)?;
                let id = self.next_id;
                self.next_id += 1;
                self.envs.insert(id, env);
                Ok(json!({"ok": true, "env_id": id}))
            }
            Request::Reset { env_id, seed } => {
                let (obs, info) = self.env(env_id)?.reset(seed)?;
                reset_response(&obs, &info)
            }
            Request::Step { env_id, action } => step_response(&self.env(env_id)?.step(action)?),
            Request::Close { env_id } => {
                self.envs.remove(&env_id).ok_or_else(|| EnvError::Protocol(format!("unknown env_id {env_id}")))?;
                Ok(json!({"ok": true}))
            }
        }
    }

    /// Answers one protocol line. Never fails; errors become error responses.
    pub fn handle_line(&mut self, line: &str) -> Value {
        let req = match serde_json::from_str::<Request>(line) {
            Ok(r) => r,
            Err(e) => return error_response(format!("bad request: {e}")),
        };
        self.handle(req).unwrap_or_else(error_response)
    }
}

/// Serves one client until it disconnects.
pub fn serve_connection(stream: TcpStream, factory: EnvFactory) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    let mut session = Session::new(factory);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = session.handle_line(&line);
        let mut out = serde_json::to_vec(&resp)?;
        out.push(b'\n');
        writer.write_all(&out)?;
    }
    Ok(())
}

/// Accepts clients forever, each on its own thread.
pub fn serve(listener: TcpListener, factory: EnvFactory) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let factory = factory.clone();
        std::thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = serve_connection(stream, factory) {
                eprintln!("client {peer:?}: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `addr` and serves on a background thread.
pub fn spawn_server(
    addr: impl ToSocketAddrs,
    factory: EnvFactory,
) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    Ok((local, std::thread::spawn(move || serve(listener, factory))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_protocol_shapes() {
        let mut s = Session::new(registry_factory());
        assert_eq!(s.handle_line(r#"{"cmd":"make","task":"lane_merge"}"#), json!({"ok": true, "env_id": 0}));
        let r = s.handle_line(r#"{"cmd":"step","env_id":0,"action":7}"#);
        assert_eq!(r["ok"], false);
        assert!(r["error"].as_str().unwrap().contains("reset"));
        let r = s.handle_line("{not json");
        assert_eq!(r["ok"], false);
        let r = s.handle_line(r#"{"cmd":"reset","env_id":0,"seed":7,"extra":1}"#);
        assert_eq!(r["ok"], true);
        assert_eq!(r["info"]["tick"], 0);
        let r = s.handle_line(r#"{"cmd":"step","env_id":0,"action":[1.0,0.0]}"#);
        assert_eq!(r["ok"], true);
        assert_eq!(r["obs"]["bev"]["encoding"], "png-base64");
        assert_eq!(s.handle_line(r#"{"cmd":"close","env_id":0}"#), json!({"ok": true}));
        assert_eq!(s.handle_line(r#"{"cmd":"reset","env_id":0,"seed":1}"#)["ok"], false);
        assert_eq!(s.handle_line(r#"{"cmd":"make","task":"nope"}"#)["ok"], false);
    }
}
