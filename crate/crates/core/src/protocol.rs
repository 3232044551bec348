//! Line-delimited JSON interface to one environment, for external trainers.
//!
//! Requests:
//! - `{"cmd":"reset","seed":7}` -> `{"obs":"<base64>","info":{...}}`
//! - `{"cmd":"step","action":3}` -> `{"obs":..,"reward":..,"done":..,"terminal":..}`
//! - `{"cmd":"spec"}` -> observation and action space description
//!
//! `obs` decodes to `stack_depth * 84 * 84` bytes, oldest frame first,
//! row-major. Errors come back as `{"error":"..."}` and leave the
//! connection open.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, ToSocketAddrs};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use log::{info, warn};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::env::{EnvConfig, ShepherdEnv};
use crate::error::{Error, Result};
use crate::policy::{Action, ANGLE_NOISE_LIMIT, N_ACTIONS};
use crate::render::{ObservationStack, BACKGROUND, FRAME_SIZE, GOAL, OBSTACLE, SHEEP, SHEPHERD};

#[derive(Debug, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
enum Request {
    Reset {
        #[serde(default)]
        seed: u64,
    },
    Step {
        action: usize,
        #[serde(default)]
        angle_noise: f64,
    },
    Spec,
}

pub fn encode_observation(stack: &ObservationStack) -> String {
    STANDARD.encode(stack.to_bytes())
}

pub fn decode_observation(text: &str, depth: usize) -> Result<ObservationStack> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Protocol(format!("bad base64: {e}")))?;
    ObservationStack::from_bytes(&bytes, depth)
}

/// One environment and its request handler.
pub struct Session {
    env: ShepherdEnv,
    live: bool,
}

impl Session {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        let mut cfg = cfg;
        cfg.render = true;
        Ok(Self {
            env: ShepherdEnv::new(cfg)?,
            live: false,
        })
    }

    pub fn env(&self) -> &ShepherdEnv {
        &self.env
    }

    /// Answers one request line. Never fails; problems become error replies.
    pub fn handle_line(&mut self, line: &str) -> Value {
        match serde_json::from_str::<Request>(line) {
            Ok(req) => self.handle(req).unwrap_or_else(|e| json!({ "error": e.to_string() })),
            Err(e) => json!({ "error": format!("malformed request: {e}") }),
        }
    }

    fn handle(&mut self, req: Request) -> Result<Value> {
        match req {
            Request::Spec => Ok(self.spec()),
            Request::Reset { seed } => {
                self.env.reset(seed)?;
                self.live = true;
                Ok(json!({
                    "obs": self.obs()?,
                    "info": {
                        "seed": seed,
                        "workspace": self.env.workspace().name,
                        "n_sheep": self.env.sheep().len(),
                        "done": self.env.terminal().is_some(),
                        "terminal": self.env.terminal().unwrap_or_default(),
                    },
                }))
            }
            Request::Step { action, angle_noise } => {
                if !self.live {
                    return Err(Error::Protocol("step before reset".into()));
                }
                if self.env.terminal().is_some() {
                    return Err(Error::Protocol("episode is over; send reset".into()));
                }
                if action >= N_ACTIONS {
                    return Err(Error::Protocol(format!("action {action} outside 0..{N_ACTIONS}")));
                }
                if !angle_noise.is_finite() || angle_noise.abs() > ANGLE_NOISE_LIMIT {
                    return Err(Error::Protocol(format!("angle_noise must lie within ±{ANGLE_NOISE_LIMIT}")));
                }
                let step = self.env.step(Action {
                    direction_index: action,
                    angle_noise,
                })?;
                Ok(json!({
                    "obs": self.obs()?,
                    "reward": step.reward.total,
                    "done": step.done(),
                    "terminal": step.terminal,
                    "frame": step.frame,
                }))
            }
        }
    }

    fn obs(&self) -> Result<String> {
        self.env
            .observation()
            .map(encode_observation)
            .ok_or_else(|| Error::Protocol("no observation".into()))
    }

    fn spec(&self) -> Value {
        let cfg = self.env.config();
        json!({
            "observation": {
                "shape": [cfg.stack_depth, FRAME_SIZE, FRAME_SIZE],
                "dtype": "u8",
                "order": "oldest frame first, row-major",
                "classes": { "free": BACKGROUND, "obstacle": OBSTACLE, "sheep": SHEEP, "goal": GOAL, "shepherd": SHEPHERD },
            },
            "action": {
                "n": N_ACTIONS,
                "angle_step_deg": 360.0 / N_ACTIONS as f64,
                "max_angle_noise": ANGLE_NOISE_LIMIT,
            },
            "frame_skip": cfg.frame_skip,
            "max_steps": cfg.max_steps,
        })
    }

    /// Serves requests until the reader hits end of input.
    pub fn serve<R: BufRead, W: Write>(&mut self, reader: R, mut writer: W) -> Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let reply = self.handle_line(&line);
            serde_json::to_writer(&mut writer, &reply)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        Ok(())
    }
}

pub fn serve_stdio(cfg: EnvConfig) -> Result<()> {
    let stdin = std::io::stdin();
    Session::new(cfg)?.serve(stdin.lock(), std::io::stdout().lock())
}

/// Accepts connections one at a time, each with a fresh environment.
/// `max_connections` bounds the loop (useful in tests).
pub fn serve_tcp(cfg: EnvConfig, addr: impl ToSocketAddrs, max_connections: Option<usize>) -> Result<()> {
    let listener = TcpListener::bind(addr)?;
    info!("listening on {}", listener.local_addr()?);
    serve_listener(cfg, listener, max_connections)
}

pub fn serve_listener(cfg: EnvConfig, listener: TcpListener, max_connections: Option<usize>) -> Result<()> {
    for (n, stream) in listener.incoming().enumerate() {
        let stream = stream?;
        let peer = stream.peer_addr().ok();
        info!("connection from {peer:?}");
        let mut session = Session::new(cfg.clone())?;
        if let Err(e) = session.serve(BufReader::new(stream.try_clone()?), stream) {
            warn!("connection {peer:?} closed: {e}");
        }
        if max_connections.is_some_and(|m| n + 1 >= m) {
            break;
        }
    }
    Ok(())
}
