//! Starts the JSON-lines server on a local port and drives one episode
//! through it as a client would.
//!
//! cargo run --release --example serve

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use shepherd_core::env::EnvConfig;
use shepherd_core::envgen::{EnvKind, EnvironmentSpec};
use shepherd_core::protocol::{decode_observation, serve_listener};

fn main() -> shepherd_core::Result<()> {
    let cfg = EnvConfig {
        env: EnvironmentSpec {
            kind: EnvKind::Empty,
            size: 270.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let server = std::thread::spawn(move || serve_listener(cfg, listener, Some(1)));

    let stream = TcpStream::connect(addr)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut ask = move |msg: &str| -> shepherd_core::Result<serde_json::Value> {
        writeln!(writer, "{msg}")?;
        let mut line = String::new();
        reader.read_line(&mut line)?;
        Ok(serde_json::from_str(&line)?)
    };

    println!("spec: {}", ask(r#"{"cmd":"spec"}"#)?);
    let reset = ask(r#"{"cmd":"reset","seed":3}"#)?;
    let stack = decode_observation(reset["obs"].as_str().unwrap_or_default(), 4)?;
    println!("reset: {} frames, info {}", stack.depth(), reset["info"]);
    let mut total = 0.0;
    for step in 0.. {
        let reply = ask(&format!(r#"{{"cmd":"step","action":{}}}"#, step % 8))?;
        total += reply["reward"].as_f64().unwrap_or(0.0);
        if reply["done"].as_bool().unwrap_or(true) {
            println!("episode ended after {} steps: {} (return {total:.2})", step + 1, reply["terminal"]);
            break;
        }
    }
    println!("step after done: {}", ask(r#"{"cmd":"step","action":0}"#)?);
    drop(ask);
    server.join().expect("server thread")?;
    Ok(())
}
