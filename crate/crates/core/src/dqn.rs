//! Double DQN with prioritized replay, an epsilon schedule, periodic target
//! sync and a frame-skipped training loop.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, ShepherdEnv};
use crate::error::{Error, Result};
use crate::eval::Controller;
use crate::flock::ShepherdControl;
use crate::nn::{huber, huber_grad, normalize_bytes, Adam, AdamConfig, Architecture, Profile, QNetwork};
use crate::policy::{action_to_force, argmax, Action, ANGLE_NOISE_LIMIT};
use crate::render::ObservationStack;
use crate::replay::{beta_at, ReplayBuffer, Sample, Transition, DEFAULT_ALPHA, DEFAULT_PRIORITY_EPS};
use crate::reward::Terminal;
use crate::rng::{self, clipped_noise, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub mid: f64,
    pub end: f64,
    pub break1: u64,
    pub break2: u64,
}

impl EpsilonSchedule {
    /// Breakpoints at 10% and 50% of the run.
    pub fn for_frames(total: u64) -> Self {
        Self {
            start: 1.0,
            mid: 0.5,
            end: 0.02,
            break1: total / 10,
            break2: total / 2,
        }
    }

    pub fn epsilon_at(&self, frame: u64) -> f64 {
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        if frame >= self.break2 {
            self.end
        } else if frame >= self.break1 {
            let span = (self.break2 - self.break1).max(1) as f64;
            lerp(self.mid, self.end, (frame - self.break1) as f64 / span)
        } else {
            lerp(self.start, self.mid, frame as f64 / self.break1.max(1) as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Simulation frames to train for.
    pub total_frames: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub target_sync_interval: u64,
    pub replay_capacity: usize,
    pub alpha: f64,
    pub beta_start: f64,
    pub priority_eps: f64,
    pub min_fill: usize,
    /// Decision steps between gradient updates.
    pub train_every: usize,
    /// Huber loss when true, squared TD error otherwise.
    pub huber: bool,
    /// Symmetric reward clip; `None` keeps raw rewards.
    pub reward_clip: Option<f64>,
    pub profile: Profile,
    /// Overrides `profile` when present.
    pub architecture: Option<Architecture>,
    /// Epsilon breakpoints as fractions of `total_frames`.
    pub epsilon_breaks: (f64, f64),
    pub seed: u64,
    /// Frames between checkpoints; zero disables periodic saves.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_frames: 200_000,
            batch_size: 32,
            gamma: 0.99,
            learning_rate: 1e-4,
            target_sync_interval: 1000,
            replay_capacity: 20_000,
            alpha: DEFAULT_ALPHA,
            beta_start: 0.4,
            priority_eps: DEFAULT_PRIORITY_EPS,
            min_fill: 1000,
            train_every: 1,
            huber: true,
            reward_clip: None,
            profile: Profile::Tiny,
            architecture: None,
            epsilon_breaks: (0.1, 0.5),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.total_frames > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.target_sync_interval > 0
            && self.replay_capacity > 0
            && self.train_every > 0;
        if !positive {
            return Err(Error::Config("training sizes and rates must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        let (a, b) = self.epsilon_breaks;
        if !(0.0 <= a && a <= b && b <= 1.0) {
            return Err(Error::Config("epsilon breakpoints must satisfy 0 <= b1 <= b2 <= 1".into()));
        }
        if self.min_fill < self.batch_size {
            return Err(Error::Config("min_fill must be at least batch_size".into()));
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
            .clone()
            .or_else(|| Architecture::for_profile(self.profile))
            .unwrap_or_else(Architecture::tiny)
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        let f = self.total_frames as f64;
        EpsilonSchedule {
            break1: (f * self.epsilon_breaks.0) as u64,
            break2: (f * self.epsilon_breaks.1) as u64,
            ..EpsilonSchedule::for_frames(self.total_frames)
        }
    }
}

/// `y = r` for terminal transitions, else
/// `r + gamma * Q_target(s', argmax_a Q_main(s', a))`.
pub fn double_q_targets(rewards: &[f64], dones: &[bool], q_main_next: &[f64], q_target_next: &[f64], n_actions: usize, gamma: f64) -> Vec<f64> {
    rewards
        .iter()
        .zip(dones)
        .enumerate()
        .map(|(i, (r, done))| {
            if *done {
                *r
            } else {
                let row = &q_main_next[i * n_actions..(i + 1) * n_actions];
                let a = argmax(row);
                r + gamma * q_target_next[i * n_actions + a]
            }
        })
        .collect()
}

/// Main and target networks plus optimizer state.
#[derive(Debug)]
pub struct Learner {
    pub main: QNetwork<f32>,
    pub target: QNetwork<f32>,
    pub optimizer: Adam<f32>,
    pub updates: u64,
    pub gamma: f64,
    pub huber: bool,
    pub target_sync_interval: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub td_errors: Vec<f64>,
}

fn stack_input(stacks: &[&ObservationStack]) -> Vec<f32> {
    let mut x = Vec::with_capacity(stacks.iter().map(|s| s.depth()).sum::<usize>() * crate::render::FRAME_PIXELS);
    for s in stacks {
        for f in s.frames() {
            normalize_bytes(f.as_bytes(), &mut x);
        }
    }
    x
}

impl Learner {
    pub fn new(arch: Architecture, seed: u64, cfg: &TrainConfig) -> Result<Self> {
        let main = QNetwork::<f32>::new(arch, seed)?;
        let target = main.clone();
        let optimizer = Adam::new(
            &main,
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..Default::default()
            },
        );
        Ok(Self {
            main,
            target,
            optimizer,
            updates: 0,
            gamma: cfg.gamma,
            huber: cfg.huber,
            target_sync_interval: cfg.target_sync_interval,
        })
    }

    pub fn q_values(&self, stack: &ObservationStack) -> Result<Vec<f32>> {
        self.main.forward(&stack_input(&[stack]), 1)
    }

    /// One importance-weighted update on explicit tensors.
    pub fn update(&mut self, states: &[f32], actions: &[usize], targets: &[f64], weights: &[f64]) -> Result<StepStats> {
        let batch = actions.len();
        let n = self.main.outputs();
        let (q, cache) = self.main.forward_cached(states, batch)?;
        let mut d_out = vec![0f32; batch * n];
        let mut td_errors = Vec::with_capacity(batch);
        let mut loss = 0.0;
        for i in 0..batch {
            let td = q[i * n + actions[i]] as f64 - targets[i];
            let (l, g) = if self.huber {
                (huber(td, 1.0), huber_grad(td, 1.0))
            } else {
                (0.5 * td * td, td)
            };
            loss += weights[i] * l / batch as f64;
            d_out[i * n + actions[i]] = (weights[i] * g / batch as f64) as f32;
            td_errors.push(td);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                update: self.updates,
                detail: format!("td errors {td_errors:?}"),
            });
        }
        let grads = self.main.backward(states, &cache, &d_out)?;
        self.optimizer.step(&mut self.main, &grads);
        self.updates += 1;
        if self.updates % self.target_sync_interval == 0 {
            self.target.copy_from(&self.main);
        }
        Ok(StepStats { loss, td_errors })
    }

    /// Double-Q update on a prioritized sample; refreshes its priorities.
    pub fn train_step(&mut self, buffer: &mut ReplayBuffer, sample: &Sample) -> Result<StepStats> {
        let items: Vec<&Transition> = sample.indices.iter().map(|&i| buffer.get(i)).collect();
        let batch = items.len();
        let states = stack_input(&items.iter().map(|t| &t.state).collect::<Vec<_>>());
        let next = stack_input(&items.iter().map(|t| &t.next_state).collect::<Vec<_>>());
        let widen = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<f64>>();
        let q_main_next = widen(self.main.forward(&next, batch)?);
        let q_target_next = widen(self.target.forward(&next, batch)?);
        let rewards: Vec<f64> = items.iter().map(|t| t.reward).collect();
        let dones: Vec<bool> = items.iter().map(|t| t.done).collect();
        let actions: Vec<usize> = items.iter().map(|t| t.action).collect();
        let targets = double_q_targets(&rewards, &dones, &q_main_next, &q_target_next, self.main.outputs(), self.gamma);
        let stats = self.update(&states, &actions, &targets, &sample.weights)?;
        buffer.update(&sample.indices, &stats.td_errors);
        Ok(stats)
    }
}

const MAGIC: &[u8; 8] = b"SHEPDQN\0";
const VERSION: u32 = 1;

/// Versioned binary checkpoint: header (magic, version, profile, frame
/// counter, architecture) then little-endian f32 tensors in layer order.
pub fn write_checkpoint(out: &mut impl Write, net: &QNetwork<f32>, frame: u64) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&[net.arch.profile().code()])?;
    out.write_all(&frame.to_le_bytes())?;
    let arch = serde_json::to_vec(&net.arch)?;
    out.write_all(&(arch.len() as u32).to_le_bytes())?;
    out.write_all(&arch)?;
    let tensors = net.export_f32();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.len() as u32).to_le_bytes())?;
        for v in t {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<(QNetwork<f32>, u64)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    input.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut code = [0u8; 1];
    input.read_exact(&mut code)?;
    let profile = Profile::from_code(code[0])?;
    input.read_exact(&mut u64b)?;
    let frame = u64::from_le_bytes(u64b);
    input.read_exact(&mut u32b)?;
    let mut arch = vec![0u8; u32::from_le_bytes(u32b) as usize];
    input.read_exact(&mut arch)?;
    let arch: Architecture = serde_json::from_slice(&arch)?;
    if arch.profile() != profile {
        return Err(Error::Checkpoint("profile code does not match architecture".into()));
    }
    input.read_exact(&mut u32b)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut u32b)?;
        let len = u32::from_le_bytes(u32b) as usize;
        let mut raw = vec![0u8; len * 4];
        input.read_exact(&mut raw)?;
        tensors.push(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect());
    }
    let mut net = QNetwork::<f32>::new(arch, 0)?;
    net.import_f32(&tensors)?;
    Ok((net, frame))
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &QNetwork<f32>, frame: u64) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, net, frame)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(QNetwork<f32>, u64)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut f)
}

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Frame counter at the end of the episode.
    pub frame: u64,
    pub episode: u64,
    pub total_return: f64,
    /// Mean loss over the episode's updates; NaN before warm-up.
    pub loss: f64,
    pub epsilon: f64,
    pub terminal: Terminal,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str = "frame,episode,return,loss,epsilon";

    pub fn csv_line(&self) -> String {
        format!("{},{},{:.6},{:.6},{:.6}", self.frame, self.episode, self.total_return, self.loss, self.epsilon)
    }
}

#[derive(Debug)]
pub struct TrainReport {
    pub episodes: Vec<EpisodeLog>,
    pub frames: u64,
    pub updates: u64,
    pub learner: Learner,
}

/// Where training writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    pub log_csv: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Epsilon-greedy action; the network is only evaluated when exploiting.
fn select_action(learner: &Learner, stack: &ObservationStack, epsilon: f64, rng: &mut SimRng) -> Result<Action> {
    let explore = rng.random::<f64>() < epsilon;
    let direction_index = if explore {
        rng.random_range(0..learner.main.outputs())
    } else {
        argmax(&learner.q_values(stack)?)
    };
    Ok(Action {
        direction_index,
        angle_noise: clipped_noise(rng, ANGLE_NOISE_LIMIT),
    })
}

/// Seed of the `episode`-th training episode.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    rng::sub_seed(seed, 1_000_000 + episode)
}

pub fn train_loop(cfg: &TrainConfig, env_cfg: &EnvConfig, outputs: &TrainOutputs) -> Result<TrainReport> {
    cfg.validate()?;
    let mut env_cfg = env_cfg.clone();
    env_cfg.render = true;
    let mut env = ShepherdEnv::new(env_cfg)?;
    let mut learner = Learner::new(cfg.architecture(), rng::sub_seed(cfg.seed, 30), cfg)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, cfg.alpha, cfg.priority_eps)?;
    let mut act_rng = rng::seeded(rng::sub_seed(cfg.seed, 31));
    let mut replay_rng = rng::seeded(rng::sub_seed(cfg.seed, 32));
    let schedule = cfg.schedule();
    let mut log = match &outputs.log_csv {
        Some(p) => {
            let mut f = std::io::BufWriter::new(std::fs::File::create(p)?);
            writeln!(f, "{}", EpisodeLog::CSV_HEADER)?;
            Some(f)
        }
        None => None,
    };

    let mut frames: u64 = 0;
    let mut decisions: u64 = 0;
    let mut episodes = Vec::new();
    let mut next_checkpoint = cfg.checkpoint_every;
    while frames < cfg.total_frames {
        let episode = episodes.len() as u64;
        env.reset(episode_seed(cfg.seed, episode))?;
        let mut state = env.observation().expect("rendering enabled").clone();
        let mut total_return = 0.0;
        let mut losses = Vec::new();
        let mut terminal = env.terminal().unwrap_or(Terminal::None);
        while env.terminal().is_none() && frames < cfg.total_frames {
            let epsilon = schedule.epsilon_at(frames);
            let action = select_action(&learner, &state, epsilon, &mut act_rng)?;
            let info = env.step(action)?;
            frames = frames.saturating_add(env.config().frame_skip as u64);
            decisions += 1;
            total_return += info.reward.total;
            terminal = info.terminal;
            let reward = match cfg.reward_clip {
                Some(c) => info.reward.total.clamp(-c, c),
                None => info.reward.total,
            };
            let next_state = env.observation().expect("rendering enabled").clone();
            buffer.push(Transition {
                state: std::mem::replace(&mut state, next_state.clone()),
                action: action.direction_index,
                reward,
                next_state,
                // A time limit truncates the episode; it is not a terminal state.
                done: matches!(info.terminal, Terminal::Success | Terminal::Violation),
            });
            if buffer.len() >= cfg.min_fill && decisions % cfg.train_every as u64 == 0 {
                let beta = beta_at(cfg.beta_start, frames as f64 / cfg.total_frames as f64);
                let sample = buffer.sample(cfg.batch_size, beta, &mut replay_rng)?;
                losses.push(learner.train_step(&mut buffer, &sample)?.loss);
            }
        }
        let entry = EpisodeLog {
            frame: frames,
            episode,
            total_return,
            loss: if losses.is_empty() {
                f64::NAN
            } else {
                losses.iter().sum::<f64>() / losses.len() as f64
            },
            epsilon: schedule.epsilon_at(frames),
            terminal,
        };
        if let Some(f) = log.as_mut() {
            writeln!(f, "{}", entry.csv_line())?;
        }
        if episode % 50 == 0 {
            info!(
                "frame {frames} episode {episode} return {:.1} eps {:.3} updates {}",
                entry.total_return, entry.epsilon, learner.updates
            );
        }
        episodes.push(entry);
        if cfg.checkpoint_every > 0 && frames >= next_checkpoint {
            if let Some(p) = &outputs.checkpoint {
                save_checkpoint(p, &learner.main, frames)?;
            }
            next_checkpoint += cfg.checkpoint_every;
        }
    }
    if let Some(f) = log.as_mut() {
        f.flush()?;
    }
    if let Some(p) = &outputs.checkpoint {
        save_checkpoint(p, &learner.main, frames)?;
    }
    Ok(TrainReport {
        episodes,
        frames,
        updates: learner.updates,
        learner,
    })
}

/// Greedy shepherd driven by a trained Q-network.
pub struct LearnedController {
    pub net: QNetwork<f32>,
    pub epsilon: f64,
    rng: SimRng,
}

impl LearnedController {
    pub fn new(net: QNetwork<f32>, epsilon: f64) -> Self {
        Self {
            net,
            epsilon,
            rng: rng::seeded(0),
        }
    }

    pub fn load(path: impl AsRef<Path>, epsilon: f64) -> Result<Self> {
        Ok(Self::new(load_checkpoint(path)?.0, epsilon))
    }
}

impl Controller for LearnedController {
    fn name(&self) -> &str {
        "learned"
    }

    fn reset(&mut self, seed: u64) {
        self.rng = rng::seeded(rng::sub_seed(seed, 41));
    }

    fn act(&mut self, env: &ShepherdEnv) -> Result<ShepherdControl> {
        let stack = env
            .observation()
            .ok_or_else(|| Error::InvalidState("learned policy needs rendering enabled".into()))?;
        let explore = self.rng.random::<f64>() < self.epsilon;
        let direction_index = if explore {
            self.rng.random_range(0..self.net.outputs())
        } else {
            argmax(&self.net.forward(&stack_input(&[stack]), 1)?)
        };
        let a = Action {
            direction_index,
            angle_noise: clipped_noise(&mut self.rng, ANGLE_NOISE_LIMIT),
        };
        Ok(ShepherdControl::Force(action_to_force(a, env.config().shepherd.force_magnitude)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ConvSpec;
    use crate::render::{ObservationFrame, FRAME_PIXELS};

    #[test]
    fn schedule_points() {
        let s = EpsilonSchedule::for_frames(1000);
        assert_eq!(s.epsilon_at(0), 1.0);
        assert_eq!(s.epsilon_at(50), 0.75);
        assert_eq!(s.epsilon_at(100), 0.5);
        assert_eq!(s.epsilon_at(500), 0.02);
        assert_eq!(s.epsilon_at(10_000), 0.02);
        let mut prev = 1.0;
        for f in 0..1200 {
            let e = s.epsilon_at(f);
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn double_q_hand_trace() {
        let main = [0.2, 0.5, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0];
        let target = [1.0, 3.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let y = double_q_targets(&[1.0], &[false], &main, &target, 8, 0.99);
        assert_eq!(y, vec![1.0 + 0.99 * 3.0]);
        assert_eq!(double_q_targets(&[5.0], &[true], &main, &target, 8, 0.99), vec![5.0]);
        let same = double_q_targets(&[1.0], &[false], &target, &target, 8, 0.99);
        assert_eq!(same, vec![1.0 + 0.99 * 3.0]);
    }

    fn micro_arch() -> Architecture {
        Architecture {
            in_channels: 4,
            in_size: 84,
            convs: vec![ConvSpec {
                filters: 2,
                kernel: 8,
                stride: 8,
            }],
            hidden: 8,
            outputs: 8,
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let net = QNetwork::<f32>::new(Architecture::tiny(), 3).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net, 1234).unwrap();
        let (back, frame) = read_checkpoint(&mut bytes.as_slice()).unwrap();
        assert_eq!(frame, 1234);
        assert_eq!(back, net);
        bytes[0] = b'X';
        assert!(read_checkpoint(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn target_frozen_between_syncs() {
        let cfg = TrainConfig {
            target_sync_interval: 3,
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut l = Learner::new(micro_arch(), 1, &cfg).unwrap();
        let x = vec![0.3f32; micro_arch().input_len()];
        let h0 = l.target.param_hash();
        for k in 1..=3 {
            l.update(&x, &[2], &[1.0], &[1.0]).unwrap();
            if k < 3 {
                assert_eq!(l.target.param_hash(), h0);
            }
        }
        assert_eq!(l.target.param_hash(), l.main.param_hash());
    }

    #[test]
    fn single_transition_overfits() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            ..Default::default()
        };
        let mut l = Learner::new(Architecture::tiny(), 2, &cfg).unwrap();
        let mut frame = ObservationFrame::default();
        let bytes: Vec<u8> = (0..FRAME_PIXELS).map(|i| ((i * 37) % 256) as u8).collect();
        frame = ObservationFrame::from_bytes(bytes).unwrap_or(frame);
        let stack = ObservationStack::reset(frame, 4);
        let x = stack_input(&[&stack]);
        let mut td = f64::INFINITY;
        for _ in 0..500 {
            td = l.update(&x, &[5], &[2.5], &[1.0]).unwrap().td_errors[0];
            if td.abs() < 1e-3 {
                break;
            }
        }
        assert!(td.abs() < 1e-3, "td {td}");
    }
}
