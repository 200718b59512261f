//! Plain-text checkpoints.
//!
//! A checkpoint is a sequence of whitespace-separated lines, each starting
//! with a keyword. Floats use Rust's shortest round-trip exponent form, so
//! save followed by load is bit-exact.
//!
//! ```text
//! xpharq-checkpoint 1
//! agent <gamma> <tau> <noise_var> <rate_cap> <lr_actor> <lr_critic> <feature>
//! net <name>                      # actor, critic, target_actor, target_critic
//! sizes <n0> <n1> ... <nL>
//! output identity | sigmoid <cap>
//! adam_t <t>
//! w <l> <fan_in * fan_out floats, row-major>
//! b <l> <fan_out floats>
//! mw <l> ... / mb <l> ... / vw <l> ... / vb <l> ...   # Adam moments
//! end
//! ```
//!
//! A trainer checkpoint appends the resumable state after the four nets:
//!
//! ```text
//! rng <name> <seed hex> <stream> <word_pos>   # channel, exploration, replay
//! env <round> <acc_rate> <acc_mi> <h_re> <h_im> <rates...>
//! replay <capacity> <epsilon> <beta> <max_priority> <next> <pushes> <len>
//! tr <priority> <generation> <a> <r> <boundary> <width> <s...> <s_next...>
//! epoch <n> <mean_reward> <critic_loss> <actor_objective> <wall_time>  # wall_time 0 unless recorded
//! ```

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::SeedableRng;

use crate::channel::ChannelState;
use crate::ddpg::{Agent, AgentParams, EpochLog, ReplayBuffer, Trainer};
use crate::error::{Error, Result};
use crate::mdp::{ChannelFeature, EncodedState, Transition};
use crate::nn::{Layer, Mlp, OutputActivation};
use crate::protocol::CycleState;
use crate::seed::SimRng;

pub const MAGIC: &str = "xpharq-checkpoint";
pub const VERSION: u32 = 1;
const NETS: [&str; 4] = ["actor", "critic", "target_actor", "target_critic"];
const RNGS: [&str; 3] = ["channel", "exploration", "replay"];

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn push_floats<'a>(out: &mut String, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        write!(out, " {x:e}").unwrap();
    }
}

fn write_net(out: &mut String, name: &str, net: &Mlp) {
    writeln!(out, "net {name}").unwrap();
    out.push_str("sizes");
    for s in net.sizes() {
        write!(out, " {s}").unwrap();
    }
    out.push('\n');
    match net.output_activation() {
        OutputActivation::Identity => out.push_str("output identity\n"),
        OutputActivation::SigmoidScaled(cap) => writeln!(out, "output sigmoid {cap:e}").unwrap(),
    }
    writeln!(out, "adam_t {}", net.adam.t).unwrap();
    let groups: [(&str, &[Layer]); 3] = [("", &net.layers), ("m", &net.adam.m), ("v", &net.adam.v)];
    for (prefix, layers) in groups {
        for (l, layer) in layers.iter().enumerate() {
            write!(out, "{prefix}w {l}").unwrap();
            push_floats(out, layer.w.iter());
            out.push('\n');
            write!(out, "{prefix}b {l}").unwrap();
            push_floats(out, layer.b.iter());
            out.push('\n');
        }
    }
    out.push_str("end\n");
}

fn feature_name(f: ChannelFeature) -> &'static str {
    match f {
        ChannelFeature::Magnitude => "magnitude",
        ChannelFeature::Complex => "complex",
    }
}

pub fn agent_to_string(agent: &Agent) -> String {
    let mut out = format!("{MAGIC} {VERSION}\n");
    let p = &agent.params;
    writeln!(
        out,
        "agent {:e} {:e} {:e} {:e} {:e} {:e} {}",
        p.gamma,
        p.tau,
        p.noise_var,
        p.rate_cap,
        p.lr_actor,
        p.lr_critic,
        feature_name(p.feature)
    )
    .unwrap();
    let nets = [&agent.actor, &agent.critic, &agent.target_actor, &agent.target_critic];
    for (name, net) in NETS.iter().zip(nets) {
        write_net(&mut out, name, net);
    }
    out
}

fn rng_line(out: &mut String, name: &str, rng: &SimRng) {
    let seed: String = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
    writeln!(out, "rng {name} {seed} {} {}", rng.get_stream(), rng.get_word_pos()).unwrap();
}

/// Wall-clock times are written as zero unless `with_wall_time`, so that
/// identical runs give identical files.
pub fn trainer_to_string(t: &Trainer, with_wall_time: bool) -> String {
    let mut out = agent_to_string(&t.agent);
    rng_line(&mut out, "channel", t.env.rng());
    rng_line(&mut out, "exploration", &t.explore_rng);
    rng_line(&mut out, "replay", &t.replay_rng);

    let c = t.env.cycle();
    let h = t.env.h_prev().h;
    write!(out, "env {} {:e} {:e} {:e} {:e}", c.round, c.acc_rate, c.acc_mi, h.re, h.im).unwrap();
    push_floats(&mut out, c.rates.iter());
    out.push('\n');

    let b = &t.buffer;
    let (next, pushes) = b.cursor();
    writeln!(
        out,
        "replay {} {:e} {:e} {:e} {} {} {}",
        b.capacity(),
        b.epsilon(),
        b.beta(),
        b.max_priority(),
        next,
        pushes,
        b.len()
    )
    .unwrap();
    for (i, tr) in b.entries().iter().enumerate() {
        write!(
            out,
            "tr {:e} {} {:e} {:e} {} {}",
            b.priority(i),
            b.generation(i),
            tr.a,
            tr.r,
            tr.boundary as u8,
            tr.s.width()
        )
        .unwrap();
        push_floats(&mut out, tr.s.as_slice().iter().chain(tr.s_next.as_slice()));
        out.push('\n');
    }
    for e in &t.log.epochs {
        writeln!(
            out,
            "epoch {} {:e} {:e} {:e} {:e}",
            e.epoch,
            e.mean_reward,
            e.critic_loss,
            e.actor_objective,
            if with_wall_time { e.wall_time } else { 0.0 }
        )
        .unwrap();
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            inner: s.lines().peekable(),
        }
    }

    fn peek_key(&mut self) -> Option<&'a str> {
        loop {
            let line = *self.inner.peek()?;
            if line.trim().is_empty() {
                self.inner.next();
                continue;
            }
            return line.split_whitespace().next();
        }
    }

    /// Next non-empty line, which must start with `key`; returns the rest.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        self.peek_key();
        let line = self.inner.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some(k) if k == key => Ok(toks.collect()),
            other => Err(bad(format!("expected `{key}`, found `{}`", other.unwrap_or("")))),
        }
    }
}

fn num<T: std::str::FromStr>(tok: Option<&&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| bad(format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(format!("unparsable {what}")))
}

fn floats(toks: &[&str], what: &str) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| t.parse().map_err(|_| bad(format!("unparsable float in {what}"))))
        .collect()
}

fn read_layers(lines: &mut Lines, key: &str, sizes: &[usize]) -> Result<Vec<Layer>> {
    let mut layers = Vec::new();
    for (l, w) in sizes.windows(2).enumerate() {
        let wt = lines.expect(&format!("{key}w"))?;
        if num::<usize>(wt.first(), "layer index")? != l {
            return Err(bad("layer index out of order"));
        }
        let wv = floats(&wt[1..], "weights")?;
        let wm = Array2::from_shape_vec((w[0], w[1]), wv).map_err(|_| bad(format!("layer {l} weight count")))?;
        let bt = lines.expect(&format!("{key}b"))?;
        let bv = floats(&bt[1..], "biases")?;
        if bv.len() != w[1] {
            return Err(bad(format!("layer {l} bias count")));
        }
        layers.push(Layer {
            w: wm,
            b: Array1::from(bv),
        });
    }
    Ok(layers)
}

fn read_net(lines: &mut Lines, name: &str) -> Result<Mlp> {
    let n = lines.expect("net")?;
    if n.first() != Some(&name) {
        return Err(bad(format!("expected net `{name}`")));
    }
    let sizes: Vec<usize> = lines
        .expect("sizes")?
        .iter()
        .map(|t| t.parse().map_err(|_| bad("unparsable layer size")))
        .collect::<Result<_>>()?;
    if sizes.len() < 2 {
        return Err(bad("network needs at least two layer sizes"));
    }
    let out = lines.expect("output")?;
    let output = match out.first() {
        Some(&"identity") => OutputActivation::Identity,
        Some(&"sigmoid") => OutputActivation::SigmoidScaled(num(out.get(1), "sigmoid cap")?),
        _ => return Err(bad("unknown output activation")),
    };
    let t: u64 = num(lines.expect("adam_t")?.first(), "adam_t")?;
    let mut net = Mlp::zeros(&sizes, output);
    net.layers = read_layers(lines, "", &sizes)?;
    net.adam.m = read_layers(lines, "m", &sizes)?;
    net.adam.v = read_layers(lines, "v", &sizes)?;
    net.adam.t = t;
    lines.expect("end")?;
    Ok(net)
}

fn read_agent(lines: &mut Lines, hidden_hint: Option<&[usize]>) -> Result<Agent> {
    let head = lines.expect(MAGIC)?;
    let version: u32 = num(head.first(), "version")?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let a = lines.expect("agent")?;
    let feature = match a.get(6) {
        Some(&"magnitude") => ChannelFeature::Magnitude,
        Some(&"complex") => ChannelFeature::Complex,
        _ => return Err(bad("unknown channel feature")),
    };
    let mut params = AgentParams {
        gamma: num(a.first(), "gamma")?,
        tau: num(a.get(1), "tau")?,
        noise_var: num(a.get(2), "noise_var")?,
        rate_cap: num(a.get(3), "rate_cap")?,
        lr_actor: num(a.get(4), "lr_actor")?,
        lr_critic: num(a.get(5), "lr_critic")?,
        hidden: Vec::new(),
        feature,
    };
    let actor = read_net(lines, "actor")?;
    let critic = read_net(lines, "critic")?;
    let target_actor = read_net(lines, "target_actor")?;
    let target_critic = read_net(lines, "target_critic")?;
    params.hidden = actor.sizes()[1..actor.sizes().len() - 1].to_vec();
    if let Some(h) = hidden_hint {
        if h != params.hidden.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: h.iter().sum(),
                got: params.hidden.iter().sum(),
            });
        }
    }
    if actor.sizes() != params.actor_sizes().as_slice() || critic.sizes() != params.critic_sizes().as_slice() {
        return Err(bad("network shapes do not match the channel feature"));
    }
    if target_actor.sizes() != actor.sizes() || target_critic.sizes() != critic.sizes() {
        return Err(bad("target network shapes differ from online networks"));
    }
    Ok(Agent {
        params,
        actor,
        critic,
        target_actor,
        target_critic,
    })
}

pub fn agent_from_str(s: &str) -> Result<Agent> {
    read_agent(&mut Lines::new(s), None)
}

fn read_rng(lines: &mut Lines, name: &str) -> Result<SimRng> {
    let t = lines.expect("rng")?;
    if t.first() != Some(&name) {
        return Err(bad(format!("expected rng `{name}`")));
    }
    let hex = t.get(1).ok_or_else(|| bad("missing rng seed"))?;
    if hex.len() != 64 {
        return Err(bad("rng seed must be 32 bytes"));
    }
    let mut seed = [0u8; 32];
    for (i, b) in seed.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad("bad rng seed hex"))?;
    }
    let mut rng = SimRng::from_seed(seed);
    rng.set_stream(num(t.get(2), "rng stream")?);
    rng.set_word_pos(num(t.get(3), "rng word position")?);
    Ok(rng)
}

/// Restores a trainer saved by [`trainer_to_string`] into `fresh`, a
/// trainer built from the same configuration.
pub fn restore_trainer(fresh: &mut Trainer, s: &str) -> Result<()> {
    let mut lines = Lines::new(s);
    let agent = read_agent(&mut lines, Some(&fresh.config.agent.hidden))?;
    if agent.params.feature != fresh.config.agent.feature || agent.params.rate_cap != fresh.config.agent.rate_cap {
        return Err(bad("checkpoint agent does not match the configuration"));
    }
    let mut rngs = Vec::new();
    for name in RNGS {
        rngs.push(read_rng(&mut lines, name)?);
    }

    let e = lines.expect("env")?;
    let round: usize = num(e.first(), "env round")?;
    let cycle = CycleState {
        round,
        acc_rate: num(e.get(1), "acc_rate")?,
        acc_mi: num(e.get(2), "acc_mi")?,
        rates: floats(e.get(5..).unwrap_or(&[]), "env rates")?,
    };
    let h = Complex64::new(num(e.get(3), "h re")?, num(e.get(4), "h im")?);
    if cycle.rates.len() != round {
        return Err(bad("env rate list length differs from round"));
    }

    let r = lines.expect("replay")?;
    let capacity: usize = num(r.first(), "capacity")?;
    let len: usize = num(r.get(6), "replay length")?;
    let mut items = Vec::with_capacity(len);
    for _ in 0..len {
        let t = lines.expect("tr")?;
        let width: usize = num(t.get(5), "state width")?;
        let xs = floats(t.get(6..).unwrap_or(&[]), "transition")?;
        if xs.len() != 2 * width || width > crate::mdp::MAX_STATE_WIDTH {
            return Err(bad("transition state width"));
        }
        let tr = Transition {
            s: EncodedState::from_slice(&xs[..width]),
            a: num(t.get(2), "action")?,
            r: num(t.get(3), "reward")?,
            s_next: EncodedState::from_slice(&xs[width..]),
            boundary: num::<u8>(t.get(4), "boundary")? != 0,
        };
        items.push((tr, num(t.first(), "priority")?, num(t.get(1), "generation")?));
    }
    let buffer = ReplayBuffer::restore(
        capacity,
        num(r.get(1), "epsilon")?,
        num(r.get(2), "beta")?,
        num(r.get(3), "max priority")?,
        num(r.get(4), "next")?,
        num(r.get(5), "pushes")?,
        items,
    )?;

    let mut epochs = Vec::new();
    while lines.peek_key() == Some("epoch") {
        let t = lines.expect("epoch")?;
        epochs.push(EpochLog {
            epoch: num(t.first(), "epoch")?,
            mean_reward: num(t.get(1), "mean_reward")?,
            critic_loss: num(t.get(2), "critic_loss")?,
            actor_objective: num(t.get(3), "actor_objective")?,
            wall_time: num(t.get(4), "wall_time")?,
        });
    }

    let mut rngs = rngs.into_iter();
    *fresh.env.rng_mut() = rngs.next().unwrap();
    fresh.explore_rng = rngs.next().unwrap();
    fresh.replay_rng = rngs.next().unwrap();
    fresh.env.restore(cycle, ChannelState::new(h));
    fresh.agent = agent;
    fresh.buffer = buffer;
    fresh.log.epochs = epochs;
    Ok(())
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
