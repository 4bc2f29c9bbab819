//! Random-waypoint mobility, CBR flows and scenario files.
//!
//! A scenario is fully materialized before the run starts: initial
//! placements, every waypoint leg (as `move` directives) and every flow. The
//! simulator only evaluates positions along those legs, so a scenario file
//! replays exactly.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::NodeId;

/// RNG stream reserved for scenario generation; the engine uses stream 0.
pub const SCENARIO_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, o: Position) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    /// Move `step` meters toward `to`, stopping on it.
    fn toward(self, to: Position, step: f64) -> Position {
        let d = self.distance(to);
        // Snap within a nanometer so arrival times computed as d / speed land
        // exactly on the waypoint.
        if step >= d - 1e-9 {
            return to;
        }
        let f = step / d;
        Position::new(self.x + (to.x - self.x) * f, self.y + (to.y - self.y) * f)
    }
}

/// Rectangle `[0, width] × [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Position {
        Position::new(
            rng.gen_range(0.0..=self.width),
            rng.gen_range(0.0..=self.height),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub area: Area,
    pub pause_time: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub position: Position,
    pub waypoint: Position,
    pub speed: f64,
    pub pause_until: f64,
    pub moving: bool,
    /// Time at which `position` was current.
    pub since: f64,
}

impl MobilityState {
    /// Placed at `p` and paused for `pause` seconds, as a setdest-style
    /// generator does before the first leg.
    pub fn at_rest(p: Position, pause: f64) -> Self {
        MobilityState {
            position: p,
            waypoint: p,
            speed: 0.0,
            pause_until: pause,
            moving: false,
            since: 0.0,
        }
    }

    /// Next time the state changes: arrival when moving, end of pause otherwise.
    pub fn next_change(&self) -> f64 {
        if self.moving {
            self.since + self.position.distance(self.waypoint) / self.speed
        } else {
            self.pause_until
        }
    }
}

/// Advance `state` to `now`, entering a pause on arrival and drawing a new
/// leg once the pause is over.
pub fn waypoint_update<R: Rng>(
    state: MobilityState,
    now: f64,
    params: &MobilityParams,
    rng: &mut R,
) -> MobilityState {
    let mut s = state;
    if s.moving {
        let step = s.speed * (now - s.since).max(0.0);
        s.position = s.position.toward(s.waypoint, step);
        if s.position == s.waypoint {
            s.moving = false;
            s.pause_until = now + params.pause_time;
        }
    }
    s.since = now;
    if !s.moving && now >= s.pause_until {
        s.waypoint = params.area.sample(rng);
        let lo = params.v_min.min(params.v_max);
        s.speed = rng.gen_range(lo..=params.v_max);
        if s.waypoint == s.position {
            s.pause_until = now + params.pause_time;
        } else {
            s.moving = true;
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrFlow {
    pub src: NodeId,
    pub dst: NodeId,
    pub start: f64,
    /// Packets per second.
    pub rate: f64,
    pub payload: u32,
}

impl CbrFlow {
    /// Time of the `k`-th emission, counted from zero.
    pub fn emission(&self, k: u64) -> f64 {
        self.start + k as f64 / self.rate
    }

    /// Emissions strictly before `end`.
    pub fn emissions_before(&self, end: f64) -> u64 {
        if end <= self.start {
            return 0;
        }
        let mut n = ((end - self.start) * self.rate).ceil() as u64;
        while n > 0 && self.emission(n - 1) >= end {
            n -= 1;
        }
        while self.emission(n) < end {
            n += 1;
        }
        n
    }
}

/// Next emission after one at `now`.
pub fn cbr_emit(flow: &CbrFlow, now: f64) -> f64 {
    debug_assert!(now >= flow.start);
    now + 1.0 / flow.rate
}

/// A directed leg: from `time` on, head to `(x, y)` at `speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Move {
    pub node: NodeId,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub node_count: usize,
    pub area: Area,
    pub duration: f64,
    pub pause_time: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub source_count: usize,
    pub rate: f64,
    pub payload: u32,
    /// Flow start times are drawn uniformly from `[0, start_spread]`.
    pub start_spread: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            node_count: 50,
            area: Area {
                width: 1500.0,
                height: 300.0,
            },
            duration: 200.0,
            pause_time: 0.0,
            v_min: 0.1,
            v_max: 10.0,
            source_count: 40,
            rate: 4.0,
            payload: 512,
            start_spread: 10.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.node_count < 2 {
            return bad("node_count must be >= 2");
        }
        if !(self.area.width > 0.0 && self.area.height > 0.0) {
            return bad("area dimensions must be > 0");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be > 0");
        }
        if !(self.pause_time >= 0.0) {
            return bad("pause_time must be >= 0");
        }
        if !(self.v_max > 0.0) || !(self.v_min > 0.0) {
            return bad("speeds must be > 0");
        }
        if !(self.rate > 0.0) {
            return bad("rate must be > 0");
        }
        if self.start_spread < 0.0 {
            return bad("start_spread must be >= 0");
        }
        if self.source_count > self.node_count * (self.node_count - 1) {
            return bad("more sources than distinct (src, dst) pairs");
        }
        Ok(())
    }

    fn mobility(&self) -> MobilityParams {
        MobilityParams {
            area: self.area,
            pause_time: self.pause_time,
            v_min: self.v_min,
            v_max: self.v_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub area: Area,
    pub duration: f64,
    pub pause_time: f64,
    pub v_max: f64,
    pub seed: u64,
    pub nodes: Vec<Position>,
    /// Sorted by (time, node).
    pub moves: Vec<Move>,
    pub flows: Vec<CbrFlow>,
}

pub fn scenario_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SCENARIO_STREAM);
    rng
}

/// Placements, waypoint legs and flows; a pure function of `spec`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, ScenarioError> {
    spec.validate()?;
    let mut rng = scenario_rng(spec.seed);
    let params = spec.mobility();
    let nodes: Vec<Position> = (0..spec.node_count)
        .map(|_| spec.area.sample(&mut rng))
        .collect();

    let mut moves = Vec::new();
    for (id, &p) in nodes.iter().enumerate() {
        let mut s = MobilityState::at_rest(p, spec.pause_time);
        loop {
            let t = s.next_change();
            if t >= spec.duration {
                break;
            }
            let was_moving = s.moving;
            let prev_wp = s.waypoint;
            s = waypoint_update(s, t, &params, &mut rng);
            if s.moving && (!was_moving || s.waypoint != prev_wp) {
                moves.push(Move {
                    node: id as NodeId,
                    time: t,
                    x: s.waypoint.x,
                    y: s.waypoint.y,
                    speed: s.speed,
                });
            }
        }
    }
    moves.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.node.cmp(&b.node)));

    let n = spec.node_count;
    let pairs = index::sample(&mut rng, n * (n - 1), spec.source_count);
    let flows = pairs
        .into_iter()
        .map(|i| {
            let src = i / (n - 1);
            let mut dst = i % (n - 1);
            if dst >= src {
                dst += 1;
            }
            CbrFlow {
                src: src as NodeId,
                dst: dst as NodeId,
                start: rng.gen_range(0.0..=spec.start_spread),
                rate: spec.rate,
                payload: spec.payload,
            }
        })
        .collect();

    Ok(Scenario {
        area: spec.area,
        duration: spec.duration,
        pause_time: spec.pause_time,
        v_max: spec.v_max,
        seed: spec.seed,
        nodes,
        moves,
        flows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    t0: f64,
    from: Position,
    to: Position,
    speed: f64,
    arrive: f64,
}

/// Piecewise-linear path of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    start: Position,
    legs: Vec<Leg>,
}

impl Trajectory {
    pub fn stationary(p: Position) -> Self {
        Trajectory {
            start: p,
            legs: Vec::new(),
        }
    }

    /// Moves must be sorted by time. A later move overrides an unfinished leg.
    pub fn from_moves<'a>(start: Position, moves: impl IntoIterator<Item = &'a Move>) -> Self {
        let mut t = Trajectory::stationary(start);
        for m in moves {
            let from = t.position_at(m.time);
            let to = Position::new(m.x, m.y);
            let arrive = if m.speed > 0.0 {
                m.time + from.distance(to) / m.speed
            } else {
                f64::INFINITY
            };
            t.legs.push(Leg {
                t0: m.time,
                from,
                to,
                speed: m.speed,
                arrive,
            });
        }
        t
    }

    pub fn position_at(&self, t: f64) -> Position {
        let i = self.legs.partition_point(|l| l.t0 <= t);
        if i == 0 {
            return self.start;
        }
        let leg = &self.legs[i - 1];
        if leg.speed <= 0.0 {
            return leg.from;
        }
        if t >= leg.arrive {
            return leg.to;
        }
        leg.from.toward(leg.to, leg.speed * (t - leg.t0))
    }
}

impl Scenario {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn trajectories(&self) -> Vec<Trajectory> {
        (0..self.nodes.len())
            .map(|i| {
                Trajectory::from_moves(
                    self.nodes[i],
                    self.moves.iter().filter(|m| m.node as usize == i),
                )
            })
            .collect()
    }

    /// Plain-text form, one directive per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(
            s,
            "set pause {} vmax {} seed {} width {} height {} duration {}",
            self.pause_time,
            self.v_max,
            self.seed,
            self.area.width,
            self.area.height,
            self.duration
        )
        .unwrap();
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(s, "node {i} {} {}", p.x, p.y).unwrap();
        }
        for m in &self.moves {
            writeln!(s, "move {} {} {} {} {}", m.node, m.time, m.x, m.y, m.speed).unwrap();
        }
        for f in &self.flows {
            writeln!(
                s,
                "flow {} {} {} {} {}",
                f.src, f.dst, f.start, f.rate, f.payload
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario {
            area: ScenarioSpec::default().area,
            duration: ScenarioSpec::default().duration,
            pause_time: 0.0,
            v_max: 0.0,
            seed: 1,
            nodes: Vec::new(),
            moves: Vec::new(),
            flows: Vec::new(),
        };
        let mut placed: Vec<Option<Position>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| ScenarioError::Parse { line, msg };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            let num = |w: &str| -> Result<f64, ScenarioError> {
                w.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("bad number '{w}'")))
            };
            let id = |w: &str| -> Result<NodeId, ScenarioError> {
                w.parse::<NodeId>()
                    .map_err(|_| err(format!("bad node id '{w}'")))
            };
            let arity = |n: usize| -> Result<(), ScenarioError> {
                if words.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("'{}' takes {} fields", words[0], n - 1)))
                }
            };
            match words[0] {
                "set" => {
                    if words.len().is_multiple_of(2) {
                        return Err(err("'set' needs key/value pairs".into()));
                    }
                    for kv in words[1..].chunks(2) {
                        match kv[0] {
                            "pause" => sc.pause_time = num(kv[1])?,
                            "vmax" => sc.v_max = num(kv[1])?,
                            "seed" => {
                                sc.seed = kv[1]
                                    .parse()
                                    .map_err(|_| err(format!("bad seed '{}'", kv[1])))?
                            }
                            "width" => sc.area.width = num(kv[1])?,
                            "height" => sc.area.height = num(kv[1])?,
                            "duration" => sc.duration = num(kv[1])?,
                            k => return Err(err(format!("unknown set key '{k}'"))),
                        }
                    }
                }
                "node" => {
                    arity(4)?;
                    let n = id(words[1])? as usize;
                    if placed.len() <= n {
                        placed.resize(n + 1, None);
                    }
                    if placed[n].is_some() {
                        return Err(err(format!("node {n} placed twice")));
                    }
                    placed[n] = Some(Position::new(num(words[2])?, num(words[3])?));
                }
                "move" => {
                    arity(6)?;
                    let m = Move {
                        node: id(words[1])?,
                        time: num(words[2])?,
                        x: num(words[3])?,
                        y: num(words[4])?,
                        speed: num(words[5])?,
                    };
                    if m.time < 0.0 || m.speed < 0.0 {
                        return Err(err("move time and speed must be >= 0".into()));
                    }
                    sc.moves.push(m);
                }
                "flow" => {
                    arity(6)?;
                    let f = CbrFlow {
                        src: id(words[1])?,
                        dst: id(words[2])?,
                        start: num(words[3])?,
                        rate: num(words[4])?,
                        payload: words[5]
                            .parse()
                            .map_err(|_| err(format!("bad payload '{}'", words[5])))?,
                    };
                    if f.src == f.dst {
                        return Err(err("flow source equals destination".into()));
                    }
                    if !(f.rate > 0.0) || f.start < 0.0 {
                        return Err(err("flow needs rate > 0 and start >= 0".into()));
                    }
                    sc.flows.push(f);
                }
                other => return Err(err(format!("unknown directive '{other}'"))),
            }
        }
        sc.nodes = placed
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| ScenarioError::Invalid(format!("node {i} not placed"))))
            .collect::<Result<_, _>>()?;
        let n = sc.nodes.len() as NodeId;
        if n < 2 {
            return Err(ScenarioError::Invalid("need at least two nodes".into()));
        }
        if let Some(bad) = sc
            .moves
            .iter()
            .map(|m| m.node)
            .chain(sc.flows.iter().flat_map(|f| [f.src, f.dst]))
            .find(|&id| id >= n)
        {
            return Err(ScenarioError::Invalid(format!("unknown node {bad}")));
        }
        if !(sc.duration > 0.0 && sc.area.width > 0.0 && sc.area.height > 0.0) {
            return Err(ScenarioError::Invalid(
                "duration and area must be > 0".into(),
            ));
        }
        sc.moves
            .sort_by(|a, b| a.time.total_cmp(&b.time).then(a.node.cmp(&b.node)));
        Ok(sc)
    }
}
