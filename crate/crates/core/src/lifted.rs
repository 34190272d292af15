//! The dynamic coverage law on a lifted nonreversible Markov chain.
//!
//! Each agent i holds two mass variables, z_i and z_i'. The 2n variables
//! form a row vector that is multiplied by a stochastic matrix K every
//! round. The unprimed copy drifts right and the primed copy drifts left,
//! with probability 1/U of switching copies. A token sweeps left to right
//! every U rounds, and the agent holding it re-places itself a prescribed
//! mass to the right of its left neighbour, pushing any agents it passes.
//!
//! States are ordered 1..n, 1'..n'. In code, unprimed agent i (0-based) is
//! state i and its primed copy is state n + i.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::{AgentConfiguration, DensityField};
use crate::error::{CoverageError, Result};
use crate::harness::{ExperimentTrace, Law, StopRule, TraceMetadata, Tracer};

const STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITERS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainVariant {
    /// Half-probability self-loops at interior states; the boundary
    /// rows continue with 1 - 1/U and switch with 1/U.
    Figure2,
    /// No lazy self-loops: continue with 1 - 1/U, switch with 1/U everywhere.
    Uniformized,
}

impl fmt::Display for ChainVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainVariant::Figure2 => "figure2",
            ChainVariant::Uniformized => "uniformized",
        })
    }
}

impl FromStr for ChainVariant {
    type Err = CoverageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "figure2" => Ok(ChainVariant::Figure2),
            "uniformized" => Ok(ChainVariant::Uniformized),
            other => Err(CoverageError::Domain(format!("unknown chain variant `{other}`"))),
        }
    }
}

/// Mass the token holder places between itself and its left neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementRule {
    /// z_j + z_j'.
    Pair,
    /// z_{(j-1)'} + z_j, with z_{0'} = 0.
    Split,
}

impl fmt::Display for MovementRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MovementRule::Pair => "pair",
            MovementRule::Split => "split",
        })
    }
}

impl FromStr for MovementRule {
    type Err = CoverageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(MovementRule::Pair),
            "split" => Ok(MovementRule::Split),
            other => Err(CoverageError::Domain(format!("unknown movement rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftedChain {
    n: usize,
    big_u: usize,
    variant: ChainVariant,
    /// Row-major 2n x 2n.
    dense: Vec<f64>,
    /// Outgoing (target, probability) per state.
    edges: Vec<Vec<(usize, f64)>>,
}

impl LiftedChain {
    pub fn build(n: usize, big_u: usize, variant: ChainVariant) -> Result<Self> {
        if n < 3 {
            return Err(CoverageError::TooFewAgents { what: "lifted chain", n, min: 3 });
        }
        if big_u < 3 {
            return Err(CoverageError::Domain(format!("U = {big_u} must be at least 3")));
        }
        let size = 2 * n;
        let up = |i: usize| i;
        let down = |i: usize| n + i;
        let switch = 1.0 / big_u as f64;
        let cont = 1.0 - switch;
        let lazy = match variant {
            ChainVariant::Figure2 => 0.5,
            ChainVariant::Uniformized => 1.0,
        };

        let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
        for i in 1..n - 1 {
            if variant == ChainVariant::Figure2 {
                edges[up(i)].push((up(i), 0.5));
                edges[down(i)].push((down(i), 0.5));
            }
            edges[up(i)].push((up(i + 1), lazy * cont));
            edges[up(i)].push((down(i + 1), lazy * switch));
            edges[down(i)].push((down(i - 1), lazy * cont));
            edges[down(i)].push((up(i - 1), lazy * switch));
        }
        let last = n - 1;
        edges[up(0)].extend([(up(1), cont), (down(1), switch)]);
        edges[down(0)].extend([(up(0), cont), (down(0), switch)]);
        edges[up(last)].extend([(down(last), cont), (up(last), switch)]);
        edges[down(last)].extend([(down(last - 1), cont), (up(last - 1), switch)]);

        let mut dense = vec![0.0; size * size];
        for (from, out) in edges.iter().enumerate() {
            for &(to, p) in out {
                dense[from * size + to] += p;
            }
        }
        Ok(Self { n, big_u, variant, dense, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn big_u(&self) -> usize {
        self.big_u
    }

    pub fn variant(&self) -> ChainVariant {
        self.variant
    }

    pub fn states(&self) -> usize {
        2 * self.n
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.dense[from * self.states() + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        let s = self.states();
        &self.dense[from * s..(from + 1) * s]
    }

    /// z K.
    pub fn step(&self, z: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; self.states()];
        for (from, out) in self.edges.iter().enumerate() {
            let mass = z[from];
            if mass == 0.0 {
                continue;
            }
            for &(to, p) in out {
                next[to] += mass * p;
            }
        }
        next
    }

    /// Every state reaches every other along positive-probability edges.
    pub fn is_irreducible(&self) -> bool {
        let s = self.states();
        let reach = |forward: bool| {
            let mut seen = vec![false; s];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for (v, seen_v) in seen.iter_mut().enumerate() {
                    let p = if forward { self.entry(u, v) } else { self.entry(v, u) };
                    if p > 0.0 && !*seen_v {
                        *seen_v = true;
                        stack.push(v);
                    }
                }
            }
            seen.into_iter().all(|b| b)
        };
        reach(true) && reach(false)
    }

    /// ||pi K - pi||_1.
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        self.step(pi).iter().zip(pi).map(|(a, b)| (a - b).abs()).sum()
    }

    /// Stationary distribution by power iteration from the uniform vector.
    /// Iterates until the residual reaches the roundoff floor; fails only if
    /// it is still above 1e-13 after 10^6 steps.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let s = self.states();
        let floor = 4.0 * s as f64 * f64::EPSILON;
        let mut pi = vec![1.0 / s as f64; s];
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for _ in 0..STATIONARY_MAX_ITERS {
            let mut next = self.step(&pi);
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= total);
            let residual: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if residual <= floor {
                return Ok(pi);
            }
            if residual < best {
                best = residual;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled > 1000 && best <= STATIONARY_TOL {
                    return Ok(pi);
                }
            }
        }
        if self.stationarity_residual(&pi) <= STATIONARY_TOL {
            return Ok(pi);
        }
        Err(CoverageError::Numerical(format!(
            "power iteration did not reach residual {STATIONARY_TOL:e} in {STATIONARY_MAX_ITERS} steps"
        )))
    }

    /// v(t) = max_i ||(K^t)_i - pi||_1 from t = 0 until it has stayed below
    /// `eps` for 2n consecutive steps. `t_mix` is the first step of that run.
    pub fn mixing_profile(&self, eps: f64, max_steps: usize) -> Result<MixingProfile> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(CoverageError::Domain(format!("eps = {eps} must lie in (0, 1)")));
        }
        let s = self.states();
        let pi = self.stationary()?;
        let mut rows: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                let mut e = vec![0.0; s];
                e[i] = 1.0;
                e
            })
            .collect();
        let distance = |rows: &[Vec<f64>]| {
            rows.iter()
                .map(|r| r.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let window = 2 * self.n;
        let mut vcurve = vec![distance(&rows)];
        let mut run_start: Option<usize> = None;
        for t in 0..=max_steps {
            if t > 0 {
                rows = rows.iter().map(|r| self.step(r)).collect();
                vcurve.push(distance(&rows));
            }
            if vcurve[t] < eps {
                let start = *run_start.get_or_insert(t);
                if t + 1 - start >= window {
                    return Ok(MixingProfile { t_mix: start, vcurve });
                }
            } else {
                run_start = None;
            }
        }
        Err(CoverageError::Numerical(format!(
            "v(t) did not settle below {eps} within {max_steps} steps"
        )))
    }

    /// Smallest entry of K^{4n}.
    pub fn spreading_min(&self) -> f64 {
        let s = self.states();
        let mut min = f64::INFINITY;
        for i in 0..s {
            let mut row = vec![0.0; s];
            row[i] = 1.0;
            for _ in 0..4 * self.n {
                row = self.step(&row);
            }
            min = row.into_iter().fold(min, f64::min);
        }
        min
    }

    /// Dense K as CSV rows, 17 significant digits, no header.
    pub fn to_csv(&self) -> String {
        let s = self.states();
        let mut out = String::new();
        for i in 0..s {
            let row: Vec<String> = self.row(i).iter().map(|&v| crate::harness::fmt_f64(v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixingProfile {
    pub t_mix: usize,
    pub vcurve: Vec<f64>,
}

/// Token holder at round t >= 1 (1-based agent index).
pub fn token(t: usize, big_u: usize) -> usize {
    (t - 1) % big_u + 1
}

/// Half the mass of each agent's Voronoi cell, duplicated into both copies.
pub fn init_z(field: &DensityField, config: &AgentConfiguration) -> Result<Vec<f64>> {
    let x = config.positions();
    let n = x.len();
    if n < 3 {
        return Err(CoverageError::TooFewAgents { what: "dynamic law", n, min: 3 });
    }
    if let Some(i) = x.windows(2).position(|w| w[0] == w[1]) {
        return Err(CoverageError::DegenerateVoronoi(i + 1, i + 2));
    }
    let y: Vec<f64> = x.iter().map(|&v| field.cdf_unchecked(v)).collect();
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(0.0);
    bounds.extend(y.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    bounds.push(field.total_mass());
    let half: Vec<f64> = bounds.windows(2).map(|w| 0.5 * (w[1] - w[0])).collect();
    Ok(half.iter().chain(&half).copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicParams {
    /// Round-trip estimate U; `None` means U = n.
    pub big_u: Option<usize>,
    pub variant: ChainVariant,
    pub rule: MovementRule,
}

impl Default for DynamicParams {
    fn default() -> Self {
        Self { big_u: None, variant: ChainVariant::Uniformized, rule: MovementRule::Split }
    }
}

impl DynamicParams {
    pub fn figure2_pair() -> Self {
        Self { big_u: None, variant: ChainVariant::Figure2, rule: MovementRule::Pair }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicState {
    chain: LiftedChain,
    z: Vec<f64>,
    config: AgentConfiguration,
    round: usize,
    rule: MovementRule,
}

impl DynamicState {
    pub fn new(field: &DensityField, config0: &AgentConfiguration, params: DynamicParams) -> Result<Self> {
        let z = init_z(field, config0)?;
        let n = config0.len();
        let chain = LiftedChain::build(n, params.big_u.unwrap_or(n), params.variant)?;
        Ok(Self { chain, z, config: config0.clone(), round: 0, rule: params.rule })
    }

    /// A state with caller-supplied mass variables.
    pub fn with_z(
        chain: LiftedChain,
        z: Vec<f64>,
        config: AgentConfiguration,
        rule: MovementRule,
    ) -> Result<Self> {
        if config.len() != chain.n() {
            return Err(CoverageError::DimensionMismatch { expected: chain.n(), got: config.len() });
        }
        if z.len() != chain.states() {
            return Err(CoverageError::DimensionMismatch { expected: chain.states(), got: z.len() });
        }
        if z.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(CoverageError::Domain("mass variables must be nonnegative".into()));
        }
        Ok(Self { chain, z, config, round: 0, rule })
    }

    pub fn chain(&self) -> &LiftedChain {
        &self.chain
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn z_sum(&self) -> f64 {
        self.z.iter().sum()
    }

    pub fn config(&self) -> &AgentConfiguration {
        &self.config
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn rule(&self) -> MovementRule {
        self.rule
    }

    pub fn n(&self) -> usize {
        self.config.len()
    }

    /// z <- z K and advance the round counter.
    pub fn chain_step(&mut self) {
        self.z = self.chain.step(&self.z);
        self.round += 1;
    }

    /// Target mass between the token holder (0-based `j`) and its left
    /// neighbour under the current rule.
    fn target_mass(&self, j: usize) -> f64 {
        let n = self.n();
        match self.rule {
            MovementRule::Pair => self.z[j] + self.z[n + j],
            MovementRule::Split => self.z[j] + if j == 0 { 0.0 } else { self.z[n + j - 1] },
        }
    }

    /// Moves the token holder for the current round and pushes any agents
    /// it passes. Rounds whose token exceeds n move nobody.
    pub fn movement_step(&mut self, field: &DensityField) -> Result<()> {
        if self.round == 0 {
            return Err(CoverageError::Domain("movement starts at round 1".into()));
        }
        let j = token(self.round, self.chain.big_u()) - 1;
        if j >= self.n() {
            return Ok(());
        }
        let mass = self.target_mass(j);
        let x = self.config.positions_mut();
        let left = if j == 0 { 0.0 } else { x[j - 1] };
        let target = (field.cdf_unchecked(left) + mass).min(field.total_mass());
        let c = field.inverse_cdf_unchecked(target).max(left);
        x[j] = c;
        for xk in x.iter_mut().skip(j + 1) {
            if *xk < c {
                *xk = c;
            }
        }
        Ok(())
    }

    /// One full round: communication, then movement.
    pub fn step(&mut self, field: &DensityField) -> Result<()> {
        self.chain_step();
        self.movement_step(field)
    }

    /// Deletes agent `index` (0-based). Its mass z_i + z_i' goes to the
    /// left neighbour's unprimed variable, or the right neighbour's for the
    /// leftmost agent. The chain is rebuilt for n - 1 with the same U.
    pub fn remove_agent(&mut self, index: usize) -> Result<()> {
        let n = self.n();
        if n < 4 {
            return Err(CoverageError::TooFewAgents { what: "agent removal", n, min: 4 });
        }
        if index >= n {
            return Err(CoverageError::Domain(format!("agent index {index} out of range for n = {n}")));
        }
        let removed = self.z[index] + self.z[n + index];
        let mut up: Vec<f64> = self.z[..n].to_vec();
        let mut down: Vec<f64> = self.z[n..].to_vec();
        up.remove(index);
        down.remove(index);
        let heir = if index == 0 { 0 } else { index - 1 };
        up[heir] += removed;
        self.z = up.into_iter().chain(down).collect();
        self.config.positions_mut().remove(index);
        self.chain = LiftedChain::build(n - 1, self.chain.big_u(), self.chain.variant())?;
        Ok(())
    }

    /// Inserts a new agent at `x_new` with both mass variables zero.
    /// Returns its 0-based index. U is kept, so if n + 1 > U the rightmost
    /// agent never holds the token and the run cannot settle.
    pub fn add_agent(&mut self, x_new: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x_new) {
            return Err(CoverageError::Domain(format!("new position {x_new} is outside [0, 1]")));
        }
        let n = self.n();
        let index = self.config.positions().partition_point(|&x| x <= x_new);
        let mut up: Vec<f64> = self.z[..n].to_vec();
        let mut down: Vec<f64> = self.z[n..].to_vec();
        up.insert(index, 0.0);
        down.insert(index, 0.0);
        self.z = up.into_iter().chain(down).collect();
        self.config.positions_mut().insert(index, x_new);
        self.chain = LiftedChain::build(n + 1, self.chain.big_u(), self.chain.variant())?;
        Ok(index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChurnEvent {
    /// Remove the agent with this 0-based index.
    Remove(usize),
    Add(f64),
}

fn dynamic_metadata(field: &DensityField, state: &DynamicState) -> TraceMetadata {
    let mut meta = TraceMetadata::new(Law::Dynamic, field, state.n());
    meta.big_u = Some(state.chain.big_u());
    meta.variant = Some(state.chain.variant());
    meta.rule = Some(state.rule);
    meta
}

pub fn run_dynamic(
    field: &DensityField,
    config0: &AgentConfiguration,
    params: DynamicParams,
    stop: StopRule,
) -> Result<ExperimentTrace> {
    let state = DynamicState::new(field, config0, params)?;
    run_dynamic_with_churn(field, state, stop, &[])
}

/// Runs from an existing state, applying each `(round, event)` after that
/// round's movement. Convergence cannot stop the run while events are
/// pending.
pub fn run_dynamic_with_churn(
    field: &DensityField,
    mut state: DynamicState,
    stop: StopRule,
    events: &[(usize, ChurnEvent)],
) -> Result<ExperimentTrace> {
    let mut tracer = Tracer::new(field, stop, dynamic_metadata(field, &state))?;
    let mut pending: Vec<(usize, ChurnEvent)> = events.to_vec();
    pending.sort_by_key(|e| e.0);
    let mut pending = pending.into_iter().peekable();
    loop {
        while let Some(&(at, event)) = pending.peek() {
            if at > state.round() {
                break;
            }
            match event {
                ChurnEvent::Remove(i) => state.remove_agent(i)?,
                ChurnEvent::Add(x) => {
                    state.add_agent(x)?;
                }
            }
            pending.next();
        }
        let may_stop = pending.peek().is_none();
        if let Some(trace) =
            tracer.record_gated(state.round(), state.config(), Some(state.z_sum()), may_stop)
        {
            return Ok(trace);
        }
        state.step(field)?;
    }
}
