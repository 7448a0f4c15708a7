//! Stochastic cell transmission model with an optional two-link merge.
//!
//! Densities are in vehicles per metre, flows in vehicles per second, speeds
//! in metres per second. Each step draws a fresh free-flow speed `V` and
//! congestion wave speed `W` for every cell, then
//!
//! ```text
//! D = min(V ρ, Q)              S = min(W (P - ρ), Q)
//! Φ(i -> i+1) = min(D_i, S_{i+1})
//! ρ(t+1) = ρ(t) + T/L (Φ+ - Φ-)
//! ```
//!
//! At a merge both upstream cells compete for the supply of the receiving
//! cell in proportion to their densities. The last cell of a link that does
//! not merge discharges its full demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, uniform, SimRng};
use crate::series::FlowSeries;

const DENSITY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub cells: usize,
    /// Cell length `L` in metres.
    pub cell_length: f64,
    /// Cell capacity `Q` in vehicles per second.
    pub q_max: f64,
    /// Jam density `P` in vehicles per metre.
    pub jam_density: f64,
}

/// The last cell of `from_link` and cell `into_cell - 1` of `into_link`
/// both feed cell `into_cell` (0-based) of `into_link`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeSpec {
    pub from_link: usize,
    pub into_link: usize,
    pub into_cell: usize,
}

/// A sensor tap: `(link, cell)`, both 0-based. The reading is the tapped
/// cell's outflow.
pub type SensorTap = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmNetwork {
    pub links: Vec<LinkSpec>,
    /// Step length `T` in seconds.
    pub time_step: f64,
    pub merge: Option<MergeSpec>,
    pub v_range: (f64, f64),
    pub w_range: (f64, f64),
    pub sensors: Vec<SensorTap>,
}

impl CtmNetwork {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.links.is_empty() {
            return bad("network has no links".into());
        }
        if !(self.time_step > 0.0) {
            return bad(format!("time step must be positive, got {}", self.time_step));
        }
        let (v0, v1) = self.v_range;
        let (w0, w1) = self.w_range;
        if !(v0 > 0.0 && v0 <= v1) || !(w0 > 0.0 && w0 <= w1) {
            return bad(format!("speed ranges must satisfy 0 < min <= max, got V {:?}, W {:?}", self.v_range, self.w_range));
        }
        for (k, l) in self.links.iter().enumerate() {
            if l.cells == 0 || !(l.cell_length > 0.0) || !(l.q_max > 0.0) || !(l.jam_density > 0.0) {
                return bad(format!("link {k} needs positive cells, length, capacity and jam density"));
            }
            if v1 * self.time_step > l.cell_length || w1 * self.time_step > l.cell_length {
                return bad(format!(
                    "CFL condition violated on link {k}: V_max·T = {}, W_max·T = {}, L = {}",
                    v1 * self.time_step,
                    w1 * self.time_step,
                    l.cell_length
                ));
            }
        }
        if let Some(m) = self.merge {
            if m.from_link == m.into_link || m.from_link >= self.links.len() || m.into_link >= self.links.len() {
                return bad(format!("merge links out of range: {m:?}"));
            }
            if m.into_cell == 0 || m.into_cell >= self.links[m.into_link].cells {
                return bad(format!("merge cell {} outside link {}", m.into_cell, m.into_link));
            }
            if self.links[m.from_link].cell_length != self.links[m.into_link].cell_length {
                return bad("merging links must share a cell length".into());
            }
        }
        for &(l, c) in &self.sensors {
            if l >= self.links.len() || c >= self.links[l].cells {
                return bad(format!("sensor ({l}, {c}) outside the network"));
            }
        }
        Ok(())
    }

    pub fn empty_state(&self) -> CtmState {
        CtmState { densities: self.links.iter().map(|l| vec![0.0; l.cells]).collect(), t: 0 }
    }

    /// Total vehicles on the network.
    pub fn vehicles(&self, state: &CtmState) -> f64 {
        self.links
            .iter()
            .zip(&state.densities)
            .map(|(l, d)| l.cell_length * d.iter().sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmState {
    pub densities: Vec<Vec<f64>>,
    pub t: u64,
}

/// Flows of one step, in vehicles per second.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFlows {
    /// Outflow of every cell, per link.
    pub outflow: Vec<Vec<f64>>,
    /// Boundary inflow accepted into the first cell of each link.
    pub boundary_in: Vec<f64>,
    /// Flow leaving the network from the last cell of each non-merging link.
    pub boundary_out: Vec<f64>,
}

impl StepFlows {
    pub fn total_in(&self) -> f64 {
        self.boundary_in.iter().sum()
    }

    pub fn total_out(&self) -> f64 {
        self.boundary_out.iter().sum()
    }
}

/// Advances the network by one step. `inflows` holds the boundary demand for
/// the first cell of every link; the accepted part is capped by that cell's
/// supply.
pub fn ctm_step(network: &CtmNetwork, state: &CtmState, inflows: &[f64], rng: &mut SimRng) -> Result<(CtmState, StepFlows)> {
    if inflows.len() != network.links.len() {
        return Err(Error::LengthMismatch(format!("{} inflows for {} links", inflows.len(), network.links.len())));
    }
    if let Some(f) = inflows.iter().find(|f| !(**f >= 0.0)) {
        return Err(Error::InvalidParameter(format!("boundary inflow must be >= 0, got {f}")));
    }

    let mut demand = Vec::with_capacity(network.links.len());
    let mut supply = Vec::with_capacity(network.links.len());
    for (link, rho) in network.links.iter().zip(&state.densities) {
        let mut d = Vec::with_capacity(link.cells);
        let mut s = Vec::with_capacity(link.cells);
        for &r in rho {
            let v = uniform(rng, network.v_range.0, network.v_range.1);
            let w = uniform(rng, network.w_range.0, network.w_range.1);
            d.push((v * r).min(link.q_max));
            s.push((w * (link.jam_density - r)).max(0.0).min(link.q_max));
        }
        demand.push(d);
        supply.push(s);
    }

    let mut outflow: Vec<Vec<f64>> = network.links.iter().map(|l| vec![0.0; l.cells]).collect();
    let mut boundary_out = vec![0.0; network.links.len()];
    for (k, link) in network.links.iter().enumerate() {
        let last = link.cells - 1;
        for i in 0..last {
            outflow[k][i] = demand[k][i].min(supply[k][i + 1]);
        }
        if network.merge.map_or(true, |m| m.from_link != k) {
            outflow[k][last] = demand[k][last];
            boundary_out[k] = demand[k][last];
        }
    }
    if let Some(m) = network.merge {
        let (a_link, a_cell) = (m.into_link, m.into_cell - 1);
        let (b_link, b_cell) = (m.from_link, network.links[m.from_link].cells - 1);
        let s = supply[m.into_link][m.into_cell];
        let (ra, rb) = (state.densities[a_link][a_cell], state.densities[b_link][b_cell]);
        let (share_a, share_b) = if ra + rb > 0.0 { (ra / (ra + rb), rb / (ra + rb)) } else { (0.5, 0.5) };
        outflow[a_link][a_cell] = demand[a_link][a_cell].min(s * share_a);
        outflow[b_link][b_cell] = demand[b_link][b_cell].min(s * share_b);
    }

    let boundary_in: Vec<f64> = inflows.iter().zip(&supply).map(|(&f, s)| f.min(s[0])).collect();

    let mut next = state.clone();
    next.t += 1;
    for (k, link) in network.links.iter().enumerate() {
        let ratio = network.time_step / link.cell_length;
        for i in 0..link.cells {
            let mut inflow = if i == 0 { boundary_in[k] } else { outflow[k][i - 1] };
            if let Some(m) = network.merge {
                if k == m.into_link && i == m.into_cell {
                    inflow += outflow[m.from_link][network.links[m.from_link].cells - 1];
                }
            }
            let rho = state.densities[k][i] + ratio * (inflow - outflow[k][i]);
            if rho < -DENSITY_SLACK || rho > link.jam_density + DENSITY_SLACK {
                return Err(Error::Internal(format!(
                    "density {rho} left [0, {}] in cell {i} of link {k} at step {}",
                    link.jam_density, state.t
                )));
            }
            next.densities[k][i] = rho.clamp(0.0, link.jam_density);
        }
    }
    Ok((next, StepFlows { outflow, boundary_in, boundary_out }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CtmScenario {
    /// One link of 100 cells with four sensors near its start.
    C1,
    /// A 100-cell link merging into cell 100 of a 200-cell link.
    C2,
}

/// Physical constants, demand profile and sensor placement for a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CtmConfig {
    pub cell_length: f64,
    pub time_step: f64,
    pub v_range: (f64, f64),
    pub w_range: (f64, f64),
    pub jam_density: f64,
    pub q_max: f64,
    /// Demand as fractions of capacity, alternating high then low.
    pub demand_high: f64,
    pub demand_low: f64,
    /// Steps per demand phase.
    pub demand_period: usize,
    /// Half-width of the uniform demand noise, as a fraction of capacity.
    pub demand_noise: f64,
    /// 1-based `(link, cell)` taps; empty means the scenario default.
    pub sensors: Vec<(usize, usize)>,
    /// Steps aggregated into one sample.
    pub window: usize,
    /// Steps simulated and discarded before recording.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for CtmConfig {
    fn default() -> Self {
        Self {
            cell_length: 100.0,
            time_step: 3.0,
            v_range: (20.0, 30.0),
            w_range: (5.0, 8.0),
            jam_density: 0.15,
            q_max: 0.6,
            demand_high: 0.8,
            demand_low: 0.2,
            demand_period: 200,
            demand_noise: 0.1,
            sensors: Vec::new(),
            window: 1,
            warmup: 200,
            seed: 0,
        }
    }
}

impl CtmScenario {
    pub fn default_sensors(&self) -> Vec<(usize, usize)> {
        match self {
            CtmScenario::C1 => vec![(1, 5), (1, 10), (1, 15), (1, 20)],
            CtmScenario::C2 => vec![(1, 95), (2, 95), (1, 105)],
        }
    }

    pub fn network(&self, config: &CtmConfig) -> Result<CtmNetwork> {
        let link = |cells| LinkSpec {
            cells,
            cell_length: config.cell_length,
            q_max: config.q_max,
            jam_density: config.jam_density,
        };
        let (links, merge) = match self {
            CtmScenario::C1 => (vec![link(100)], None),
            CtmScenario::C2 => (vec![link(200), link(100)], Some(MergeSpec { from_link: 1, into_link: 0, into_cell: 99 })),
        };
        let taps = if config.sensors.is_empty() { self.default_sensors() } else { config.sensors.clone() };
        let sensors = taps
            .iter()
            .map(|&(l, c)| {
                if l == 0 || c == 0 {
                    Err(Error::InvalidParameter(format!("sensor ({l}, {c}) must use 1-based indices")))
                } else {
                    Ok((l - 1, c - 1))
                }
            })
            .collect::<Result<_>>()?;
        let net = CtmNetwork {
            links,
            time_step: config.time_step,
            merge,
            v_range: config.v_range,
            w_range: config.w_range,
            sensors,
        };
        net.validate()?;
        Ok(net)
    }
}

impl CtmConfig {
    fn validate(&self) -> Result<()> {
        if self.window == 0 || self.demand_period == 0 {
            return Err(Error::InvalidParameter("window and demand period must be >= 1".into()));
        }
        for (name, v) in [("demand_high", self.demand_high), ("demand_low", self.demand_low), ("demand_noise", self.demand_noise)] {
            if !(v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Boundary demand at step `t` (vehicles per second) before noise.
    pub fn demand(&self, t: usize) -> f64 {
        let frac = if (t / self.demand_period) % 2 == 0 { self.demand_high } else { self.demand_low };
        frac * self.q_max
    }
}

/// Simulates `n` samples of a scenario and returns one series per sensor,
/// named `s1..sK` in tap order.
///
/// Each sample counts whole vehicles leaving the tapped cell during the
/// window: the cumulative outflow is floored and differenced, so no vehicle
/// is lost to rounding.
pub fn run_scenario(kind: CtmScenario, n: usize, config: &CtmConfig) -> Result<Vec<FlowSeries>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    config.validate()?;
    let net = kind.network(config)?;
    let mut speeds = stream(config.seed, "ctm/speeds");
    let mut demand_rng: Vec<SimRng> =
        (0..net.links.len()).map(|k| stream(config.seed, &format!("ctm/demand{}", k + 1))).collect();

    let steps = config.warmup + n * config.window;
    let mut state = net.empty_state();
    let mut cumulative = vec![0.0f64; net.sensors.len()];
    let mut recorded = vec![0u64; net.sensors.len()];
    let mut samples: Vec<Vec<u64>> = vec![Vec::with_capacity(n); net.sensors.len()];
    let mut inflows = vec![0.0; net.links.len()];
    for t in 0..steps {
        let base = config.demand(t);
        for (f, r) in inflows.iter_mut().zip(demand_rng.iter_mut()) {
            let noise = uniform(r, -config.demand_noise, config.demand_noise) * config.q_max;
            *f = (base + noise).max(0.0);
        }
        let (next, flows) = ctm_step(&net, &state, &inflows, &mut speeds)?;
        state = next;
        if t < config.warmup {
            continue;
        }
        for (j, &(l, c)) in net.sensors.iter().enumerate() {
            cumulative[j] += flows.outflow[l][c] * net.time_step;
        }
        if (t - config.warmup + 1) % config.window == 0 {
            for j in 0..net.sensors.len() {
                let whole = cumulative[j].floor() as u64;
                samples[j].push(whole - recorded[j]);
                recorded[j] = whole;
            }
        }
    }
    let period = (config.window as f64 * config.time_step).round().max(1.0) as u64;
    samples
        .into_iter()
        .enumerate()
        .map(|(j, s)| FlowSeries::new(format!("s{}", j + 1), s, period))
        .collect()
}
