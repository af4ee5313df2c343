//! Deterministic discrete-event simulator of the hybrid infrastructure.
//!
//! One run is a single-threaded event loop over a logical clock: traffic
//! generators emit requests, the dispatcher routes them to the local or
//! cloud segment, requests traverse the segment's fluid-flow link, queue at
//! the least-loaded node, and are served one at a time. Requests that miss
//! the client timeout spawn duplicates (re-sends) that are routed
//! independently and keep consuming resources even after a sibling has
//! answered. A control loop fires every `controlPeriodSec`, samples the
//! state vector, applies the configured policy, and actuates the result at
//! the epoch boundary (zero-order hold).
//!
//! Determinism: every stochastic concern draws from its own named RNG
//! stream, events are ordered by (timestamp, insertion sequence), and all
//! containers iterate in a fixed order, so a fixed (scenario, seed) pair
//! reproduces the trace byte for byte.

mod event;
mod link;
mod node;

use thiserror::Error;

use crate::control::{apply_policy, ControlError, ControlPolicy};
use crate::model::{BoxConstraints, ControlVector, StateVector};
use crate::rng::SplitMix64;
use crate::scenario::{
    validate_scenario, Scenario, ScenarioError, Segment, TrafficKindName, Violation,
    ACTUATOR_CLOUD_CAPACITY, ACTUATOR_ROUTE_CLOUD_FRAC, ACTUATOR_WAN_SHARE,
};
use crate::trace::{Conservation, EpochSample, RequestRecord, RequestStatus, Route, Trace};
use event::{Event, EventQueue};
use link::FluidLink;
use node::Node;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario is invalid:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("event budget exhausted after {events} events at sim time {sim_time:.3}s")]
    EventLimit { events: u64, sim_time: f64, partial: Box<Trace> },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pending,
    InService,
    Completed,
    Dropped,
}

#[derive(Debug)]
struct Request {
    parent: Option<u64>,
    class: usize,
    size: f64,
    created_at: f64,
    dispatched_at: Option<f64>,
    completed_at: Option<f64>,
    route: Option<Route>,
    status: Status,
    /// On originals: duplicates spawned so far.
    dup_spawned: u32,
    /// On originals: first completion anywhere in the family.
    family_completed_at: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
enum TrafficKind {
    Poisson { rate: f64 },
    OnOffBurst { on_rate: f64, off_rate: f64, mean_on_sec: f64, mean_off_sec: f64 },
}

struct Profile {
    kind: TrafficKind,
    /// (global class id, cumulative weight), in class-name order.
    mix: Vec<(usize, f64)>,
    size_mu: f64,
    size_sigma: f64,
    arrivals: SplitMix64,
    phases: SplitMix64,
    sizes: SplitMix64,
    classes: SplitMix64,
}

struct ControlRuntime {
    policy: ControlPolicy,
    bounds: BoxConstraints,
    period: f64,
    u_prev: Vec<f64>,
    route_idx: Option<usize>,
    wan_idx: Option<usize>,
    cap_idx: Option<usize>,
}

struct World {
    clock: f64,
    horizon: f64,
    max_events: u64,
    queue: EventQueue,
    nodes: Vec<Node>,
    local_nodes: Vec<usize>,
    cloud_nodes: Vec<usize>,
    links: Vec<FluidLink>,
    local_link: usize,
    cloud_link: usize,
    /// Global QoS class name table; requests store indices into it.
    class_names: Vec<String>,
    /// Per link: global class id -> local priority index.
    link_class_idx: Vec<Vec<Option<usize>>>,
    wan_data_class_local: Option<usize>,
    requests: Vec<Request>,
    profiles: Vec<Profile>,
    routing: SplitMix64,
    route_cloud_frac: f64,
    control: ControlRuntime,
    dup_timeout: f64,
    max_dup_depth: u32,
    dup_window: u64,
    epoch_samples: Vec<EpochSample>,
    event_count: u64,
}

impl World {
    fn new(scenario: &Scenario, policy: ControlPolicy, seed: u64) -> Result<Self, SimError> {
        let violations = validate_scenario(scenario);
        if !violations.is_empty() {
            return Err(SimError::Invalid(violations));
        }
        let topo = &scenario.topology;

        let mut class_names: Vec<String> = topo
            .links
            .iter()
            .flat_map(|l| l.qos_classes.iter().map(|c| c.name.clone()))
            .collect();
        class_names.sort();
        class_names.dedup();

        let link_class_idx: Vec<Vec<Option<usize>>> = topo
            .links
            .iter()
            .map(|l| {
                class_names
                    .iter()
                    .map(|name| l.qos_classes.iter().position(|c| &c.name == name))
                    .collect()
            })
            .collect();

        let links: Vec<FluidLink> = topo
            .links
            .iter()
            .map(|l| {
                FluidLink::new(
                    l.bandwidth,
                    l.propagation_delay_sec,
                    l.qos_classes.iter().map(|c| c.min_share).collect(),
                )
            })
            .collect();
        let link_index = |id: &str| topo.links.iter().position(|l| l.id == id).unwrap();
        let local_link = link_index(&topo.dispatcher.local_link);
        let cloud_link = link_index(&topo.dispatcher.cloud_link);

        let wan_data_class_local = topo.links[cloud_link]
            .qos_classes
            .iter()
            .position(|c| c.name == scenario.control_loop.wan_data_class);

        let mut nodes = Vec::new();
        let mut local_nodes = Vec::new();
        let mut cloud_nodes = Vec::new();
        for n in &topo.nodes {
            let seg_link = match n.segment {
                Segment::Local => local_link,
                Segment::Cloud => cloud_link,
            };
            let class_count = topo.links[seg_link].qos_classes.len();
            let idx = nodes.len();
            nodes.push(Node::new(
                n.id.clone(),
                n.service_rate_per_capacity,
                n.capacity,
                n.queue_limit,
                class_count,
            ));
            match n.segment {
                Segment::Local => local_nodes.push(idx),
                Segment::Cloud => cloud_nodes.push(idx),
            }
        }

        let profiles: Vec<Profile> = scenario
            .traffic
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let base = p.seed_stream.clone().unwrap_or_else(|| format!("traffic{i}"));
                let kind = match p.kind {
                    TrafficKindName::Poisson => TrafficKind::Poisson { rate: p.rate.unwrap() },
                    TrafficKindName::OnOffBurst => TrafficKind::OnOffBurst {
                        on_rate: p.on_rate.unwrap(),
                        off_rate: p.off_rate.unwrap(),
                        mean_on_sec: p.mean_on_sec.unwrap(),
                        mean_off_sec: p.mean_off_sec.unwrap(),
                    },
                };
                let mut cum = 0.0;
                let mix = p
                    .qos_class_mix
                    .iter()
                    .map(|(name, w)| {
                        cum += w;
                        (class_names.iter().position(|c| c == name).unwrap(), cum)
                    })
                    .collect();
                Profile {
                    kind,
                    mix,
                    size_mu: p.size_distribution.mu,
                    size_sigma: p.size_distribution.sigma,
                    arrivals: SplitMix64::stream(seed, &format!("{base}:arrivals")),
                    phases: SplitMix64::stream(seed, &format!("{base}:phase")),
                    sizes: SplitMix64::stream(seed, &format!("{base}:size")),
                    classes: SplitMix64::stream(seed, &format!("{base}:class")),
                }
            })
            .collect();

        let cl = &scenario.control_loop;
        let control = ControlRuntime {
            policy,
            bounds: scenario.control_bounds()?,
            period: cl.control_period_sec,
            u_prev: cl.initial_u.clone(),
            route_idx: scenario.control_index(ACTUATOR_ROUTE_CLOUD_FRAC),
            wan_idx: scenario.control_index(ACTUATOR_WAN_SHARE),
            cap_idx: scenario.control_index(ACTUATOR_CLOUD_CAPACITY),
        };

        let mut world = World {
            clock: 0.0,
            horizon: scenario.horizon_sec,
            max_events: scenario.max_events,
            queue: EventQueue::new(),
            nodes,
            local_nodes,
            cloud_nodes,
            links,
            local_link,
            cloud_link,
            class_names,
            link_class_idx,
            wan_data_class_local,
            requests: Vec::new(),
            profiles,
            routing: SplitMix64::stream(seed, "routing"),
            route_cloud_frac: 0.0,
            control,
            dup_timeout: scenario.duplication.dup_timeout_sec,
            max_dup_depth: scenario.duplication.max_dup_depth,
            dup_window: 0,
            epoch_samples: Vec::new(),
            event_count: 0,
        };

        // Control epochs are scheduled first so they win timestamp ties.
        let epochs = (world.horizon / world.control.period + 1e-9).floor() as u64;
        for k in 0..=epochs {
            world.queue.push(k as f64 * world.control.period, Event::ControlEpoch { index: k });
        }

        for i in 0..world.profiles.len() {
            match world.profiles[i].kind {
                TrafficKind::Poisson { rate } => {
                    let t = world.profiles[i].arrivals.next_exp(rate);
                    if t <= world.horizon {
                        world.queue.push(t, Event::Arrival { profile: i });
                    }
                }
                TrafficKind::OnOffBurst { .. } => {
                    world.queue.push(0.0, Event::PhaseStart { profile: i, on: false });
                }
            }
        }

        Ok(world)
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        while let Some((time, event)) = self.queue.pop() {
            if time > self.horizon + 1e-9 {
                break;
            }
            assert!(
                time >= self.clock - 1e-9,
                "event at {time} before clock {}",
                self.clock
            );
            self.clock = self.clock.max(time);
            self.event_count += 1;
            if self.event_count > self.max_events {
                return Err(SimError::EventLimit {
                    events: self.event_count,
                    sim_time: self.clock,
                    partial: Box::new(self.build_trace()),
                });
            }
            match event {
                Event::Arrival { profile } => self.on_arrival(profile),
                Event::PhaseStart { profile, on } => self.on_phase_start(profile, on),
                Event::TransferDue { link, version } => self.on_transfer_due(link, version),
                Event::NodeArrival { request } => self.on_node_arrival(request),
                Event::ServiceDone { node, request } => self.on_service_done(node, request),
                Event::DupCheck { original, k } => self.on_dup_check(original, k),
                Event::ControlEpoch { index } => self.on_control_epoch(index)?,
            }
        }
        Ok(())
    }

    fn on_arrival(&mut self, profile: usize) {
        let p = &mut self.profiles[profile];
        let draw = p.classes.next_f64();
        let class = p
            .mix
            .iter()
            .find(|(_, cum)| draw < *cum)
            .map(|(gid, _)| *gid)
            .unwrap_or(p.mix.last().unwrap().0);
        let size = p.sizes.next_lognormal(p.size_mu, p.size_sigma);
        if let TrafficKind::Poisson { rate } = p.kind {
            let next = self.clock + p.arrivals.next_exp(rate);
            if next <= self.horizon {
                self.queue.push(next, Event::Arrival { profile });
            }
        }
        self.create_request(None, class, size);
    }

    fn on_phase_start(&mut self, profile: usize, on: bool) {
        let horizon = self.horizon;
        let clock = self.clock;
        let p = &mut self.profiles[profile];
        let (rate, mean) = match p.kind {
            TrafficKind::OnOffBurst { on_rate, off_rate, mean_on_sec, mean_off_sec } => {
                if on {
                    (on_rate, mean_on_sec)
                } else {
                    (off_rate, mean_off_sec)
                }
            }
            TrafficKind::Poisson { .. } => unreachable!("poisson profiles have no phases"),
        };
        let end = clock + p.phases.next_exp(1.0 / mean);
        // Pre-generate the whole phase's arrivals; burst arrivals do not
        // self-schedule.
        let mut t = clock + p.arrivals.next_exp(rate);
        while t < end && t <= horizon {
            self.queue.push(t, Event::Arrival { profile });
            t += p.arrivals.next_exp(rate);
        }
        if end <= horizon {
            self.queue.push(end, Event::PhaseStart { profile, on: !on });
        }
    }

    /// Create a request (original or duplicate) and dispatch it.
    fn create_request(&mut self, parent: Option<u64>, class: usize, size: f64) -> u64 {
        let id = self.requests.len() as u64;
        self.requests.push(Request {
            parent,
            class,
            size,
            created_at: self.clock,
            dispatched_at: None,
            completed_at: None,
            route: None,
            status: Status::Pending,
            dup_spawned: 0,
            family_completed_at: None,
        });
        match parent {
            None => {
                if self.max_dup_depth > 0 {
                    let t = self.clock + self.dup_timeout;
                    if t <= self.horizon {
                        self.queue.push(t, Event::DupCheck { original: id, k: 1 });
                    }
                }
            }
            Some(orig) => {
                self.requests[orig as usize].dup_spawned += 1;
                self.dup_window += 1;
            }
        }
        self.dispatch(id);
        id
    }

    /// Route the request and start it across the segment's link.
    fn dispatch(&mut self, id: u64) {
        let draw = self.routing.next_f64();
        let route = if draw < self.route_cloud_frac { Route::Cloud } else { Route::Local };
        let link_idx = match route {
            Route::Local => self.local_link,
            Route::Cloud => self.cloud_link,
        };
        let req = &mut self.requests[id as usize];
        req.route = Some(route);
        let local_class = self.link_class_idx[link_idx][req.class]
            .expect("traffic classes are validated against both links");
        let size = req.size;
        self.links[link_idx].start_transfer(self.clock, local_class, size, id);
        self.schedule_link_due(link_idx);
    }

    fn schedule_link_due(&mut self, link_idx: usize) {
        if let Some(t) = self.links[link_idx].next_completion() {
            self.queue.push(
                t.max(self.clock),
                Event::TransferDue { link: link_idx, version: self.links[link_idx].version() },
            );
        }
    }

    fn on_transfer_due(&mut self, link_idx: usize, version: u64) {
        if self.links[link_idx].version() != version {
            return; // stale schedule, superseded by a later link change
        }
        let delay = self.links[link_idx].propagation_delay();
        let done = self.links[link_idx].take_completed(self.clock);
        for request in done {
            self.queue.push(self.clock + delay, Event::NodeArrival { request });
        }
        self.schedule_link_due(link_idx);
    }

    /// Least-loaded node of the segment; ties go to the lowest node id.
    fn select_node(&self, route: Route) -> usize {
        let candidates = match route {
            Route::Local => &self.local_nodes,
            Route::Cloud => &self.cloud_nodes,
        };
        *candidates
            .iter()
            .min_by(|&&a, &&b| {
                self.nodes[a]
                    .load()
                    .cmp(&self.nodes[b].load())
                    .then_with(|| self.nodes[a].id.cmp(&self.nodes[b].id))
            })
            .expect("validated: every segment has at least one node")
    }

    fn on_node_arrival(&mut self, request: u64) {
        let route = self.requests[request as usize].route.unwrap();
        let node_idx = self.select_node(route);
        let link_idx = match route {
            Route::Local => self.local_link,
            Route::Cloud => self.cloud_link,
        };
        let class = self.link_class_idx[link_idx][self.requests[request as usize].class].unwrap();
        self.requests[request as usize].dispatched_at = Some(self.clock);
        if !self.nodes[node_idx].enqueue(class, request) {
            self.requests[request as usize].status = Status::Dropped;
            return;
        }
        self.try_start_service(node_idx);
    }

    fn try_start_service(&mut self, node_idx: usize) {
        if self.nodes[node_idx].in_service.is_some() {
            return;
        }
        let Some(request) = self.nodes[node_idx].next_request() else {
            return;
        };
        self.nodes[node_idx].in_service = Some(request);
        let req = &mut self.requests[request as usize];
        req.status = Status::InService;
        let duration = self.nodes[node_idx].service_duration(req.size);
        self.queue.push(self.clock + duration, Event::ServiceDone { node: node_idx, request });
    }

    fn on_service_done(&mut self, node_idx: usize, request: u64) {
        {
            let req = &mut self.requests[request as usize];
            req.status = Status::Completed;
            req.completed_at = Some(self.clock);
        }
        let root = self.requests[request as usize].parent.unwrap_or(request);
        let family = &mut self.requests[root as usize];
        if family.family_completed_at.is_none() {
            family.family_completed_at = Some(self.clock);
        }
        self.nodes[node_idx].in_service = None;
        self.try_start_service(node_idx);
    }

    /// Client re-send: while the family has no completion, emit the k-th
    /// duplicate at `createdAt + k·dupTimeout`, up to `max_dup_depth`.
    fn on_dup_check(&mut self, original: u64, k: u32) {
        let orig = &self.requests[original as usize];
        if orig.family_completed_at.is_some() {
            return;
        }
        let (class, size) = (orig.class, orig.size);
        self.create_request(Some(original), class, size);
        if k < self.max_dup_depth {
            let t = self.clock + self.dup_timeout;
            if t <= self.horizon {
                self.queue.push(t, Event::DupCheck { original, k: k + 1 });
            }
        }
    }

    /// x = (local queue length, cloud queue length, WAN utilization over the
    /// last period, duplicates created in the last period).
    fn sample_state(&mut self, epoch_index: u64) -> Vec<f64> {
        for link in &mut self.links {
            link.advance(self.clock);
        }
        let local_q: u64 = self.local_nodes.iter().map(|&i| self.nodes[i].load()).sum();
        let cloud_q: u64 = self.cloud_nodes.iter().map(|&i| self.nodes[i].load()).sum();
        let window = self.links[self.cloud_link].take_window_data(self.clock);
        let wan_util = if epoch_index == 0 {
            0.0
        } else {
            (window / (self.links[self.cloud_link].bandwidth() * self.control.period))
                .clamp(0.0, 1.0)
        };
        vec![local_q as f64, cloud_q as f64, wan_util, self.dup_window as f64]
    }

    /// Apply the control vector to the actuators at the epoch boundary.
    fn actuate(&mut self, u: &[f64]) {
        if let Some(i) = self.control.route_idx {
            self.route_cloud_frac = u[i];
        }
        if let (Some(i), Some(class)) = (self.control.wan_idx, self.wan_data_class_local) {
            self.links[self.cloud_link].set_share(self.clock, class, u[i]);
            self.schedule_link_due(self.cloud_link);
        }
        if let Some(i) = self.control.cap_idx {
            for &n in &self.cloud_nodes {
                self.nodes[n].capacity_scale = u[i];
            }
        }
    }

    fn on_control_epoch(&mut self, index: u64) -> Result<(), SimError> {
        let x = self.sample_state(index);
        let u = if index == 0 {
            self.control.u_prev.clone()
        } else {
            let xv = StateVector::new(x.clone()).expect("sampled state is finite");
            let uv = ControlVector::new(self.control.u_prev.clone()).expect("u_prev is finite");
            apply_policy(&self.control.policy, &xv, &uv, &self.control.bounds)?.into_vec()
        };
        self.epoch_samples.push(EpochSample { t: index, x, u: u.clone() });
        self.actuate(&u);
        self.control.u_prev = u;
        self.dup_window = 0;
        Ok(())
    }

    fn build_trace(&self) -> Trace {
        let mut request_log = Vec::new();
        let mut completed = 0u64;
        let mut dropped = 0u64;
        let mut in_flight = 0u64;
        for (i, r) in self.requests.iter().enumerate() {
            let status = match r.status {
                Status::Completed => {
                    completed += 1;
                    RequestStatus::Completed
                }
                Status::Dropped => {
                    dropped += 1;
                    RequestStatus::Dropped
                }
                Status::Pending | Status::InService => {
                    in_flight += 1;
                    continue;
                }
            };
            request_log.push(RequestRecord {
                id: i as u64,
                parent_id: r.parent,
                qos_class: self.class_names[r.class].clone(),
                size: r.size,
                created_at: r.created_at,
                dispatched_at: r.dispatched_at,
                completed_at: r.completed_at,
                route: r.route,
                status,
            });
        }
        Trace {
            epoch_samples: self.epoch_samples.clone(),
            request_log,
            event_count: self.event_count,
            conservation: Conservation {
                generated: self.requests.len() as u64,
                completed,
                dropped,
                in_flight,
            },
        }
    }
}

/// Run the scenario under its configured policy.
pub fn run(scenario: &Scenario, seed: u64) -> Result<Trace, SimError> {
    run_policy(scenario, &scenario.control_loop.policy, seed)
}

/// Run the scenario under a named policy from its policy map (`none` is
/// always available).
pub fn run_policy(scenario: &Scenario, policy_name: &str, seed: u64) -> Result<Trace, SimError> {
    let policy = scenario.build_policy(policy_name)?;
    let mut world = World::new(scenario, policy, seed)?;
    world.run_loop()?;
    Ok(world.build_trace())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario_json(extra: &str) -> Scenario {
        let text = format!(
            r#"{{
                "name": "unit",
                "horizonSec": 10.0
                {extra}
            }}"#
        );
        Scenario::from_json_str(&text).unwrap()
    }

    fn stalled_scenario() -> Scenario {
        // Service effectively never finishes: capacity 1e-12.
        let mut s = scenario_json("");
        s.topology.nodes[0].capacity = 1e-12;
        s.topology.nodes[1].capacity = 1e-12;
        s.traffic.clear();
        s
    }

    #[test]
    fn empty_traffic_produces_empty_trace() {
        let mut s = scenario_json("");
        s.traffic.clear();
        let trace = run(&s, 1).unwrap();
        assert_eq!(trace.conservation.generated, 0);
        for e in &trace.epoch_samples {
            assert_eq!(e.x[0], 0.0);
            assert_eq!(e.x[1], 0.0);
        }
        assert_eq!(trace.epoch_samples.len(), 11);
    }

    #[test]
    fn same_seed_reproduces_trace_exactly() {
        let s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 8.0}]"#);
        let a = run(&s, 42).unwrap();
        let b = run(&s, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_changes_trace() {
        let s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 8.0}]"#);
        let a = run(&s, 1).unwrap();
        let b = run(&s, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn route_frac_zero_sends_everything_local() {
        let s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 5.0}]"#);
        let trace = run(&s, 7).unwrap();
        assert!(trace.conservation.generated > 0);
        assert!(trace.request_log.iter().all(|r| r.route == Some(Route::Local)));
    }

    #[test]
    fn route_frac_one_sends_everything_cloud() {
        let mut s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 5.0}]"#);
        s.control_loop.initial_u = vec![1.0, 0.5, 1.0];
        let trace = run(&s, 7).unwrap();
        assert!(trace.conservation.generated > 0);
        assert!(trace.request_log.iter().all(|r| r.route == Some(Route::Cloud)));
    }

    #[test]
    fn conservation_holds_across_seeds() {
        let s = scenario_json(
            r#", "traffic": [{"kind": "poisson", "rate": 20.0}],
               "duplication": {"dupTimeoutSec": 0.3, "maxDupDepth": 2}"#,
        );
        for seed in 0..5 {
            let t = run(&s, seed).unwrap();
            assert_eq!(
                t.conservation.generated,
                t.conservation.completed + t.conservation.dropped + t.conservation.in_flight
            );
        }
    }

    #[test]
    fn stalled_node_shows_queue_in_state_sample() {
        let s = stalled_scenario();
        let policy = s.build_policy("none").unwrap();
        let mut w = World::new(&s, policy, 1).unwrap();
        // Inject five requests directly at the local node.
        let data_class = w.class_names.iter().position(|c| c == "data").unwrap();
        for _ in 0..5 {
            let id = w.create_request(None, data_class, 1.0);
            w.requests[id as usize].route = Some(Route::Local);
            w.on_node_arrival(id);
        }
        let x = w.sample_state(1);
        assert_eq!(x[0], 5.0);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn least_loaded_node_wins_and_ties_go_to_lowest_id() {
        let mut s = scenario_json("");
        s.topology.nodes.push(crate::scenario::NodeConfig {
            id: "local0".into(),
            segment: Segment::Local,
            service_rate_per_capacity: 10.0,
            capacity: 1.0,
            queue_discipline: Default::default(),
            queue_limit: 100,
        });
        s.traffic.clear();
        let policy = s.build_policy("none").unwrap();
        let mut w = World::new(&s, policy, 1).unwrap();
        let local1 = w.nodes.iter().position(|n| n.id == "local1").unwrap();
        let local0 = w.nodes.iter().position(|n| n.id == "local0").unwrap();
        // Load local1 with 3, local0 with 1: least-loaded wins.
        for (node, count) in [(local1, 3u64), (local0, 1u64)] {
            for i in 0..count {
                w.nodes[node].enqueue(0, 1000 + i);
            }
        }
        assert_eq!(w.select_node(Route::Local), local0);
        // Equalize: tie breaks to the lexicographically lowest id.
        w.nodes[local0].enqueue(0, 2000);
        w.nodes[local0].enqueue(0, 2001);
        assert_eq!(w.nodes[local0].load(), w.nodes[local1].load());
        assert_eq!(w.select_node(Route::Local), local0);
    }

    #[test]
    fn stalled_service_spawns_duplicates_on_schedule() {
        let mut s = stalled_scenario();
        s.horizon_sec = 10.0;
        s.duplication.dup_timeout_sec = 1.0;
        s.duplication.max_dup_depth = 2;
        let policy = s.build_policy("none").unwrap();
        let mut w = World::new(&s, policy, 1).unwrap();
        let data_class = w.class_names.iter().position(|c| c == "data").unwrap();
        w.create_request(None, data_class, 1.0);
        w.run_loop().unwrap();
        let dups: Vec<&Request> = w.requests.iter().filter(|r| r.parent.is_some()).collect();
        assert_eq!(dups.len(), 2);
        assert!((dups[0].created_at - 1.0).abs() < 1e-9);
        assert!((dups[1].created_at - 2.0).abs() < 1e-9);
        assert_eq!(w.requests[0].dup_spawned, 2);
    }

    #[test]
    fn completion_before_timeout_spawns_no_duplicates() {
        let mut s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 2.0}]"#);
        s.duplication.dup_timeout_sec = 50.0;
        s.duplication.max_dup_depth = 3;
        let trace = run(&s, 3).unwrap();
        assert!(trace.conservation.generated > 0);
        assert!(trace.request_log.iter().all(|r| r.parent_id.is_none()));
    }

    #[test]
    fn max_dup_depth_zero_disables_duplication() {
        let mut s = stalled_scenario();
        s.traffic = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 5.0}]"#).traffic;
        s.duplication.dup_timeout_sec = 0.5;
        s.duplication.max_dup_depth = 0;
        let trace = run(&s, 5).unwrap();
        assert!(trace.request_log.iter().all(|r| r.parent_id.is_none()));
    }

    #[test]
    fn duplicate_count_never_exceeds_depth() {
        let mut s = scenario_json(
            r#", "traffic": [{"kind": "poisson", "rate": 30.0}],
               "duplication": {"dupTimeoutSec": 0.2, "maxDupDepth": 3}"#,
        );
        s.topology.nodes[0].capacity = 0.05;
        let policy = s.build_policy("none").unwrap();
        let mut w = World::new(&s, policy, 11).unwrap();
        w.run_loop().unwrap();
        for r in &w.requests {
            assert!(r.dup_spawned <= 3);
        }
    }

    #[test]
    fn cloud_capacity_actuation_scales_future_service() {
        let mut s = scenario_json("");
        s.traffic.clear();
        let policy = s.build_policy("none").unwrap();
        let mut w = World::new(&s, policy, 1).unwrap();
        let cloud = w.cloud_nodes[0];
        let before = w.nodes[cloud].service_duration(1.0);
        w.actuate(&[0.0, 0.5, 2.0]);
        let after = w.nodes[cloud].service_duration(1.0);
        assert!((after - before / 2.0).abs() < 1e-12);
    }

    #[test]
    fn event_budget_aborts_with_partial_trace() {
        let mut s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 50.0}]"#);
        s.max_events = 20;
        match run(&s, 1) {
            Err(SimError::EventLimit { events, partial, .. }) => {
                assert!(events > 20);
                assert!(partial.event_count > 0);
            }
            other => panic!("expected event-limit abort, got {other:?}"),
        }
    }

    #[test]
    fn invalid_scenario_is_rejected_by_run() {
        let mut s = scenario_json("");
        s.horizon_sec = -5.0;
        assert!(matches!(run(&s, 1), Err(SimError::Invalid(_))));
    }

    #[test]
    fn epoch_timestamps_count_up_by_one() {
        let s = scenario_json(r#", "traffic": [{"kind": "poisson", "rate": 3.0}]"#);
        let trace = run(&s, 2).unwrap();
        for (i, e) in trace.epoch_samples.iter().enumerate() {
            assert_eq!(e.t, i as u64);
        }
    }
}
