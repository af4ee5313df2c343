//! Scenario files: a strict, versioned JSON description of the topology,
//! traffic, control loop, duplication behavior, and outputs of one
//! experiment.
//!
//! Parsing is strict (unknown keys are errors, catching typos); semantic
//! validation is separate and returns every violation with a
//! JSON-pointer-style path, not just the first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlPolicy, PropThreshold};
use crate::linalg::Matrix;
use crate::model::{BoxConstraints, ControlVector, LinearModel, StateVector};

/// Control labels understood by the actuator layer.
pub const ACTUATOR_ROUTE_CLOUD_FRAC: &str = "route_cloud_frac";
pub const ACTUATOR_WAN_SHARE: &str = "wan_share";
pub const ACTUATOR_CLOUD_CAPACITY: &str = "cloud_capacity";
const KNOWN_ACTUATORS: [&str; 3] =
    [ACTUATOR_ROUTE_CLOUD_FRAC, ACTUATOR_WAN_SHARE, ACTUATOR_CLOUD_CAPACITY];

/// The fixed four-component state sampled by the control loop.
pub const STATE_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario is invalid:\n{}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

/// One semantic violation, located by a JSON-pointer-style path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Local,
    Cloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum QueueDiscipline {
    /// FIFO within a QoS class, strict priority across classes.
    #[default]
    FifoPriority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub segment: Segment,
    /// Requests/sec at capacity 1.0 for unit-size requests; service time is
    /// `size / (rate · capacity)`.
    #[serde(default = "default_service_rate")]
    pub service_rate_per_capacity: f64,
    #[serde(default = "one")]
    pub capacity: f64,
    #[serde(default)]
    pub queue_discipline: QueueDiscipline,
    #[serde(default = "default_queue_limit")]
    pub queue_limit: u64,
}

fn default_service_rate() -> f64 {
    10.0
}

fn one() -> f64 {
    1.0
}

fn default_queue_limit() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct QosClassConfig {
    pub name: String,
    /// Guaranteed minimum fraction of the link bandwidth.
    pub min_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LinkConfig {
    pub id: String,
    /// `source` or a node id.
    pub from: String,
    pub to: String,
    /// Data units per second.
    pub bandwidth: f64,
    #[serde(default)]
    pub propagation_delay_sec: f64,
    /// Priority order: first class is served first when contending for
    /// bandwidth beyond the guaranteed shares.
    pub qos_classes: Vec<QosClassConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DispatcherConfig {
    /// Link traversed by requests routed to the local segment.
    pub local_link: String,
    /// Link traversed by requests routed to the cloud segment (the WAN).
    pub cloud_link: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Topology {
    pub nodes: Vec<NodeConfig>,
    pub links: Vec<LinkConfig>,
    pub dispatcher: DispatcherConfig,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            nodes: vec![
                NodeConfig {
                    id: "local1".into(),
                    segment: Segment::Local,
                    service_rate_per_capacity: 10.0,
                    capacity: 1.0,
                    queue_discipline: QueueDiscipline::FifoPriority,
                    queue_limit: default_queue_limit(),
                },
                NodeConfig {
                    id: "cloud1".into(),
                    segment: Segment::Cloud,
                    service_rate_per_capacity: 10.0,
                    capacity: 1.0,
                    queue_discipline: QueueDiscipline::FifoPriority,
                    queue_limit: default_queue_limit(),
                },
            ],
            links: vec![
                LinkConfig {
                    id: "lan".into(),
                    from: "source".into(),
                    to: "local1".into(),
                    bandwidth: 1000.0,
                    propagation_delay_sec: 0.001,
                    qos_classes: vec![
                        QosClassConfig { name: "control".into(), min_share: 0.1 },
                        QosClassConfig { name: "data".into(), min_share: 0.5 },
                    ],
                },
                LinkConfig {
                    id: "wan".into(),
                    from: "source".into(),
                    to: "cloud1".into(),
                    bandwidth: 125.0,
                    propagation_delay_sec: 0.05,
                    qos_classes: vec![
                        QosClassConfig { name: "control".into(), min_share: 0.1 },
                        QosClassConfig { name: "data".into(), min_share: 0.5 },
                    ],
                },
            ],
            dispatcher: DispatcherConfig { local_link: "lan".into(), cloud_link: "wan".into() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TrafficKindName {
    Poisson,
    OnOffBurst,
}

/// Lognormal request-size distribution over data units.
///
/// Defaults give mean 1 and unit coefficient of variation
/// (mu = −ln2/2, sigma = √ln2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SizeDistribution {
    #[serde(default = "default_size_mu")]
    pub mu: f64,
    #[serde(default = "default_size_sigma")]
    pub sigma: f64,
}

fn default_size_mu() -> f64 {
    -std::f64::consts::LN_2 / 2.0
}

fn default_size_sigma() -> f64 {
    std::f64::consts::LN_2.sqrt()
}

impl Default for SizeDistribution {
    fn default() -> Self {
        Self { mu: default_size_mu(), sigma: default_size_sigma() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TrafficProfile {
    pub kind: TrafficKindName,
    /// Poisson arrival rate (poisson kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Arrival rate during ON phases (onOffBurst kind only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_on_sec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_off_sec: Option<f64>,
    #[serde(default = "default_mix")]
    pub qos_class_mix: BTreeMap<String, f64>,
    #[serde(default)]
    pub size_distribution: SizeDistribution,
    /// Base name for this profile's RNG streams; defaults to `traffic{index}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_stream: Option<String>,
}

fn default_mix() -> BTreeMap<String, f64> {
    BTreeMap::from([("data".to_string(), 1.0)])
}

fn default_traffic() -> Vec<TrafficProfile> {
    vec![TrafficProfile {
        kind: TrafficKindName::Poisson,
        rate: Some(5.0),
        on_rate: None,
        off_rate: None,
        mean_on_sec: None,
        mean_off_sec: None,
        qos_class_mix: default_mix(),
        size_distribution: SizeDistribution::default(),
        seed_stream: None,
    }]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum PolicyKind {
    None,
    Static,
    PropThreshold,
    OneStep,
}

/// Declarative policy definition; which optional fields are required depends
/// on `kind` and is checked by validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Fixed control vector (static kind).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_water: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high_water: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_frac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_index: Option<usize>,
    /// Plant matrix A (oneStep kind), nested row arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ref: Option<Vec<f64>>,
    /// Optional state box for the oneStep model; unbounded when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bounds: Option<BoxConstraints>,
}

impl PolicyConfig {
    pub fn none() -> Self {
        Self {
            kind: PolicyKind::None,
            u: None,
            component_index: None,
            low_water: None,
            high_water: None,
            step_frac: None,
            control_index: None,
            a: None,
            b: None,
            x_ref: None,
            state_bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BoundsConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ControlLoopConfig {
    #[serde(default = "one")]
    pub control_period_sec: f64,
    /// Names for the four sampled state components; metadata only.
    #[serde(default = "default_state_labels")]
    pub state_labels: Vec<String>,
    /// Which actuators the control vector drives, in component order.
    #[serde(default = "default_control_labels")]
    pub control_labels: Vec<String>,
    #[serde(default = "default_control_bounds")]
    pub control_bounds: BoundsConfig,
    #[serde(default = "default_initial_u")]
    pub initial_u: Vec<f64>,
    /// QoS class on the WAN link whose share the `wan_share` actuator sets.
    #[serde(default = "default_wan_data_class")]
    pub wan_data_class: String,
    /// Named policy definitions selectable by `policy` or per experiment.
    #[serde(default = "default_policies")]
    pub policies: BTreeMap<String, PolicyConfig>,
    /// Name of the active policy.
    #[serde(default = "default_policy_name")]
    pub policy: String,
}

fn default_state_labels() -> Vec<String> {
    ["local_queue_len", "cloud_queue_len", "wan_utilization", "dup_count"]
        .map(String::from)
        .to_vec()
}

fn default_control_labels() -> Vec<String> {
    KNOWN_ACTUATORS.map(String::from).to_vec()
}

fn default_control_bounds() -> BoundsConfig {
    BoundsConfig { lower: vec![0.0, 0.05, 0.25], upper: vec![1.0, 0.85, 4.0] }
}

fn default_initial_u() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}

fn default_wan_data_class() -> String {
    "data".into()
}

fn default_policies() -> BTreeMap<String, PolicyConfig> {
    BTreeMap::from([("none".to_string(), PolicyConfig::none())])
}

fn default_policy_name() -> String {
    "none".into()
}

impl Default for ControlLoopConfig {
    fn default() -> Self {
        Self {
            control_period_sec: 1.0,
            state_labels: default_state_labels(),
            control_labels: default_control_labels(),
            control_bounds: default_control_bounds(),
            initial_u: default_initial_u(),
            wan_data_class: default_wan_data_class(),
            policies: default_policies(),
            policy: default_policy_name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DuplicationConfig {
    /// Client re-send timeout; a duplicate is emitted every multiple of this
    /// after the original's creation until the family completes.
    #[serde(default = "default_dup_timeout")]
    pub dup_timeout_sec: f64,
    /// Maximum duplicates per original; 0 disables duplication.
    #[serde(default)]
    pub max_dup_depth: u32,
}

fn default_dup_timeout() -> f64 {
    2.0
}

impl Default for DuplicationConfig {
    fn default() -> Self {
        Self { dup_timeout_sec: default_dup_timeout(), max_dup_depth: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    #[serde(default = "yes")]
    pub write_epochs: bool,
    #[serde(default = "yes")]
    pub write_requests: bool,
}

fn default_out_dir() -> String {
    "out".into()
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_out_dir(), write_epochs: true, write_requests: true }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon_sec: f64,
    /// Seed used when neither the CLI flag nor HYBRIDSIM_SEED is given.
    #[serde(default = "default_seed")]
    pub default_seed: u64,
    /// Event budget; exceeding it aborts the run with a partial-trace error.
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default = "default_traffic")]
    pub traffic: Vec<TrafficProfile>,
    #[serde(default)]
    pub control_loop: ControlLoopConfig,
    #[serde(default)]
    pub duplication: DuplicationConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_schema_version() -> u32 {
    1
}

fn default_horizon() -> f64 {
    100.0
}

fn default_seed() -> u64 {
    42
}

fn default_max_events() -> u64 {
    20_000_000
}

fn filesystem_safe(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

/// Parse a scenario file strictly; does not validate semantics.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Parse and validate in one step.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let scenario = parse_scenario(path)?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn control_bounds(&self) -> Result<BoxConstraints, ScenarioError> {
        BoxConstraints::new(
            self.control_loop.control_bounds.lower.clone(),
            self.control_loop.control_bounds.upper.clone(),
        )
        .map_err(|e| {
            ScenarioError::Invalid(vec![Violation {
                path: "/controlLoop/controlBounds".into(),
                message: e.to_string(),
            }])
        })
    }

    pub fn node(&self, id: &str) -> Option<&NodeConfig> {
        self.topology.nodes.iter().find(|n| n.id == id)
    }

    pub fn link(&self, id: &str) -> Option<&LinkConfig> {
        self.topology.links.iter().find(|l| l.id == id)
    }

    /// Index of an actuator label within the control vector, if configured.
    pub fn control_index(&self, label: &str) -> Option<usize> {
        self.control_loop.control_labels.iter().position(|l| l == label)
    }

    /// The configured state-component names as model metadata.
    pub fn state_semantics(&self) -> Result<crate::model::StateSemantics, ScenarioError> {
        crate::model::StateSemantics::new(self.control_loop.state_labels.clone()).map_err(|e| {
            ScenarioError::Invalid(vec![Violation {
                path: "/controlLoop/stateLabels".into(),
                message: e.to_string(),
            }])
        })
    }

    /// Build the runtime policy for a named definition; `none` is always
    /// available even when absent from the map.
    pub fn build_policy(&self, name: &str) -> Result<ControlPolicy, ScenarioError> {
        let invalid = |path: String, message: String| {
            ScenarioError::Invalid(vec![Violation { path, message }])
        };
        let cfg = match self.control_loop.policies.get(name) {
            Some(cfg) => cfg,
            None if name == "none" => return Ok(ControlPolicy::None),
            None => {
                return Err(invalid(
                    "/controlLoop/policies".into(),
                    format!("no policy named `{name}`"),
                ))
            }
        };
        let path = format!("/controlLoop/policies/{name}");
        let bounds = self.control_bounds()?;
        match cfg.kind {
            PolicyKind::None => Ok(ControlPolicy::None),
            PolicyKind::Static => {
                let u = cfg
                    .u
                    .clone()
                    .ok_or_else(|| invalid(path.clone(), "static policy requires `u`".into()))?;
                Ok(ControlPolicy::Static {
                    u: ControlVector::new(u).map_err(|e| invalid(path, e.to_string()))?,
                })
            }
            PolicyKind::PropThreshold => {
                let missing =
                    |f: &str| invalid(path.clone(), format!("propThreshold policy requires `{f}`"));
                Ok(ControlPolicy::PropThreshold(PropThreshold {
                    component_index: cfg.component_index.ok_or_else(|| missing("componentIndex"))?,
                    low_water: cfg.low_water.ok_or_else(|| missing("lowWater"))?,
                    high_water: cfg.high_water.ok_or_else(|| missing("highWater"))?,
                    step_frac: cfg.step_frac.ok_or_else(|| missing("stepFrac"))?,
                    control_index: cfg.control_index.ok_or_else(|| missing("controlIndex"))?,
                }))
            }
            PolicyKind::OneStep => {
                let missing = |f: &str| invalid(path.clone(), format!("oneStep policy requires `{f}`"));
                let a = cfg.a.clone().ok_or_else(|| missing("a"))?;
                let b = cfg.b.clone().ok_or_else(|| missing("b"))?;
                let x_ref = cfg.x_ref.clone().ok_or_else(|| missing("xRef"))?;
                let state_bounds = cfg
                    .state_bounds
                    .clone()
                    .unwrap_or_else(|| BoxConstraints::unbounded(a.rows()));
                let model = LinearModel::new(a, b, state_bounds, bounds)
                    .map_err(|e| invalid(path.clone(), e.to_string()))?;
                Ok(ControlPolicy::OneStep {
                    model,
                    x_ref: StateVector::new(x_ref).map_err(|e| invalid(path, e.to_string()))?,
                })
            }
        }
    }
}

/// Check every invariant and cross-reference; returns all violations.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut v: Vec<Violation> = Vec::new();
    macro_rules! viol {
        ($path:expr, $($arg:tt)*) => {
            v.push(Violation { path: $path.to_string(), message: format!($($arg)*) })
        };
    }

    if s.schema_version != 1 {
        viol!("/schemaVersion", "unsupported schema version {}", s.schema_version);
    }
    if !filesystem_safe(&s.name) {
        viol!("/name", "name `{}` must be non-empty and filesystem-safe", s.name);
    }
    if !(s.horizon_sec.is_finite() && s.horizon_sec > 0.0) {
        viol!("/horizonSec", "horizon must be positive, got {}", s.horizon_sec);
    }
    if s.max_events == 0 {
        viol!("/maxEvents", "event budget must be at least 1");
    }

    // Topology.
    let nodes = &s.topology.nodes;
    if !nodes.iter().any(|n| n.segment == Segment::Local) {
        viol!("/topology/nodes", "at least one local node is required");
    }
    if !nodes.iter().any(|n| n.segment == Segment::Cloud) {
        viol!("/topology/nodes", "at least one cloud node is required");
    }
    for (i, n) in nodes.iter().enumerate() {
        let base = format!("/topology/nodes/{i}");
        if !filesystem_safe(&n.id) {
            viol!(base, "node id `{}` must be non-empty and filesystem-safe", n.id);
        }
        if nodes[..i].iter().any(|p| p.id == n.id) {
            viol!(base, "duplicate node id `{}`", n.id);
        }
        if !(n.service_rate_per_capacity.is_finite() && n.service_rate_per_capacity > 0.0) {
            viol!(format!("{base}/serviceRatePerCapacity"), "must be positive, got {}", n.service_rate_per_capacity);
        }
        if !(n.capacity.is_finite() && n.capacity > 0.0) {
            viol!(format!("{base}/capacity"), "must be positive, got {}", n.capacity);
        }
        if n.queue_limit == 0 {
            viol!(format!("{base}/queueLimit"), "must be at least 1");
        }
    }

    let links = &s.topology.links;
    for (i, l) in links.iter().enumerate() {
        let base = format!("/topology/links/{i}");
        if !filesystem_safe(&l.id) {
            viol!(base, "link id `{}` must be non-empty and filesystem-safe", l.id);
        }
        if links[..i].iter().any(|p| p.id == l.id) {
            viol!(base, "duplicate link id `{}`", l.id);
        }
        if !(l.bandwidth.is_finite() && l.bandwidth > 0.0) {
            viol!(format!("{base}/bandwidth"), "must be positive, got {}", l.bandwidth);
        }
        if !(l.propagation_delay_sec.is_finite() && l.propagation_delay_sec >= 0.0) {
            viol!(format!("{base}/propagationDelaySec"), "must be >= 0, got {}", l.propagation_delay_sec);
        }
        for endpoint in [&l.from, &l.to] {
            if endpoint != "source" && !nodes.iter().any(|n| &n.id == endpoint) {
                viol!(base, "link `{}` endpoint `{endpoint}` is neither `source` nor a node", l.id);
            }
        }
        if l.qos_classes.is_empty() {
            viol!(format!("{base}/qosClasses"), "at least one QoS class is required");
        }
        let mut share_sum = 0.0;
        for (j, c) in l.qos_classes.iter().enumerate() {
            let cbase = format!("{base}/qosClasses/{j}");
            if c.name.is_empty() {
                viol!(cbase, "class name must be non-empty");
            }
            if l.qos_classes[..j].iter().any(|p| p.name == c.name) {
                viol!(cbase, "duplicate class name `{}`", c.name);
            }
            if !(c.min_share.is_finite() && (0.0..=1.0).contains(&c.min_share)) {
                viol!(format!("{cbase}/minShare"), "must be in [0, 1], got {}", c.min_share);
            }
            share_sum += c.min_share;
        }
        if share_sum > 1.0 + 1e-9 {
            viol!(format!("{base}/qosClasses"), "guaranteed shares sum to {share_sum}, exceeding 1");
        }
    }

    let dispatcher = &s.topology.dispatcher;
    let link_exists = |id: &str| links.iter().any(|l| l.id == id);
    if !link_exists(&dispatcher.local_link) {
        viol!("/topology/dispatcher/localLink", "references missing link `{}`", dispatcher.local_link);
    }
    if !link_exists(&dispatcher.cloud_link) {
        viol!("/topology/dispatcher/cloudLink", "references missing link `{}`", dispatcher.cloud_link);
    }
    let link_classes = |id: &str| -> Vec<&str> {
        links
            .iter()
            .find(|l| l.id == id)
            .map(|l| l.qos_classes.iter().map(|c| c.name.as_str()).collect())
            .unwrap_or_default()
    };
    let local_classes = link_classes(&dispatcher.local_link);
    let cloud_classes = link_classes(&dispatcher.cloud_link);

    // Traffic.
    for (i, p) in s.traffic.iter().enumerate() {
        let base = format!("/traffic/{i}");
        let require_rate = |v: &mut Vec<Violation>, field: &str, value: Option<f64>| match value {
            Some(r) if r.is_finite() && r > 0.0 => {}
            Some(r) => v.push(Violation {
                path: format!("{base}/{field}"),
                message: format!("must be positive, got {r}"),
            }),
            None => v.push(Violation {
                path: format!("{base}/{field}"),
                message: format!("required for kind `{:?}`", p.kind),
            }),
        };
        match p.kind {
            TrafficKindName::Poisson => {
                require_rate(&mut v, "rate", p.rate);
                for (field, val) in [
                    ("onRate", p.on_rate),
                    ("offRate", p.off_rate),
                    ("meanOnSec", p.mean_on_sec),
                    ("meanOffSec", p.mean_off_sec),
                ] {
                    if val.is_some() {
                        v.push(Violation {
                            path: format!("{base}/{field}"),
                            message: "not applicable to kind `poisson`".into(),
                        });
                    }
                }
            }
            TrafficKindName::OnOffBurst => {
                require_rate(&mut v, "onRate", p.on_rate);
                require_rate(&mut v, "offRate", p.off_rate);
                require_rate(&mut v, "meanOnSec", p.mean_on_sec);
                require_rate(&mut v, "meanOffSec", p.mean_off_sec);
                if p.rate.is_some() {
                    v.push(Violation {
                        path: format!("{base}/rate"),
                        message: "not applicable to kind `onOffBurst`".into(),
                    });
                }
            }
        }
        if p.qos_class_mix.is_empty() {
            viol!(format!("{base}/qosClassMix"), "must not be empty");
        }
        let mut weight_sum = 0.0;
        for (class, w) in &p.qos_class_mix {
            if !(w.is_finite() && *w >= 0.0) {
                viol!(format!("{base}/qosClassMix/{class}"), "weight must be >= 0, got {w}");
            }
            weight_sum += w;
            for (classes, link) in
                [(&local_classes, &dispatcher.local_link), (&cloud_classes, &dispatcher.cloud_link)]
            {
                if !classes.is_empty() && !classes.contains(&class.as_str()) {
                    viol!(format!("{base}/qosClassMix/{class}"), "class `{class}` is not configured on link `{link}`");
                }
            }
        }
        if !p.qos_class_mix.is_empty() && (weight_sum - 1.0).abs() > 1e-9 {
            viol!(format!("{base}/qosClassMix"), "weights sum to {weight_sum}, expected 1");
        }
        if !(p.size_distribution.sigma.is_finite() && p.size_distribution.sigma >= 0.0) {
            viol!(format!("{base}/sizeDistribution/sigma"), "must be >= 0, got {}", p.size_distribution.sigma);
        }
        if !p.size_distribution.mu.is_finite() {
            viol!(format!("{base}/sizeDistribution/mu"), "must be finite");
        }
        if let Some(stream) = &p.seed_stream {
            if stream.is_empty() {
                viol!(format!("{base}/seedStream"), "must be non-empty when present");
            }
        }
    }

    // Control loop.
    let cl = &s.control_loop;
    let m = cl.control_labels.len();
    if !(cl.control_period_sec.is_finite() && cl.control_period_sec > 0.0) {
        viol!("/controlLoop/controlPeriodSec", "must be positive, got {}", cl.control_period_sec);
    }
    if cl.state_labels.len() != STATE_DIM {
        viol!("/controlLoop/stateLabels", "exactly {STATE_DIM} state labels required, got {}", cl.state_labels.len());
    }
    for (i, l) in cl.state_labels.iter().enumerate() {
        if cl.state_labels[..i].contains(l) {
            viol!("/controlLoop/stateLabels", "duplicate label `{l}`");
        }
    }
    if m == 0 {
        viol!("/controlLoop/controlLabels", "at least one control label is required");
    }
    for (i, l) in cl.control_labels.iter().enumerate() {
        if !KNOWN_ACTUATORS.contains(&l.as_str()) {
            viol!("/controlLoop/controlLabels", "unknown actuator `{l}` (known: {})", KNOWN_ACTUATORS.join(", "));
        }
        if cl.control_labels[..i].contains(l) {
            viol!("/controlLoop/controlLabels", "duplicate actuator `{l}`");
        }
    }
    let bounds_ok = cl.control_bounds.lower.len() == m && cl.control_bounds.upper.len() == m;
    if !bounds_ok {
        viol!("/controlLoop/controlBounds", 
                "bounds dimensions ({}, {}) must match the {} control labels",
                cl.control_bounds.lower.len(),
                cl.control_bounds.upper.len(),
                m
            );
    } else {
        for i in 0..m {
            let (lo, hi) = (cl.control_bounds.lower[i], cl.control_bounds.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                viol!("/controlLoop/controlBounds", "component {i}: [{lo}, {hi}] must be finite with lower <= upper");
                continue;
            }
            match cl.control_labels.get(i).map(String::as_str) {
                Some(ACTUATOR_ROUTE_CLOUD_FRAC) | Some(ACTUATOR_WAN_SHARE) => {
                    if lo < 0.0 || hi > 1.0 {
                        viol!("/controlLoop/controlBounds", 
                                "{}: bounds [{lo}, {hi}] must stay within [0, 1]",
                                cl.control_labels[i]
                            );
                    }
                }
                Some(ACTUATOR_CLOUD_CAPACITY) if lo <= 0.0 => {
                    viol!("/controlLoop/controlBounds", "cloud_capacity lower bound must be positive, got {lo}");
                }
                _ => {}
            }
        }
    }
    if cl.initial_u.len() != m {
        viol!("/controlLoop/initialU", "dimension {} must match the {} control labels", cl.initial_u.len(), m);
    } else if bounds_ok {
        for i in 0..m {
            let u = cl.initial_u[i];
            if !(u.is_finite()
                && cl.control_bounds.lower[i] <= u
                && u <= cl.control_bounds.upper[i])
            {
                viol!("/controlLoop/initialU", 
                        "component {i} = {u} is outside [{}, {}]",
                        cl.control_bounds.lower[i], cl.control_bounds.upper[i]
                    );
            }
        }
    }

    // The wan_share actuator rewrites the data class's guaranteed share on
    // the WAN link, so its upper bound plus the other classes' shares must
    // stay within the link.
    if let Some(idx) = cl.control_labels.iter().position(|l| l == ACTUATOR_WAN_SHARE) {
        if let Some(wan) = links.iter().find(|l| l.id == dispatcher.cloud_link) {
            {
                if !wan.qos_classes.iter().any(|c| c.name == cl.wan_data_class) {
                    viol!("/controlLoop/wanDataClass", 
                            "class `{}` is not configured on WAN link `{}`",
                            cl.wan_data_class, wan.id
                        );
                } else if bounds_ok {
                    let others: f64 = wan
                        .qos_classes
                        .iter()
                        .filter(|c| c.name != cl.wan_data_class)
                        .map(|c| c.min_share)
                        .sum();
                    let hi = cl.control_bounds.upper[idx];
                    if others + hi > 1.0 + 1e-9 {
                        viol!("/controlLoop/controlBounds", 
                                "wan_share upper bound {hi} plus other class shares {others} exceeds 1"
                            );
                    }
                }
            }
        }
    }

    if !cl.policies.contains_key(&cl.policy) && cl.policy != "none" {
        viol!("/controlLoop/policy", "no policy named `{}`", cl.policy);
    }
    for (name, p) in &cl.policies {
        let base = format!("/controlLoop/policies/{name}");
        if !filesystem_safe(name) {
            viol!(base, "policy name `{name}` must be filesystem-safe");
        }
        let forbid = |v: &mut Vec<Violation>, field: &str, present: bool| {
            if present {
                v.push(Violation {
                    path: format!("{base}/{field}"),
                    message: format!("not applicable to kind `{:?}`", p.kind),
                });
            }
        };
        match p.kind {
            PolicyKind::None => {
                forbid(&mut v, "u", p.u.is_some());
                forbid(&mut v, "a", p.a.is_some());
                forbid(&mut v, "componentIndex", p.component_index.is_some());
            }
            PolicyKind::Static => match &p.u {
                Some(u) => {
                    if u.len() != m {
                        viol!(format!("{base}/u"), "dimension {} != {m}", u.len());
                    } else if bounds_ok {
                        for i in 0..m {
                            if !(u[i].is_finite()
                                && cl.control_bounds.lower[i] <= u[i]
                                && u[i] <= cl.control_bounds.upper[i])
                            {
                                viol!(format!("{base}/u"), "component {i} = {} is infeasible", u[i]);
                            }
                        }
                    }
                }
                None => viol!(format!("{base}/u"), "static policy requires `u`"),
            },
            PolicyKind::PropThreshold => {
                match (p.low_water, p.high_water) {
                    (Some(lo), Some(hi)) if lo < hi => {}
                    (Some(lo), Some(hi)) => viol!(base, "lowWater {lo} must be strictly below highWater {hi}"),
                    _ => viol!(base, "propThreshold requires lowWater and highWater"),
                }
                match p.step_frac {
                    Some(f) if f > 0.0 && f <= 1.0 => {}
                    Some(f) => viol!(format!("{base}/stepFrac"), "must be in (0, 1], got {f}"),
                    None => viol!(format!("{base}/stepFrac"), "required"),
                }
                match p.component_index {
                    Some(i) if i < STATE_DIM => {}
                    Some(i) => viol!(format!("{base}/componentIndex"), "{i} out of range for {STATE_DIM} state components"),
                    None => viol!(format!("{base}/componentIndex"), "required"),
                }
                match p.control_index {
                    Some(i) if i < m => {}
                    Some(i) => viol!(format!("{base}/controlIndex"), "{i} out of range for {m} control components"),
                    None => viol!(format!("{base}/controlIndex"), "required"),
                }
            }
            PolicyKind::OneStep => {
                let a_dims = p.a.as_ref().map(|a| (a.rows(), a.cols()));
                match a_dims {
                    Some((r, c)) if r == STATE_DIM && c == STATE_DIM => {}
                    Some((r, c)) => viol!(format!("{base}/a"), "A must be {STATE_DIM}x{STATE_DIM}, got {r}x{c}"),
                    None => viol!(format!("{base}/a"), "required"),
                }
                match p.b.as_ref().map(|b| (b.rows(), b.cols())) {
                    Some((r, c)) if r == STATE_DIM && c == m => {}
                    Some((r, c)) => viol!(format!("{base}/b"), "B must be {STATE_DIM}x{m}, got {r}x{c}"),
                    None => viol!(format!("{base}/b"), "required"),
                }
                match p.x_ref.as_ref() {
                    Some(x) if x.len() == STATE_DIM && x.iter().all(|v| v.is_finite()) => {}
                    Some(x) => viol!(format!("{base}/xRef"), "must be {STATE_DIM} finite components, got {}", x.len()),
                    None => viol!(format!("{base}/xRef"), "required"),
                }
                if let Some(sb) = &p.state_bounds {
                    if sb.dim() != STATE_DIM {
                        viol!(format!("{base}/stateBounds"), "dimension {} != {STATE_DIM}", sb.dim());
                    }
                }
                if let Some(a) = &p.a {
                    if !a.is_finite() {
                        viol!(format!("{base}/a"), "entries must be finite");
                    }
                }
                if let Some(b) = &p.b {
                    if !b.is_finite() {
                        viol!(format!("{base}/b"), "entries must be finite");
                    }
                }
            }
        }
    }

    // Duplication and outputs.
    if !(s.duplication.dup_timeout_sec.is_finite() && s.duplication.dup_timeout_sec > 0.0) {
        viol!("/duplication/dupTimeoutSec", "must be positive, got {}", s.duplication.dup_timeout_sec);
    }
    if s.outputs.directory.is_empty() {
        viol!("/outputs/directory", "must be non-empty");
    }

    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Scenario {
        Scenario::from_json_str(r#"{"name": "minimal"}"#).unwrap()
    }

    #[test]
    fn minimal_scenario_uses_documented_defaults() {
        let s = minimal();
        assert_eq!(s.schema_version, 1);
        assert_eq!(s.horizon_sec, 100.0);
        assert_eq!(s.default_seed, 42);
        assert_eq!(s.control_loop.policy, "none");
        assert_eq!(s.control_loop.control_labels.len(), 3);
        assert_eq!(s.traffic.len(), 1);
        assert!(validate_scenario(&s).is_empty(), "{:?}", validate_scenario(&s));
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let err = Scenario::from_json_str(r#"{"name": "x", "bandwith": 3}"#).unwrap_err();
        assert!(err.to_string().contains("bandwith"));
    }

    #[test]
    fn missing_link_endpoint_is_reported() {
        let mut s = minimal();
        s.topology.links[0].to = "nosuch".into();
        let violations = validate_scenario(&s);
        assert!(violations
            .iter()
            .any(|v| v.message.contains("nosuch") && v.path.contains("links")));
    }

    #[test]
    fn share_sum_violation_reports_the_sum() {
        let mut s = minimal();
        s.topology.links[1].qos_classes = vec![
            QosClassConfig { name: "control".into(), min_share: 0.6 },
            QosClassConfig { name: "data".into(), min_share: 0.6 },
        ];
        let violations = validate_scenario(&s);
        assert!(violations.iter().any(|v| v.message.contains("1.2")));
    }

    #[test]
    fn all_violations_are_collected() {
        let mut s = minimal();
        s.horizon_sec = -1.0;
        s.topology.nodes[0].capacity = 0.0;
        s.duplication.dup_timeout_sec = 0.0;
        let violations = validate_scenario(&s);
        assert!(violations.len() >= 3, "{violations:?}");
    }

    #[test]
    fn serialize_parse_roundtrip_is_identity() {
        let s = minimal();
        let text = serde_json::to_string(&s).unwrap();
        let back = Scenario::from_json_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn build_policy_none_always_available() {
        let s = minimal();
        assert_eq!(s.build_policy("none").unwrap(), ControlPolicy::None);
        assert!(s.build_policy("missing").is_err());
    }

    #[test]
    fn static_policy_must_be_feasible() {
        let mut s = minimal();
        s.control_loop.policies.insert(
            "fixed".into(),
            PolicyConfig {
                kind: PolicyKind::Static,
                u: Some(vec![2.0, 0.5, 1.0]),
                ..PolicyConfig::none()
            },
        );
        let violations = validate_scenario(&s);
        assert!(violations.iter().any(|v| v.path.contains("fixed")));
    }

    #[test]
    fn initial_u_outside_bounds_is_reported() {
        let mut s = minimal();
        s.control_loop.initial_u = vec![2.0, 0.5, 1.0];
        let violations = validate_scenario(&s);
        assert!(violations.iter().any(|v| v.path == "/controlLoop/initialU"));
    }
}
