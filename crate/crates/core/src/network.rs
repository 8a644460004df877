//! Star topologies, per-node parameters, run descriptions and the Paris
//! presets.

use crate::hardware::{FiberParams, HardwareError, HardwareParams};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Qonnector,
    Qlient,
    Qomputer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Qonnector => "qonnector",
            Role::Qlient => "qlient",
            Role::Qomputer => "qomputer",
        }
    }

    /// Qomputers are qlients with extra capabilities and may appear wherever
    /// a qlient endpoint is expected.
    pub fn is_endpoint(self) -> bool {
        matches!(self, Role::Qlient | Role::Qomputer)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qonnector" => Ok(Role::Qonnector),
            "qlient" => Ok(Role::Qlient),
            "qomputer" => Ok(Role::Qomputer),
            _ => Err(NetworkError::UnknownValue {
                key: "role",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetworkError {
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("exactly one qonnector is required, found {0}")]
    QonnectorCount(usize),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("star topology violated: {0}")]
    NotStar(String),
    #[error("node `{node}`: {source}")]
    InvalidNode { node: String, source: HardwareError },
    #[error("link `{a}`-`{b}`: {source}")]
    InvalidLink {
        a: String,
        b: String,
        source: HardwareError,
    },
    #[error("unknown parameter `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`")]
    UnknownValue { key: &'static str, value: String },
    #[error("{protocol} needs {expected} participants, got {got}")]
    Arity {
        protocol: ProtocolKind,
        expected: &'static str,
        got: usize,
    },
    #[error("{protocol}: `{node}` must be a {expected}")]
    WrongRole {
        protocol: ProtocolKind,
        node: String,
        expected: &'static str,
    },
    #[error("participant `{0}` appears twice")]
    RepeatedParticipant(String),
    #[error("run parameter {0} is out of range")]
    BadRun(&'static str),
}

/// Node-level parameter names accepted by [`set_node_param`].
pub const NODE_KEYS: [&str; 17] = [
    "f_qubit",
    "p_qubit",
    "p_flip",
    "f_EPR",
    "p_EPR",
    "p_EPR_multi",
    "f_GHZ",
    "p_fusion",
    "eta_herald",
    "p_det",
    "p_crosstalk",
    "R_dark",
    "dt_det",
    "p_transmit",
    "t_gate",
    "p_BSM",
    "lambda_depol",
];

/// Link-level parameter names accepted by [`set_link_param`].
pub const LINK_KEYS: [&str; 4] = ["length_km", "eta_fiber", "p_coupling", "p_dephase"];

fn node_field<'a>(hw: &'a mut HardwareParams, key: &str) -> Option<&'a mut f64> {
    let s = &mut hw.source;
    let d = &mut hw.detector;
    Some(match key {
        "f_qubit" => &mut s.f_qubit,
        "p_qubit" => &mut s.p_qubit,
        "p_flip" => &mut s.p_flip,
        "f_EPR" => &mut s.f_epr,
        "p_EPR" => &mut s.p_epr,
        "p_EPR_multi" => &mut s.p_epr_multi,
        "f_GHZ" => &mut s.f_ghz,
        "p_fusion" => &mut s.p_fusion,
        "eta_herald" => &mut s.eta_herald,
        "p_det" => &mut d.p_det,
        "p_crosstalk" => &mut d.p_crosstalk,
        "R_dark" => &mut d.r_dark,
        "dt_det" => &mut d.dt_det,
        "p_transmit" => &mut hw.p_transmit,
        "t_gate" => &mut hw.t_gate,
        "p_BSM" => &mut hw.p_bsm,
        "lambda_depol" => &mut hw.lambda_depol,
        _ => return None,
    })
}

fn link_field<'a>(fiber: &'a mut FiberParams, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "length_km" => &mut fiber.length_km,
        "eta_fiber" => &mut fiber.eta_fiber,
        "p_coupling" => &mut fiber.p_coupling,
        "p_dephase" => &mut fiber.p_dephase,
        _ => return None,
    })
}

pub fn set_node_param(hw: &mut HardwareParams, key: &str, value: f64) -> Result<(), NetworkError> {
    *node_field(hw, key).ok_or_else(|| NetworkError::UnknownKey(key.to_string()))? = value;
    Ok(())
}

pub fn node_param(hw: &HardwareParams, key: &str) -> Option<f64> {
    let mut copy = *hw;
    node_field(&mut copy, key).map(|v| *v)
}

pub fn set_link_param(fiber: &mut FiberParams, key: &str, value: f64) -> Result<(), NetworkError> {
    *link_field(fiber, key).ok_or_else(|| NetworkError::UnknownKey(key.to_string()))? = value;
    Ok(())
}

pub fn link_param(fiber: &FiberParams, key: &str) -> Option<f64> {
    let mut copy = *fiber;
    link_field(&mut copy, key).map(|v| *v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub role: Role,
    pub hardware: HardwareParams,
}

impl NodeSpec {
    pub fn new(name: &str, role: Role) -> Self {
        NodeSpec {
            name: name.to_string(),
            role,
            hardware: HardwareParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub fiber: FiberParams,
}

impl LinkSpec {
    pub fn new(a: &str, b: &str, length_km: f64) -> Self {
        LinkSpec {
            a: a.to_string(),
            b: b.to_string(),
            fiber: FiberParams::with_length(length_km),
        }
    }

    pub fn other_end(&self, name: &str) -> Option<&str> {
        if self.a == name {
            Some(&self.b)
        } else if self.b == name {
            Some(&self.a)
        } else {
            None
        }
    }
}

/// A validated star network: one qonnector, every other node attached to it
/// by exactly one link.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    hub: usize,
}

impl Topology {
    pub fn new(nodes: Vec<NodeSpec>, links: Vec<LinkSpec>) -> Result<Self, NetworkError> {
        for (i, n) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|m| m.name == n.name) {
                return Err(NetworkError::DuplicateNode(n.name.clone()));
            }
            n.hardware
                .validate()
                .map_err(|source| NetworkError::InvalidNode {
                    node: n.name.clone(),
                    source,
                })?;
        }
        let hubs: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == Role::Qonnector)
            .map(|(i, _)| i)
            .collect();
        if hubs.len() != 1 {
            return Err(NetworkError::QonnectorCount(hubs.len()));
        }
        let hub = hubs[0];
        let hub_name = &nodes[hub].name;
        for l in &links {
            for end in [&l.a, &l.b] {
                if !nodes.iter().any(|n| &n.name == end) {
                    return Err(NetworkError::UnknownNode(end.clone()));
                }
            }
            if l.a == l.b {
                return Err(NetworkError::NotStar(alloc::format!("link from `{}` to itself", l.a)));
            }
            if &l.a != hub_name && &l.b != hub_name {
                return Err(NetworkError::NotStar(alloc::format!(
                    "link `{}`-`{}` does not end at the qonnector",
                    l.a, l.b
                )));
            }
            l.fiber.validate().map_err(|source| NetworkError::InvalidLink {
                a: l.a.clone(),
                b: l.b.clone(),
                source,
            })?;
        }
        for n in nodes.iter().filter(|n| n.role != Role::Qonnector) {
            let count = links.iter().filter(|l| l.other_end(&n.name).is_some()).count();
            if count != 1 {
                return Err(NetworkError::NotStar(alloc::format!(
                    "`{}` has {count} links, expected 1",
                    n.name
                )));
            }
        }
        Ok(Topology { nodes, links, hub })
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.links
    }

    pub fn qonnector(&self) -> &NodeSpec {
        &self.nodes[self.hub]
    }

    pub fn node(&self, name: &str) -> Result<&NodeSpec, NetworkError> {
        self.nodes
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| NetworkError::UnknownNode(name.to_string()))
    }

    /// The fiber between an endpoint and the qonnector.
    pub fn fiber_of(&self, endpoint: &str) -> Result<&FiberParams, NetworkError> {
        self.node(endpoint)?;
        self.links
            .iter()
            .find(|l| l.other_end(endpoint).is_some())
            .map(|l| &l.fiber)
            .ok_or_else(|| NetworkError::NotStar(alloc::format!("`{endpoint}` has no link")))
    }

    /// Sets a node parameter on one node, re-validating the result.
    pub fn set_node_param(&mut self, node: &str, key: &str, value: f64) -> Result<(), NetworkError> {
        let mut next = self.clone();
        let n = next
            .nodes
            .iter_mut()
            .find(|n| n.name == node)
            .ok_or_else(|| NetworkError::UnknownNode(node.to_string()))?;
        set_node_param(&mut n.hardware, key, value)?;
        *self = Topology::new(next.nodes, next.links)?;
        Ok(())
    }

    /// Sets a link parameter on the link of `endpoint`, re-validating.
    pub fn set_link_param(&mut self, endpoint: &str, key: &str, value: f64) -> Result<(), NetworkError> {
        let mut next = self.clone();
        let l = next
            .links
            .iter_mut()
            .find(|l| l.other_end(endpoint).is_some())
            .ok_or_else(|| NetworkError::UnknownNode(endpoint.to_string()))?;
        set_link_param(&mut l.fiber, key, value)?;
        *self = Topology::new(next.nodes, next.links)?;
        Ok(())
    }

    /// Sets `key` on every node or every link, whichever it names.
    pub fn set_everywhere(&mut self, key: &str, value: f64) -> Result<(), NetworkError> {
        let mut next = self.clone();
        if LINK_KEYS.contains(&key) {
            for l in &mut next.links {
                set_link_param(&mut l.fiber, key, value)?;
            }
        } else if NODE_KEYS.contains(&key) {
            for n in &mut next.nodes {
                set_node_param(&mut n.hardware, key, value)?;
            }
        } else {
            return Err(NetworkError::UnknownKey(key.to_string()));
        }
        *self = Topology::new(next.nodes, next.links)?;
        Ok(())
    }

    /// Checks that `run` names existing nodes with the roles its protocol
    /// requires.
    pub fn check_run(&self, run: &RunSpec) -> Result<(), NetworkError> {
        run.validate()?;
        let protocol = run.protocol;
        let parts = &run.participants;
        let (lo, hi) = protocol.arity();
        if parts.len() < lo || parts.len() > hi {
            return Err(NetworkError::Arity {
                protocol,
                expected: protocol.arity_text(),
                got: parts.len(),
            });
        }
        for (i, p) in parts.iter().enumerate() {
            if parts[..i].contains(p) {
                return Err(NetworkError::RepeatedParticipant(p.clone()));
            }
        }
        let roles = parts
            .iter()
            .map(|p| self.node(p).map(|n| n.role))
            .collect::<Result<Vec<_>, _>>()?;
        let wrong = |i: usize, expected| {
            Err(NetworkError::WrongRole {
                protocol,
                node: parts[i].clone(),
                expected,
            })
        };
        match protocol {
            ProtocolKind::Bb84 => {
                let hubs = roles.iter().filter(|r| **r == Role::Qonnector).count();
                if hubs != 1 {
                    let i = roles.iter().position(|r| *r != Role::Qonnector).unwrap_or(0);
                    let i = if hubs == 0 { 0 } else { i };
                    return wrong(i, "neighbour of the other endpoint");
                }
            }
            ProtocolKind::Delegated => {
                if !roles[0].is_endpoint() {
                    return wrong(0, "qlient");
                }
                if roles[1] != Role::Qomputer {
                    return wrong(1, "qomputer");
                }
            }
            _ => {
                if let Some(i) = roles.iter().position(|r| !r.is_endpoint()) {
                    return wrong(i, "qlient");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    Bb84,
    Bb84Transmitted,
    Bbm92,
    Mdi,
    Delegated,
    GhzShare,
    GhzVerify,
    AnonEntangle,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 8] = [
        ProtocolKind::Bb84,
        ProtocolKind::Bb84Transmitted,
        ProtocolKind::Bbm92,
        ProtocolKind::Mdi,
        ProtocolKind::Delegated,
        ProtocolKind::GhzShare,
        ProtocolKind::GhzVerify,
        ProtocolKind::AnonEntangle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Bb84 => "bb84",
            ProtocolKind::Bb84Transmitted => "bb84-transmitted",
            ProtocolKind::Bbm92 => "bbm92",
            ProtocolKind::Mdi => "mdi",
            ProtocolKind::Delegated => "delegated",
            ProtocolKind::GhzShare => "ghz-share",
            ProtocolKind::GhzVerify => "ghz-verify",
            ProtocolKind::AnonEntangle => "anon-entangle",
        }
    }

    /// Inclusive participant count range.
    pub fn arity(self) -> (usize, usize) {
        match self {
            ProtocolKind::GhzShare | ProtocolKind::GhzVerify | ProtocolKind::AnonEntangle => (3, 5),
            _ => (2, 2),
        }
    }

    fn arity_text(self) -> &'static str {
        match self.arity() {
            (2, 2) => "exactly 2",
            _ => "3 to 5",
        }
    }

    /// Whether the protocol yields a sifted key with a bit error rate.
    pub fn has_qber(self) -> bool {
        matches!(
            self,
            ProtocolKind::Bb84 | ProtocolKind::Bb84Transmitted | ProtocolKind::Bbm92 | ProtocolKind::GhzShare
        )
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| NetworkError::UnknownValue {
                key: "protocol",
                value: s.to_string(),
            })
    }
}

/// What to simulate. Participant order matters: the sender comes first for
/// two-party protocols, the verifier first for `ghz-verify`, and the sender
/// then the receiver first for `anon-entangle`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub protocol: ProtocolKind,
    pub participants: Vec<String>,
    pub duration_s: f64,
    pub runs: u32,
    pub seed: u64,
}

impl RunSpec {
    pub fn new(protocol: ProtocolKind, participants: &[&str], duration_s: f64, runs: u32, seed: u64) -> Self {
        RunSpec {
            protocol,
            participants: participants.iter().map(|s| s.to_string()).collect(),
            duration_s,
            runs,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(NetworkError::BadRun("duration_s"));
        }
        if self.runs == 0 {
            return Err(NetworkError::BadRun("runs"));
        }
        Ok(())
    }
}

/// Name of the hub in the presets.
pub const HUB: &str = "qonnector";

/// Five users around a hub at Sorbonne Université, with line-of-sight fiber
/// lengths and baseline hardware everywhere.
pub fn paris_preset() -> Topology {
    let users = [
        ("alice", Role::Qlient, 0.001),
        ("bob", Role::Qlient, 3.0),
        ("charlie", Role::Qlient, 6.0),
        ("dina", Role::Qlient, 18.0),
        ("erika", Role::Qomputer, 31.0),
    ];
    let mut nodes = alloc::vec![NodeSpec::new(HUB, Role::Qonnector)];
    let mut links = Vec::new();
    for (name, role, km) in users {
        nodes.push(NodeSpec::new(name, role));
        links.push(LinkSpec::new(HUB, name, km));
    }
    Topology::new(nodes, links).expect("preset is valid")
}

/// The Paris network with a weak transmitter at Bob, a weak detector at Dina
/// and both at Charlie.
pub fn modified_preset() -> Topology {
    let mut t = paris_preset();
    for (node, key, value) in [
        ("bob", "p_qubit", 5e-3),
        ("bob", "p_flip", 0.01),
        ("dina", "p_det", 0.85),
        ("dina", "p_crosstalk", 1e-2),
        ("dina", "R_dark", 1e4),
        ("dina", "dt_det", 5e-10),
        ("charlie", "p_qubit", 5e-3),
        ("charlie", "p_flip", 0.01),
        ("charlie", "p_det", 0.85),
        ("charlie", "p_crosstalk", 1e-2),
        ("charlie", "R_dark", 1e4),
        ("charlie", "dt_det", 5e-10),
    ] {
        t.set_node_param(node, key, value).expect("preset is valid");
    }
    t
}
