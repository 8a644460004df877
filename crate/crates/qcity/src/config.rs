//! Line-oriented network description.
//!
//! ```text
//! # comment
//! [node qonnector]
//! role = qonnector
//! [node alice] role=qlient p_det=0.9
//! [link qonnector alice]
//! length_km = 0.001
//! [run]
//! protocol = bb84
//! participants = qonnector, alice
//! duration_s = 0.01
//! runs = 10
//! seed = 7
//! ```
//!
//! Every `key = value` pair may also follow a section header on the same
//! line. Parameters left out keep their baseline values.

use qcity_core::network::{link_param, node_param, set_link_param, set_node_param, LinkSpec, LINK_KEYS, NODE_KEYS};
use qcity_core::{NetworkError, NodeSpec, ProtocolKind, Role, RunSpec, Topology};
use std::fmt::Write as _;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid network: {0}")]
    Validation(#[from] NetworkError),
}

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

enum Section {
    None,
    Node(usize),
    Link(usize),
    Run,
}

#[derive(Default)]
struct RunFields {
    protocol: Option<ProtocolKind>,
    participants: Option<Vec<String>>,
    duration_s: Option<f64>,
    runs: Option<u32>,
    seed: Option<u64>,
}

/// Splits `a = 1 b=2` into `[("a", "1"), ("b", "2")]`.
fn pairs(text: &str, line: usize) -> Result<Vec<(String, String)>, ConfigError> {
    let mut normalized = String::with_capacity(text.len());
    let mut chars = text.trim().chars().peekable();
    while let Some(c) = chars.next() {
        if c == '=' {
            while normalized.ends_with(char::is_whitespace) {
                normalized.pop();
            }
            normalized.push('=');
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
        } else if c == ',' {
            normalized.push(',');
            while chars.peek().is_some_and(|c| c.is_whitespace()) {
                chars.next();
            }
        } else {
            normalized.push(c);
        }
    }
    normalized
        .split_whitespace()
        .map(|tok| {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected key=value, found `{tok}`")))?;
            if k.is_empty() || v.is_empty() {
                return Err(parse_err(line, format!("expected key=value, found `{tok}`")));
            }
            Ok((k.to_string(), v.to_string()))
        })
        .collect()
}

fn number<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| parse_err(line, format!("`{key}`: cannot parse `{value}`")))
}

/// Parses a document into a validated topology and the optional run
/// description of its `[run]` section.
pub fn parse_config(text: &str) -> Result<(Topology, Option<RunSpec>), ConfigError> {
    let mut nodes: Vec<NodeSpec> = Vec::new();
    let mut roles: Vec<bool> = Vec::new();
    let mut links: Vec<LinkSpec> = Vec::new();
    let mut run: Option<RunFields> = None;
    let mut section = Section::None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let body = if let Some(rest) = content.strip_prefix('[') {
            let (header, tail) = rest
                .split_once(']')
                .ok_or_else(|| parse_err(line, "unterminated section header"))?;
            let words: Vec<&str> = header.split_whitespace().collect();
            section = match words.as_slice() {
                ["node", name] => {
                    if nodes.iter().any(|n| n.name == *name) {
                        return Err(parse_err(line, format!("node `{name}` declared twice")));
                    }
                    nodes.push(NodeSpec::new(name, Role::Qlient));
                    roles.push(false);
                    Section::Node(nodes.len() - 1)
                }
                ["link", a, b] => {
                    links.push(LinkSpec::new(a, b, 0.0));
                    Section::Link(links.len() - 1)
                }
                ["run"] => {
                    if run.is_some() {
                        return Err(parse_err(line, "second [run] section"));
                    }
                    run = Some(RunFields::default());
                    Section::Run
                }
                _ => return Err(parse_err(line, format!("unknown section `[{header}]`"))),
            };
            tail
        } else {
            content
        };
        for (key, value) in pairs(body, line)? {
            match section {
                Section::None => return Err(parse_err(line, format!("`{key}` outside any section"))),
                Section::Node(n) => {
                    if key == "role" {
                        nodes[n].role = Role::from_str(&value).map_err(|e| parse_err(line, e.to_string()))?;
                        roles[n] = true;
                    } else if NODE_KEYS.contains(&key.as_str()) {
                        let v = number(line, &key, &value)?;
                        set_node_param(&mut nodes[n].hardware, &key, v).map_err(|e| parse_err(line, e.to_string()))?;
                    } else {
                        return Err(parse_err(line, format!("unknown node parameter `{key}`")));
                    }
                }
                Section::Link(l) => {
                    if !LINK_KEYS.contains(&key.as_str()) {
                        return Err(parse_err(line, format!("unknown link parameter `{key}`")));
                    }
                    let v = number(line, &key, &value)?;
                    set_link_param(&mut links[l].fiber, &key, v).map_err(|e| parse_err(line, e.to_string()))?;
                }
                Section::Run => {
                    let r = run.as_mut().expect("inside [run]");
                    match key.as_str() {
                        "protocol" => {
                            r.protocol =
                                Some(ProtocolKind::from_str(&value).map_err(|e| parse_err(line, e.to_string()))?)
                        }
                        "participants" => {
                            r.participants = Some(value.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
                        }
                        "duration_s" => r.duration_s = Some(number(line, &key, &value)?),
                        "runs" => r.runs = Some(number(line, &key, &value)?),
                        "seed" => r.seed = Some(number(line, &key, &value)?),
                        _ => return Err(parse_err(line, format!("unknown run parameter `{key}`"))),
                    }
                }
            }
        }
    }

    if let Some(i) = roles.iter().position(|set| !set) {
        return Err(ConfigError::Parse {
            line: 0,
            message: format!("node `{}` has no role", nodes[i].name),
        });
    }
    let topology = Topology::new(nodes, links)?;
    let run = match run {
        None => None,
        Some(r) => {
            let missing = |what: &str| parse_err(0, format!("[run] is missing `{what}`"));
            let spec = RunSpec {
                protocol: r.protocol.ok_or_else(|| missing("protocol"))?,
                participants: r.participants.ok_or_else(|| missing("participants"))?,
                duration_s: r.duration_s.ok_or_else(|| missing("duration_s"))?,
                runs: r.runs.unwrap_or(1),
                seed: r.seed.unwrap_or(0),
            };
            topology.check_run(&spec)?;
            Some(spec)
        }
    };
    Ok((topology, run))
}

/// Writes every parameter explicitly, so that parsing the result gives back
/// an equal topology and run.
pub fn serialize_config(topology: &Topology, run: Option<&RunSpec>) -> String {
    let mut out = String::new();
    for n in topology.nodes() {
        let _ = writeln!(out, "[node {}]", n.name);
        let _ = writeln!(out, "role = {}", n.role);
        for key in NODE_KEYS {
            let v = node_param(&n.hardware, key).expect("known key");
            let _ = writeln!(out, "{key} = {v:?}");
        }
        out.push('\n');
    }
    for l in topology.links() {
        let _ = writeln!(out, "[link {} {}]", l.a, l.b);
        for key in LINK_KEYS {
            let v = link_param(&l.fiber, key).expect("known key");
            let _ = writeln!(out, "{key} = {v:?}");
        }
        out.push('\n');
    }
    if let Some(r) = run {
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "protocol = {}", r.protocol);
        let _ = writeln!(out, "participants = {}", r.participants.join(","));
        let _ = writeln!(out, "duration_s = {:?}", r.duration_s);
        let _ = writeln!(out, "runs = {}", r.runs);
        let _ = writeln!(out, "seed = {}", r.seed);
    }
    out
}
