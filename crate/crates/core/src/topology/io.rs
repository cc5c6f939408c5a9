//! Edge-list text format: a `nodes N` header followed by one `u v delay_ms`
//! line per link. Blank lines and `#` comments are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Delay, TopologyError, TopologyGraph};

pub fn write_edge_list(g: &TopologyGraph) -> String {
    let mut out = format!("nodes {}\n", g.node_count());
    for e in g.edges() {
        let _ = writeln!(out, "{} {} {}", e.a, e.b, e.delay);
    }
    out
}

pub fn parse_edge_list(text: &str) -> Result<TopologyGraph, TopologyError> {
    let mut nodes = None;
    let mut links = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| TopologyError::Parse { line: line_no, msg: msg.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        match (nodes, fields.as_slice()) {
            (None, ["nodes", n]) => {
                nodes = Some(n.parse::<usize>().map_err(|_| err("bad node count"))?);
            }
            (None, _) => return Err(err("expected `nodes N` header")),
            (Some(_), [u, v, ms]) => {
                let u = u.parse().map_err(|_| err("bad node id"))?;
                let v = v.parse().map_err(|_| err("bad node id"))?;
                let ms: f64 = ms.parse().map_err(|_| err("bad delay"))?;
                let delay = Delay::from_ms(ms).map_err(|_| err("delay must be finite and non-negative"))?;
                links.push((u, v, delay));
            }
            (Some(_), _) => return Err(err("expected `u v delay_ms`")),
        }
    }
    let nodes = nodes.ok_or(TopologyError::Parse { line: 0, msg: "empty edge list".into() })?;
    TopologyGraph::from_delays(nodes, links)
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<TopologyGraph, TopologyError> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}
