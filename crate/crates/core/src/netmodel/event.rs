use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{NetError, Network};

/// Outage description: which lines are faulted and which sources are lost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    #[serde(default)]
    pub faulted_lines: Vec<String>,
    #[serde(default)]
    pub unavailable_sources: Vec<String>,
}

impl EventSpec {
    pub fn from_json(text: &str) -> Result<Self, NetError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("event serializes")
    }
}

/// Network after fault isolation with the utility infeed gone.
#[derive(Debug, Clone, PartialEq)]
pub struct PostEventNetwork {
    pub net: Network,
    /// Ids of the removed lines, as stored in the source network.
    pub faulted: Vec<String>,
    pub lost_sources: Vec<String>,
}

impl PostEventNetwork {
    /// The substation bus, which the islanding step leaves unpowered.
    pub fn dead_bus(&self) -> Option<&str> {
        self.net.utility_bus.as_deref()
    }
}

/// Removes faulted lines and unavailable sources. Switch states are kept.
pub fn apply_event(net: &Network, ev: &EventSpec) -> Result<PostEventNetwork, NetError> {
    let mut drop_lines = HashSet::new();
    let mut faulted = Vec::new();
    for id in &ev.faulted_lines {
        let pos = net.line_position(id).ok_or_else(|| NetError::UnknownEventId {
            kind: "line",
            id: id.clone(),
        })?;
        if drop_lines.insert(pos) {
            faulted.push(net.lines[pos].id.clone());
        }
    }
    let mut drop_sources = HashSet::new();
    for id in &ev.unavailable_sources {
        if !net.sources.iter().any(|s| &s.id == id) {
            return Err(NetError::UnknownEventId {
                kind: "source",
                id: id.clone(),
            });
        }
        drop_sources.insert(id.as_str());
    }

    let mut out = net.clone();
    out.lines = net
        .lines
        .iter()
        .enumerate()
        .filter(|(i, _)| !drop_lines.contains(i))
        .map(|(_, l)| l.clone())
        .collect();
    out.sources.retain(|s| !drop_sources.contains(s.id.as_str()));
    let mut lost_sources: Vec<String> = drop_sources.into_iter().map(String::from).collect();
    lost_sources.sort();
    Ok(PostEventNetwork {
        net: out,
        faulted,
        lost_sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_json() {
        let ev = EventSpec::from_json(r#"{"faulted_lines": ["632-671"]}"#).unwrap();
        assert_eq!(ev.faulted_lines, vec!["632-671"]);
        assert!(ev.unavailable_sources.is_empty());
        assert!(EventSpec::from_json(r#"{"faults": []}"#).is_err());
    }
}
