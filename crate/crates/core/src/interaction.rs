//! Communication regimes: administrator question answering and proximity
//! gated peer exchange.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, Point};
use crate::mapping::{merge, BeliefMap, MergeReport, SceneGraph};
use crate::sensing::Pose;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMode {
    #[default]
    Hierarchical,
    Horizontal,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommConfig {
    pub mode: CommMode,
    pub comm_range_m: f64,
    /// Queries per agent per episode; `None` is unlimited.
    pub query_budget: Option<u32>,
    /// Apply `comm_range_m` to the collaborative-exploration benchmark too.
    pub exploration_range_limited: bool,
}

impl Default for CommConfig {
    fn default() -> Self {
        CommConfig {
            mode: CommMode::Hierarchical,
            comm_range_m: 3.0,
            query_budget: Some(5),
            exploration_range_limited: false,
        }
    }
}

impl CommConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.mode == CommMode::Horizontal && !(self.comm_range_m > 0.0) {
            return Err(Error::Invalid(
                "comm_range_m must be positive in horizontal mode".into(),
            ));
        }
        Ok(())
    }
}

/// Structured question about an object class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub class_label: String,
    #[serde(default)]
    pub room_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyEntry {
    pub node_id: String,
    pub class_label: String,
    pub center: Point,
    pub room_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Query {
        from: String,
        query: Query,
    },
    Reply {
        to: String,
        query: Query,
        entries: Vec<ReplyEntry>,
    },
    /// Query rejected because the asker's budget is spent.
    Refusal {
        to: String,
        query: Query,
        reason: String,
    },
    GraphShare {
        from: String,
        graph: SceneGraph,
    },
    /// Position sync with the sender's current exploration goal.
    Status {
        agent: String,
        pose: Pose,
        goal: Option<Cell>,
    },
}

/// Privileged question-answering service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Administrator {
    pub graph: SceneGraph,
    /// Occupancy knowledge that accompanies the graph.
    pub map: Option<BeliefMap>,
    pub query_budget: Option<u32>,
    pub used: BTreeMap<String, u32>,
}

impl Administrator {
    pub fn new(graph: SceneGraph, map: Option<BeliefMap>, query_budget: Option<u32>) -> Self {
        Administrator {
            graph,
            map,
            query_budget,
            used: BTreeMap::new(),
        }
    }

    pub fn remaining(&self, agent: &str) -> Option<u32> {
        self.query_budget
            .map(|b| b.saturating_sub(self.used.get(agent).copied().unwrap_or(0)))
    }
}

/// Answers `q` from the administrator's graph, or refuses once `agent`'s
/// budget is spent. Entries are ordered by node id.
pub fn admin_answer(admin: &mut Administrator, agent: &str, q: &Query) -> Message {
    if admin.remaining(agent) == Some(0) {
        return Message::Refusal {
            to: agent.into(),
            query: q.clone(),
            reason: "query budget exhausted".into(),
        };
    }
    *admin.used.entry(agent.into()).or_insert(0) += 1;
    let entries = admin
        .graph
        .objects
        .iter()
        .filter(|n| n.class_label == q.class_label)
        .map(|n| ReplyEntry {
            node_id: n.id.clone(),
            class_label: n.class_label.clone(),
            center: n.center,
            room_label: n
                .room_id
                .as_deref()
                .and_then(|r| admin.graph.room_label(r))
                .map(String::from),
        })
        .filter(|e| q.room_label.is_none() || e.room_label == q.room_label)
        .collect();
    Message::Reply {
        to: agent.into(),
        query: q.clone(),
        entries,
    }
}

/// One side of a peer exchange.
pub struct Peer<'a> {
    pub pose: Pose,
    pub map: &'a mut BeliefMap,
    pub graph: &'a mut SceneGraph,
}

/// Symmetric merge when the two agents are within `range_m`.
///
/// Each side receives `merge(self, other)`; the reports are what each side
/// gained.
pub fn exchange_if_in_range(
    a: Peer<'_>,
    b: Peer<'_>,
    range_m: f64,
    fusion_radius_m: f64,
) -> Result<Option<(MergeReport, MergeReport)>, Error> {
    if a.pose.point().dist(b.pose.point()) > range_m {
        return Ok(None);
    }
    let ((ma, ga), ra) = merge((a.map, a.graph), (b.map, b.graph), fusion_radius_m)?;
    let ((mb, gb), rb) = merge((b.map, b.graph), (a.map, a.graph), fusion_radius_m)?;
    *a.map = ma;
    *a.graph = ga;
    *b.map = mb;
    *b.graph = gb;
    Ok(Some((ra, rb)))
}
