//! Static shortest-hop routing tree toward the server.

use std::collections::{BTreeMap, VecDeque};

use super::{NodeId, Role, SimNode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    pub root: NodeId,
    /// Preferred parent of every routed node except the root.
    pub parent: BTreeMap<NodeId, NodeId>,
}

impl RoutingTable {
    pub fn contains(&self, node: NodeId) -> bool {
        node == self.root || self.parent.contains_key(&node)
    }

    /// Nodes from `node` up to and including the root.
    pub fn path_to_root(&self, node: NodeId) -> Option<Vec<NodeId>> {
        if !self.contains(node) {
            return None;
        }
        let mut path = vec![node];
        let mut cur = node;
        while cur != self.root {
            cur = self.parent[&cur];
            path.push(cur);
        }
        Some(path)
    }

    /// Number of transmissions needed to reach the root.
    pub fn hops(&self, node: NodeId) -> Option<usize> {
        self.path_to_root(node).map(|p| p.len() - 1)
    }

    /// Next node on the downward path from `from` toward `dest`, if `from` is an ancestor.
    pub fn next_hop_down(&self, from: NodeId, dest: NodeId) -> Option<NodeId> {
        let path = self.path_to_root(dest)?;
        let at = path.iter().position(|n| *n == from)?;
        if at == 0 {
            return None;
        }
        Some(path[at - 1])
    }

    /// Directed (child, parent) links of the tree.
    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.parent.iter().map(|(c, p)| (*c, *p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("network partitioned: {} node(s) cannot reach the server", isolated.len())]
pub struct Partitioned {
    pub isolated: Vec<NodeId>,
    /// Tree over the reachable part, absent when there is no server.
    pub partial: Option<RoutingTable>,
}

/// Builds a shortest-hop tree rooted at the server over unit-disk links.
///
/// Malicious nodes never forward traffic: they are attached as leaves to the
/// closest (in hops) router within range. Ties between equally short parents
/// go to the lowest MAC.
pub fn build_routes<'a, I>(nodes: I, link_range: f64) -> Result<RoutingTable, Partitioned>
where
    I: IntoIterator<Item = &'a SimNode>,
{
    let nodes: Vec<&SimNode> = nodes.into_iter().collect();
    let Some(server) = nodes.iter().find(|n| n.role == Role::Server) else {
        return Err(Partitioned {
            isolated: nodes.iter().map(|n| n.id).collect(),
            partial: None,
        });
    };
    let in_range = |a: &SimNode, b: &SimNode| a.position.distance(&b.position) <= link_range;

    let routers: Vec<&SimNode> = nodes
        .iter()
        .copied()
        .filter(|n| n.role != Role::Malicious)
        .collect();
    let mut dist: BTreeMap<NodeId, usize> = BTreeMap::new();
    dist.insert(server.id, 0);
    let mut queue = VecDeque::from([*server]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur.id];
        for n in &routers {
            if !dist.contains_key(&n.id) && in_range(cur, n) {
                dist.insert(n.id, d + 1);
                queue.push_back(n);
            }
        }
    }

    let best_parent = |node: &SimNode, want: Option<usize>| -> Option<NodeId> {
        routers
            .iter()
            .filter(|m| m.id != node.id && in_range(node, m))
            .filter_map(|m| dist.get(&m.id).map(|d| (*d, m.mac, m.id)))
            .filter(|(d, _, _)| want.is_none_or(|w| *d == w))
            .min()
            .map(|(_, _, id)| id)
    };

    let mut parent = BTreeMap::new();
    let mut isolated = Vec::new();
    for node in &nodes {
        if node.id == server.id {
            continue;
        }
        let chosen = match (node.role, dist.get(&node.id)) {
            (Role::Malicious, _) => best_parent(node, None),
            (_, Some(d)) => best_parent(node, Some(d - 1)),
            (_, None) => None,
        };
        match chosen {
            Some(p) => {
                parent.insert(node.id, p);
            }
            None => isolated.push(node.id),
        }
    }

    let table = RoutingTable {
        root: server.id,
        parent,
    };
    if isolated.is_empty() {
        Ok(table)
    } else {
        Err(Partitioned {
            isolated,
            partial: Some(table),
        })
    }
}
