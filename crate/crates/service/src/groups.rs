//! Automatic group pre-assignment from box position and size.

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use attrlabel_core::model::{BoundingBox, CanonicalAgent, Group};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupParams {
    /// Maximum horizontal gap as a fraction of the narrower box width.
    pub alpha: f64,
    /// Maximum vertical centre offset as a fraction of the shorter box height.
    pub beta: f64,
    /// Maximum height ratio.
    pub gamma: f64,
}

impl Default for GroupParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            gamma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupProposal {
    pub image_id: String,
    pub params: GroupParams,
    pub groups: Vec<Group>,
}

/// Horizontal distance between the boxes, negative when they overlap.
fn gap(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.x_min.max(b.x_min) - a.x_max.min(b.x_max)
}

pub fn linked(a: &BoundingBox, b: &BoundingBox, p: &GroupParams) -> bool {
    let min_w = a.width().min(b.width());
    let min_h = a.height().min(b.height());
    let ratio = a.height() / b.height();
    gap(a, b) < p.alpha * min_w
        && (a.center_y() - b.center_y()).abs() < p.beta * min_h
        && ratio >= 1.0 / p.gamma
        && ratio <= p.gamma
}

/// Connected components (of two or more agents) of the link graph over
/// `agents`. Groups are named `g0, g1, …` by their smallest member id and
/// list members in ascending order, so the result does not depend on the
/// order of `agents`.
pub fn propose_groups(image_id: &str, agents: &[&CanonicalAgent], params: GroupParams) -> GroupProposal {
    let mut sorted: Vec<&CanonicalAgent> = agents.to_vec();
    sorted.sort_by_key(|a| a.agent_image_id);
    let mut uf: UnionFind<usize> = UnionFind::new(sorted.len());
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            if linked(&sorted[i].bbox, &sorted[j].bbox, &params) {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut components: Vec<Vec<u32>> = Vec::new();
    let mut root_slot: std::collections::BTreeMap<usize, usize> = std::collections::BTreeMap::new();
    for (i, root) in labels.iter().enumerate() {
        let slot = *root_slot.entry(*root).or_insert_with(|| {
            components.push(Vec::new());
            components.len() - 1
        });
        components[slot].push(sorted[i].agent_image_id);
    }
    let groups = components
        .into_iter()
        .filter(|c| c.len() >= 2)
        .enumerate()
        .map(|(k, members)| Group {
            group_id: format!("g{k}"),
            members,
        })
        .collect();
    GroupProposal {
        image_id: image_id.to_string(),
        params,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(id: u32, x: f64, y: f64, w: f64, h: f64) -> CanonicalAgent {
        CanonicalAgent::new(id, format!("u{id}"), "ped", BoundingBox::new(x, y, x + w, y + h))
    }

    #[test]
    fn overlapping_equal_boxes_group() {
        let a = agent(0, 0.0, 0.0, 50.0, 100.0);
        let b = agent(1, 20.0, 0.0, 50.0, 100.0);
        let g = propose_groups("i", &[&a, &b], GroupParams::default());
        assert_eq!(g.groups, vec![Group { group_id: "g0".into(), members: vec![0, 1] }]);
    }

    #[test]
    fn far_apart_boxes_do_not_group() {
        let a = agent(0, 0.0, 0.0, 100.0, 200.0);
        let b = agent(1, 1100.0, 0.0, 100.0, 200.0);
        assert!(propose_groups("i", &[&a, &b], GroupParams::default()).groups.is_empty());
    }

    #[test]
    fn chain_is_one_group() {
        let a = agent(0, 0.0, 0.0, 50.0, 100.0);
        let b = agent(1, 60.0, 0.0, 50.0, 100.0);
        let c = agent(2, 120.0, 0.0, 50.0, 100.0);
        let p = GroupParams::default();
        assert!(!linked(&a.bbox, &c.bbox, &p));
        let g = propose_groups("i", &[&c, &a, &b], p);
        assert_eq!(g.groups.len(), 1);
        assert_eq!(g.groups[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn size_mismatch_blocks_link() {
        let a = agent(0, 0.0, 0.0, 50.0, 100.0);
        let b = agent(1, 50.0, 0.0, 120.0, 250.0);
        assert!(propose_groups("i", &[&a, &b], GroupParams::default()).groups.is_empty());
    }
}
