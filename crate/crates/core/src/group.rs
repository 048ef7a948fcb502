//! Groups as connected focus chains, and their circular F-formation
//! geometry (O-space core, P-space ring, R-space buffer).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::focus::FocusMap;
use crate::model::{EntityId, Point, World};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    /// Sorted by id; at least two members.
    pub members: Vec<EntityId>,
    /// External focus links `(from, to)` among the members, sorted.
    pub focus_edges: Vec<(EntityId, EntityId)>,
}

impl Group {
    pub fn contains(&self, id: EntityId) -> bool {
        self.members.binary_search(&id).is_ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FFormation {
    pub o_center: Point,
    pub o_radius: f64,
    pub p_outer_radius: f64,
    pub r_outer_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    O,
    P,
    R,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationParams {
    pub min_o_radius: f64,
    pub r_width: f64,
}

impl Default for FormationParams {
    fn default() -> Self {
        Self {
            min_o_radius: 0.3,
            r_width: 1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroupError {
    #[error("group member {0} is not in the world")]
    UnknownMember(EntityId),
    #[error("a formation needs at least two members, got {0}")]
    TooSmall(usize),
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Weakly connected components (size ≥ 2) of the external-focus digraph,
/// ordered by their lowest member id.
pub fn detect_groups(focus_map: &FocusMap) -> Vec<Group> {
    let ids: Vec<EntityId> = focus_map.keys().copied().collect();
    let mut ds = DisjointSet::new(ids.len());
    let mut edges = Vec::new();
    for (i, (&from, &to)) in focus_map.iter().enumerate() {
        if from == to {
            continue;
        }
        if let Ok(j) = ids.binary_search(&to) {
            ds.union(i, j);
            edges.push((i, j));
        }
    }

    let mut slot_of_root = vec![usize::MAX; ids.len()];
    let mut groups: Vec<Group> = Vec::new();
    let mut sizes = vec![0usize; ids.len()];
    for i in 0..ids.len() {
        let r = ds.find(i);
        sizes[r] += 1;
    }
    for (i, &id) in ids.iter().enumerate() {
        let r = ds.find(i);
        if sizes[r] < 2 {
            continue;
        }
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = groups.len();
            groups.push(Group {
                members: Vec::new(),
                focus_edges: Vec::new(),
            });
        }
        groups[slot_of_root[r]].members.push(id);
    }
    for (i, j) in edges {
        let slot = slot_of_root[ds.find(i)];
        groups[slot].focus_edges.push((ids[i], ids[j]));
    }
    groups
}

/// Concentric regions around the centroid of the members' positions.
pub fn compute_f_formation(
    group: &Group,
    world: &World,
    params: &FormationParams,
) -> Result<FFormation, GroupError> {
    if group.members.len() < 2 {
        return Err(GroupError::TooSmall(group.members.len()));
    }
    let mut poses = Vec::with_capacity(group.members.len());
    for &id in &group.members {
        let e = world.get(id).ok_or(GroupError::UnknownMember(id))?;
        poses.push(e.pose);
    }
    let n = poses.len() as f64;
    let sum = poses
        .iter()
        .fold(Point::default(), |acc, p| acc + p.position);
    let center = sum * (1.0 / n);

    let dists: Vec<f64> = poses.iter().map(|p| p.position.distance(center)).collect();
    let mean_dist = dists.iter().sum::<f64>() / n;
    let mean_radius = poses.iter().map(|p| p.body_radius).sum::<f64>() / n;
    let max_dist = dists.iter().copied().fold(0.0, f64::max);
    let max_radius = poses.iter().map(|p| p.body_radius).fold(0.0, f64::max);
    // innermost body edge; the O-space may not swallow a member whole
    let inner_reach = dists
        .iter()
        .zip(&poses)
        .map(|(d, p)| d + p.body_radius)
        .fold(f64::INFINITY, f64::min);

    let o_radius = (mean_dist - mean_radius)
        .max(params.min_o_radius)
        .min(inner_reach);
    let p_outer_radius = (max_dist + max_radius).max(o_radius + max_radius);
    Ok(FFormation {
        o_center: center,
        o_radius,
        p_outer_radius,
        r_outer_radius: p_outer_radius + params.r_width,
    })
}

/// Region containing `point`; boundaries belong to the inner region.
pub fn classify_position(point: Point, formation: &FFormation) -> Region {
    let d = point.distance(formation.o_center);
    if d <= formation.o_radius {
        Region::O
    } else if d <= formation.p_outer_radius {
        Region::P
    } else if d <= formation.r_outer_radius {
        Region::R
    } else {
        Region::Outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, Environment};

    fn fm(pairs: &[(u32, u32)]) -> FocusMap {
        pairs
            .iter()
            .map(|&(a, b)| (EntityId(a), EntityId(b)))
            .collect()
    }

    fn ids(v: &[u32]) -> Vec<EntityId> {
        v.iter().map(|&i| EntityId(i)).collect()
    }

    #[test]
    fn reciprocal_pair_plus_loner() {
        let g = detect_groups(&fm(&[(1, 2), (2, 1), (3, 3)]));
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, ids(&[1, 2]));
        assert_eq!(
            g[0].focus_edges,
            vec![(EntityId(1), EntityId(2)), (EntityId(2), EntityId(1))]
        );
    }

    #[test]
    fn chain_joins_weakly() {
        let g = detect_groups(&fm(&[(1, 2), (2, 3), (3, 2)]));
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].members, ids(&[1, 2, 3]));
    }

    #[test]
    fn no_edges_no_groups() {
        assert!(detect_groups(&fm(&[(1, 1), (2, 2)])).is_empty());
    }

    #[test]
    fn two_member_formation() {
        let w = World::new(
            vec![
                Entity::person(1, "a", Point::new(0.0, 0.0), 0.0),
                Entity::person(2, "b", Point::new(2.0, 0.0), 0.0),
            ],
            Environment::default(),
            0,
        );
        let g = &detect_groups(&fm(&[(1, 2), (2, 1)]))[0];
        let f = compute_f_formation(g, &w, &FormationParams::default()).unwrap();
        assert_eq!(f.o_center, Point::new(1.0, 0.0));
        assert!((f.o_radius - 0.7).abs() < 1e-12);
        assert!((f.p_outer_radius - 1.3).abs() < 1e-12);
        assert!((f.r_outer_radius - 2.3).abs() < 1e-12);
    }

    #[test]
    fn equilateral_triangle_formation() {
        let h = 3f64.sqrt();
        let pts = [
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(1.0, h),
        ];
        let w = World::new(
            pts.iter()
                .enumerate()
                .map(|(i, &p)| Entity::person(i as u32 + 1, "e", p, 0.0))
                .collect(),
            Environment::default(),
            0,
        );
        let g = &detect_groups(&fm(&[(1, 2), (2, 3), (3, 1)]))[0];
        let f = compute_f_formation(g, &w, &FormationParams::default()).unwrap();
        // circumcenter of an equilateral triangle with side 2
        let expected = Point::new(1.0, h / 3.0);
        assert!(f.o_center.distance(expected) < 1e-12);
        let circumradius = 2.0 / h;
        for p in pts {
            assert!((p.distance(f.o_center) - circumradius).abs() < 1e-12);
        }
        assert!((f.o_radius - (circumradius - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn coincident_members_degenerate() {
        let w = World::new(
            vec![
                Entity::person(1, "a", Point::new(1.0, 1.0), 0.0),
                Entity::person(2, "b", Point::new(1.0, 1.0), 0.0),
            ],
            Environment::default(),
            0,
        );
        let g = &detect_groups(&fm(&[(1, 2), (2, 1)]))[0];
        let f = compute_f_formation(g, &w, &FormationParams::default()).unwrap();
        assert_eq!(f.o_center, Point::new(1.0, 1.0));
        assert!((f.o_radius - 0.3).abs() < 1e-12);
        assert!(f.o_radius < f.p_outer_radius && f.p_outer_radius < f.r_outer_radius);
    }

    #[test]
    fn classification() {
        let f = FFormation {
            o_center: Point::new(0.0, 0.0),
            o_radius: 0.7,
            p_outer_radius: 1.3,
            r_outer_radius: 2.3,
        };
        assert_eq!(classify_position(Point::new(0.0, 0.0), &f), Region::O);
        assert_eq!(classify_position(Point::new(0.7, 0.0), &f), Region::O);
        assert_eq!(classify_position(Point::new(1.0, 0.0), &f), Region::P);
        assert_eq!(classify_position(Point::new(2.0, 0.0), &f), Region::R);
        assert_eq!(
            classify_position(Point::new(0.0, 2.31), &f),
            Region::Outside
        );
    }
}
