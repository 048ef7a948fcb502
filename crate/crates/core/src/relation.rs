//! Relational states of ordered entity pairs, derived from the focus map.
//!
//! The matrix is recomputed from scratch every tick. Each entry is a pure
//! function of two booleans (does `a` focus `b`, does `b` focus `a`), so
//! the four-state machine is realized as the image of the focus map and
//! no transition outside the table can be represented.

use serde::{Deserialize, Serialize};

use crate::focus::FocusMap;
use crate::model::{EntityId, RelationState};

/// States of both members of a pair from the two focus booleans.
///
/// | a→b | b→a | state of a | state of b |
/// |-----|-----|------------|------------|
/// |  0  |  0  | Passive    | Passive    |
/// |  0  |  1  | Requested  | Buildup    |
/// |  1  |  0  | Buildup    | Requested  |
/// |  1  |  1  | Engaged    | Engaged    |
pub fn pair_state(a_focuses_b: bool, b_focuses_a: bool) -> (RelationState, RelationState) {
    use RelationState::*;
    match (a_focuses_b, b_focuses_a) {
        (false, false) => (Passive, Passive),
        (false, true) => (Requested, Buildup),
        (true, false) => (Buildup, Requested),
        (true, true) => (Engaged, Engaged),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub tick: u64,
    pub ids: Vec<EntityId>,
    /// `rows[i][j]` is the state of `ids[i]` toward `ids[j]`; the diagonal is empty.
    pub rows: Vec<Vec<Option<RelationState>>>,
}

impl StateMatrix {
    pub fn index_of(&self, id: EntityId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    pub fn get(&self, a: EntityId, b: EntityId) -> Option<RelationState> {
        let i = self.index_of(a)?;
        let j = self.index_of(b)?;
        self.rows[i][j]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// All ordered pairs with their state, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (EntityId, EntityId, RelationState)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(i, row)| {
            row.iter()
                .enumerate()
                .filter_map(move |(j, s)| s.map(|s| (self.ids[i], self.ids[j], s)))
        })
    }

    /// The partner of `a` in state Engaged, if any.
    pub fn engaged_partner(&self, a: EntityId) -> Option<EntityId> {
        let i = self.index_of(a)?;
        self.rows[i]
            .iter()
            .position(|s| *s == Some(RelationState::Engaged))
            .map(|j| self.ids[j])
    }
}

/// Derives the matrix over every entity of `focus_map`. Self-focus counts as
/// focusing nobody.
pub fn compute_state_matrix(focus_map: &FocusMap) -> StateMatrix {
    let ids: Vec<EntityId> = focus_map.keys().copied().collect();
    let n = ids.len();
    let focus_idx: Vec<Option<usize>> = focus_map
        .values()
        .map(|f| ids.binary_search(f).ok())
        .collect();
    let mut rows = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a_b = focus_idx[i] == Some(j);
            let b_a = focus_idx[j] == Some(i);
            rows[i][j] = Some(pair_state(a_b, b_a).0);
        }
    }
    StateMatrix { tick: 0, ids, rows }
}

/// Focus-of-focus test: an entity is engaged when whatever it focuses on
/// focuses back on it.
pub fn is_engaged(entity: EntityId, focus_map: &FocusMap) -> bool {
    match focus_map.get(&entity) {
        Some(&f) if f != entity => focus_map.get(&f) == Some(&entity),
        _ => false,
    }
}

/// Reciprocal focus between two distinct entities.
pub fn reciprocal(a: EntityId, b: EntityId, focus_map: &FocusMap) -> bool {
    a != b && focus_map.get(&a) == Some(&b) && focus_map.get(&b) == Some(&a)
}
