//! Aggregation of interpreted effort per sender and single-target focus
//! selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{EntityId, World};
use crate::signal::ChannelEi;

pub type FocusMap = BTreeMap<EntityId, EntityId>;

/// Total interpreted effort a receiver attributes to every entity, itself
/// included (the self entry is the idle baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiTable {
    pub receiver: EntityId,
    /// Sorted by sender id and covering every entity of the world.
    pub totals: Vec<(EntityId, f64)>,
}

impl EiTable {
    pub fn total(&self, sender: EntityId) -> f64 {
        self.totals
            .binary_search_by_key(&sender, |&(id, _)| id)
            .map(|i| self.totals[i].1)
            .unwrap_or(0.0)
    }

    /// Highest total among all sources other than `excluded`.
    pub fn max_excluding(&self, excluded: EntityId) -> f64 {
        self.totals
            .iter()
            .filter(|&&(id, _)| id != excluded)
            .map(|&(_, v)| v)
            .fold(0.0, f64::max)
    }
}

pub fn aggregate_ei<'a>(
    receiver: EntityId,
    channel_eis: impl IntoIterator<Item = &'a ChannelEi>,
    idle_baseline: f64,
    world: &World,
) -> EiTable {
    let mut totals: Vec<(EntityId, f64)> = world.ids().map(|id| (id, 0.0)).collect();
    for ei in channel_eis {
        debug_assert_eq!(ei.receiver, receiver);
        if ei.sender == receiver {
            continue;
        }
        if let Ok(i) = totals.binary_search_by_key(&ei.sender, |&(id, _)| id) {
            totals[i].1 += ei.value;
        }
    }
    if let Ok(i) = totals.binary_search_by_key(&receiver, |&(id, _)| id) {
        totals[i].1 = idle_baseline;
    }
    EiTable { receiver, totals }
}

/// One table per engageable entity, in id order. `channel_eis` must be
/// ordered by receiver as produced by [`crate::signal::compute_all_ei`].
pub fn build_tables(world: &World, channel_eis: &[ChannelEi], idle_baseline: f64) -> Vec<EiTable> {
    let mut tables = Vec::new();
    let mut rest = channel_eis;
    for entity in world.entities() {
        let split = rest
            .iter()
            .position(|e| e.receiver != entity.id)
            .unwrap_or(rest.len());
        let (mine, tail) = rest.split_at(split);
        rest = tail;
        if entity.engageable {
            tables.push(aggregate_ei(entity.id, mine, idle_baseline, world));
        }
    }
    tables
}

/// Argmax focus. Ties go to `previous_focus` if it is among the maximizers,
/// otherwise to the lowest id.
pub fn compute_focus(table: &EiTable, previous_focus: EntityId) -> EntityId {
    compute_focus_with_margin(table, previous_focus, 0.0)
}

/// Like [`compute_focus`], but the previous focus is kept as long as it is
/// within `margin` of the maximum.
pub fn compute_focus_with_margin(
    table: &EiTable,
    previous_focus: EntityId,
    margin: f64,
) -> EntityId {
    let mut best: Option<(EntityId, f64)> = None;
    for &(id, v) in &table.totals {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((id, v)),
        }
    }
    let Some((best_id, best_v)) = best else {
        return table.receiver;
    };
    if table
        .totals
        .binary_search_by_key(&previous_focus, |&(id, _)| id)
        .is_ok()
        && table.total(previous_focus) + margin >= best_v
    {
        return previous_focus;
    }
    best_id
}

/// Focus of every entity: engageable ones by argmax over their table,
/// objects onto themselves.
pub fn compute_all_focus(world: &World, tables: &[EiTable], margin: f64) -> FocusMap {
    let mut map = FocusMap::new();
    let mut tables = tables.iter().peekable();
    for entity in world.entities() {
        let focus = match tables.peek() {
            Some(t) if t.receiver == entity.id && entity.engageable => {
                let t = tables.next().unwrap();
                compute_focus_with_margin(t, entity.focus, margin)
            }
            _ => entity.id,
        };
        map.insert(entity.id, focus);
    }
    map
}
