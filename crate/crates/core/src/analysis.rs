//! Summaries over a recorded run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::TickRecord;
use crate::model::{EntityId, RelationState};
use crate::perception::{MiscommunicationEvent, Politeness};
use crate::strategy::GoalKind;

/// A maximal run of ticks `start..=end` over which a value held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub start: u64,
    pub end: u64,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTimeline {
    pub from: EntityId,
    pub to: EntityId,
    pub spans: Vec<Span<RelationState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub a: EntityId,
    pub b: EntityId,
    pub start: u64,
    pub end: u64,
    /// Still engaged on the last recorded tick.
    pub open: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PolitenessCounts {
    pub insufficient: u64,
    pub polite: u64,
    pub rude: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngageOutcome {
    pub entity: EntityId,
    pub target: EntityId,
    pub goal_tick: u64,
    /// Ticks from adopting the goal to the first engaged tick.
    pub ticks_to_engaged: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub first_tick: Option<u64>,
    pub last_tick: Option<u64>,
    pub pair_timelines: Vec<PairTimeline>,
    pub episodes: Vec<Episode>,
    pub miscommunication: Vec<MiscommunicationEvent>,
    pub politeness: BTreeMap<EntityId, PolitenessCounts>,
    pub groups: Vec<Span<Vec<Vec<EntityId>>>>,
    pub focus: BTreeMap<EntityId, Vec<Span<EntityId>>>,
    pub time_to_engaged: Vec<EngageOutcome>,
}

fn push_span<T: PartialEq>(spans: &mut Vec<Span<T>>, tick: u64, value: T) {
    if let Some(last) = spans.last_mut() {
        if last.value == value && last.end + 1 == tick {
            last.end = tick;
            return;
        }
    }
    spans.push(Span {
        start: tick,
        end: tick,
        value,
    });
}

pub fn analyze(records: &[TickRecord]) -> Report {
    let mut report = Report {
        first_tick: records.first().map(|r| r.tick),
        last_tick: records.last().map(|r| r.tick),
        ..Report::default()
    };

    let mut pairs: BTreeMap<(EntityId, EntityId), Vec<Span<RelationState>>> = BTreeMap::new();
    let mut open: BTreeMap<(EntityId, EntityId), u64> = BTreeMap::new();
    // entity -> (target, tick the goal was adopted, reached)
    let mut goals: BTreeMap<EntityId, (EntityId, u64, bool)> = BTreeMap::new();

    for r in records {
        for (a, b, s) in r.states.iter() {
            push_span(pairs.entry((a, b)).or_default(), r.tick, s);
            if a < b {
                let key = (a, b);
                if s == RelationState::Engaged {
                    open.entry(key).or_insert(r.tick);
                } else if let Some(start) = open.remove(&key) {
                    report.episodes.push(Episode {
                        a,
                        b,
                        start,
                        end: r.tick - 1,
                        open: false,
                    });
                }
            }
        }

        report
            .miscommunication
            .extend(r.miscommunication.iter().cloned());

        for p in &r.politeness {
            let c = report.politeness.entry(p.sender).or_default();
            match p.classification {
                Politeness::Insufficient => c.insufficient += 1,
                Politeness::Polite => c.polite += 1,
                Politeness::Rude => c.rude += 1,
            }
        }

        let members: Vec<Vec<EntityId>> = r.groups.iter().map(|g| g.members.clone()).collect();
        push_span(&mut report.groups, r.tick, members);

        for (&id, &target) in &r.focus_map {
            push_span(report.focus.entry(id).or_default(), r.tick, target);
        }

        for e in &r.entities {
            match e.goal {
                GoalKind::Engage { target } => {
                    let entry = goals.entry(e.id).or_insert((target, r.tick, false));
                    if entry.0 != target {
                        *entry = (target, r.tick, false);
                    }
                }
                _ => {
                    goals.remove(&e.id);
                }
            }
        }
        for (&id, (target, since, reached)) in goals.iter_mut() {
            if !*reached && r.states.get(id, *target) == Some(RelationState::Engaged) {
                *reached = true;
                report.time_to_engaged.push(EngageOutcome {
                    entity: id,
                    target: *target,
                    goal_tick: *since,
                    ticks_to_engaged: Some(r.tick - *since),
                });
            }
        }
    }

    let last = report.last_tick.unwrap_or(0);
    for ((a, b), start) in open {
        report.episodes.push(Episode {
            a,
            b,
            start,
            end: last,
            open: true,
        });
    }
    report.episodes.sort_by_key(|e| (e.start, e.a, e.b));
    for (id, (target, since, reached)) in goals {
        if !reached {
            report.time_to_engaged.push(EngageOutcome {
                entity: id,
                target,
                goal_tick: since,
                ticks_to_engaged: None,
            });
        }
    }
    report
        .time_to_engaged
        .sort_by_key(|o| (o.entity, o.goal_tick));
    report.pair_timelines = pairs
        .into_iter()
        .map(|((from, to), spans)| PairTimeline { from, to, spans })
        .collect();
    report
}

fn range(start: u64, end: u64) -> String {
    if start == end {
        format!("{start}")
    } else {
        format!("{start}-{end}")
    }
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.first_tick.is_none()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let (Some(first), Some(last)) = (self.first_tick, self.last_tick) else {
            s.push_str("empty trace\n");
            return s;
        };
        let _ = writeln!(s, "ticks {first}-{last}");

        s.push_str("\nfocus\n");
        for (id, spans) in &self.focus {
            let parts: Vec<String> = spans
                .iter()
                .map(|sp| format!("{} -> {}", range(sp.start, sp.end), sp.value))
                .collect();
            let _ = writeln!(s, "  {id}: {}", parts.join(", "));
        }

        s.push_str("\nstates\n");
        for p in self
            .pair_timelines
            .iter()
            .filter(|p| p.spans.iter().any(|sp| sp.value != RelationState::Passive))
        {
            let parts: Vec<String> = p
                .spans
                .iter()
                .map(|sp| format!("{} {}", range(sp.start, sp.end), sp.value))
                .collect();
            let _ = writeln!(s, "  {} -> {}: {}", p.from, p.to, parts.join(", "));
        }

        s.push_str("\nengagement episodes\n");
        if self.episodes.is_empty() {
            s.push_str("  none\n");
        }
        for e in &self.episodes {
            let tail = if e.open { " (open)" } else { "" };
            let _ = writeln!(s, "  {} <-> {}: {}{tail}", e.a, e.b, range(e.start, e.end));
        }

        s.push_str("\ntime to engaged\n");
        if self.time_to_engaged.is_empty() {
            s.push_str("  none\n");
        }
        for o in &self.time_to_engaged {
            match o.ticks_to_engaged {
                Some(t) => {
                    let _ = writeln!(
                        s,
                        "  {} -> {}: {t} ticks from tick {}",
                        o.entity, o.target, o.goal_tick
                    );
                }
                None => {
                    let _ = writeln!(s, "  {} -> {}: not engaged", o.entity, o.target);
                }
            }
        }

        s.push_str("\ngroups\n");
        for g in &self.groups {
            let members: Vec<String> = g
                .value
                .iter()
                .map(|m| {
                    format!(
                        "{{{}}}",
                        m.iter()
                            .map(|i| i.to_string())
                            .collect::<Vec<_>>()
                            .join(", ")
                    )
                })
                .collect();
            let shown = if members.is_empty() {
                "none".to_string()
            } else {
                members.join(" ")
            };
            let _ = writeln!(s, "  {}: {shown}", range(g.start, g.end));
        }

        s.push_str("\npoliteness\n");
        if self.politeness.is_empty() {
            s.push_str("  none\n");
        }
        for (id, c) in &self.politeness {
            let _ = writeln!(
                s,
                "  {id}: insufficient {}, polite {}, rude {}",
                c.insufficient, c.polite, c.rude
            );
        }

        let _ = writeln!(
            s,
            "\nmiscommunication ({} events)",
            self.miscommunication.len()
        );
        for m in &self.miscommunication {
            let _ = writeln!(
                s,
                "  tick {}: {} believes {} -> {} is {}, actually {}",
                m.tick, m.observer, m.pair.0, m.pair.1, m.subjective_state, m.objective_state
            );
        }
        s
    }
}
