use serde::{Deserialize, Serialize};

use super::{ClinicalCase, EventKind, RawEvent, INFERRED_ATTR};

/// Event kinds that explicitly mark a patient's move into a department.
pub const BOUNDARY_KINDS: [EventKind; 4] = [
    EventKind::Entrance,
    EventKind::Transfer,
    EventKind::SurgeryCc,
    EventKind::SurgeryPci,
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub cases: usize,
    pub resorted_fraction: f64,
    pub reconstructed_fraction: f64,
    pub dropped: usize,
}

/// Sorts events, repairs missing boundary events, and normalises discharges.
///
/// Per case:
/// * events are stably sorted by timestamp (ties keep row order);
/// * a discharge without a department inherits the previous one;
/// * a discharge that is not the final event is removed;
/// * a case whose first event is not an entrance gets one at its first
///   timestamp;
/// * wherever the department changes without a boundary event, a transfer
///   is inserted at the timestamp of the first event in the new department.
///
/// Cases with no events (or only an unplaceable discharge) are dropped.
/// Cleaning flags accumulate, so the operation is idempotent.
pub fn clean(cases: &[ClinicalCase]) -> (Vec<ClinicalCase>, CleanReport) {
    let mut out = Vec::with_capacity(cases.len());
    let mut dropped = 0;
    for case in cases {
        match clean_case(case) {
            Some(c) => out.push(c),
            None => dropped += 1,
        }
    }
    let n = out.len();
    let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let report = CleanReport {
        cases: n,
        resorted_fraction: frac(out.iter().filter(|c| c.flags.resorted).count()),
        reconstructed_fraction: frac(out.iter().filter(|c| c.flags.reconstructed).count()),
        dropped,
    };
    (out, report)
}

fn inferred(template: &RawEvent, kind: EventKind, department: &str) -> RawEvent {
    RawEvent::new(template.case_id.clone(), template.timestamp, department, kind)
        .with_attr(INFERRED_ATTR, kind.as_str())
}

fn clean_case(case: &ClinicalCase) -> Option<ClinicalCase> {
    if case.events.is_empty() {
        return None;
    }
    let mut flags = case.flags;

    let mut order: Vec<usize> = (0..case.events.len()).collect();
    order.sort_by_key(|&i| case.events[i].timestamp);
    if order.iter().enumerate().any(|(pos, &i)| pos != i) {
        flags.resorted = true;
    }
    let mut events: Vec<RawEvent> = order.into_iter().map(|i| case.events[i].clone()).collect();

    for i in 1..events.len() {
        if events[i].department.is_empty() {
            events[i].department = events[i - 1].department.clone();
        }
    }

    let last = events.len() - 1;
    let before = events.len();
    let mut pos = 0;
    events.retain(|e| {
        let keep = e.kind != EventKind::Discharge || pos == last;
        pos += 1;
        keep
    });
    if events.len() != before {
        flags.reconstructed = true;
    }
    if events.is_empty() || events[0].department.is_empty() {
        return None;
    }

    let mut cleaned: Vec<RawEvent> = Vec::with_capacity(events.len() + 2);
    if events[0].kind != EventKind::Entrance {
        cleaned.push(inferred(&events[0], EventKind::Entrance, &events[0].department.clone()));
        flags.reconstructed = true;
    }
    for event in events {
        if let Some(prev) = cleaned.last() {
            if prev.department != event.department && !BOUNDARY_KINDS.contains(&event.kind) {
                cleaned.push(inferred(&event, EventKind::Transfer, &event.department));
                flags.reconstructed = true;
            }
        }
        cleaned.push(event);
    }

    Some(ClinicalCase {
        case_id: case.case_id.clone(),
        events: cleaned,
        flags,
    })
}
