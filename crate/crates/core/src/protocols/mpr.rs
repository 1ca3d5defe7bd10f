//! Greedy multipoint relay selection.

use std::collections::{BTreeMap, BTreeSet};

use super::NodeId;

/// Picks relays among `one_hop` so that every strict two-hop neighbor is
/// reached. `two_hop` maps each one-hop neighbor to the nodes it reaches;
/// entries for `me` and for one-hop neighbors are ignored.
pub fn select_mprs(
    me: NodeId,
    one_hop: &BTreeSet<NodeId>,
    two_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>,
) -> BTreeSet<NodeId> {
    let reach: BTreeMap<NodeId, BTreeSet<NodeId>> = one_hop
        .iter()
        .map(|n| {
            let set = two_hop
                .get(n)
                .map(|s| {
                    s.iter()
                        .copied()
                        .filter(|x| *x != me && !one_hop.contains(x))
                        .collect()
                })
                .unwrap_or_default();
            (*n, set)
        })
        .collect();
    let mut uncovered: BTreeSet<NodeId> = reach.values().flatten().copied().collect();
    let mut mprs = BTreeSet::new();

    for target in uncovered.clone() {
        let mut via = reach.iter().filter(|(_, s)| s.contains(&target));
        if let (Some((n, _)), None) = (via.next(), via.next()) {
            mprs.insert(*n);
        }
    }
    for n in &mprs {
        for x in &reach[n] {
            uncovered.remove(x);
        }
    }

    while !uncovered.is_empty() {
        let (best, gain) = reach
            .iter()
            .filter(|(n, _)| !mprs.contains(*n))
            .map(|(n, s)| (*n, s.intersection(&uncovered).count()))
            .fold((None, 0), |acc, (n, c)| if c > acc.1 { (Some(n), c) } else { acc });
        let Some(best) = best.filter(|_| gain > 0) else {
            break;
        };
        mprs.insert(best);
        for x in &reach[&best] {
            uncovered.remove(x);
        }
    }
    mprs
}

/// True when every strict two-hop neighbor is reached through `mprs`.
pub fn covers(
    me: NodeId,
    one_hop: &BTreeSet<NodeId>,
    two_hop: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    mprs: &BTreeSet<NodeId>,
) -> bool {
    let strict = |x: &NodeId| *x != me && !one_hop.contains(x);
    one_hop
        .iter()
        .filter_map(|n| two_hop.get(n))
        .flatten()
        .filter(|x| strict(x))
        .all(|x| mprs.iter().any(|m| two_hop.get(m).is_some_and(|s| s.contains(x))))
}
