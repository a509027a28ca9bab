use std::collections::VecDeque;

use super::Candidate;
use crate::env::{Cell, DstAction, DstMap};

/// Shortest legal path from the start to every treasure, as
/// `(treasure position, value, actions)`. Treasures end the episode, so paths
/// never pass through one. Unreachable treasures are omitted.
pub fn dst_shortest_paths(map: &DstMap) -> Vec<((usize, usize), f64, Vec<DstAction>)> {
    let (rows, cols) = (map.rows(), map.cols());
    let mut parent: Vec<Option<(usize, DstAction)>> = vec![None; rows * cols];
    let mut seen = vec![false; rows * cols];
    let index = |p: (usize, usize)| p.0 * cols + p.1;
    let mut queue = VecDeque::from([map.start()]);
    seen[index(map.start())] = true;
    while let Some(pos) = queue.pop_front() {
        if matches!(map.cell(pos), Cell::Treasure(_)) {
            continue;
        }
        for a in DstAction::ALL {
            let next = map.move_from(pos, a);
            if !seen[index(next)] {
                seen[index(next)] = true;
                parent[index(next)] = Some((index(pos), a));
                queue.push_back(next);
            }
        }
    }
    map.treasures()
        .into_iter()
        .filter(|(p, _)| seen[index(*p)])
        .map(|(p, v)| {
            let mut actions = Vec::new();
            let mut at = index(p);
            while let Some((prev, a)) = parent[at] {
                actions.push(a);
                at = prev;
            }
            actions.reverse();
            (p, v, actions)
        })
        .collect()
}

/// `(gamma^(d-1) v, -sum_{t<d} gamma^t)` for a treasure `v` reached after `d`
/// steps.
pub fn dst_path_value(value: f64, steps: usize, gamma: f64) -> Vec<f64> {
    let time: f64 = (0..steps).map(|t| gamma.powi(t as i32)).sum();
    vec![gamma.powi(steps as i32 - 1) * value, -time]
}

/// One candidate per reachable treasure (shortest path), plus the option of
/// never reaching a treasure before the `max_steps` cap.
pub fn dst_candidates(map: &DstMap, gamma: f64, max_steps: usize) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = dst_shortest_paths(map)
        .into_iter()
        .filter(|(_, _, path)| path.len() <= max_steps)
        .map(|(p, v, path)| Candidate {
            label: format!("treasure {v} at row {} col {}", p.0, p.1),
            value: dst_path_value(v, path.len(), gamma),
            actions: path.iter().map(|&a| a as usize).collect(),
        })
        .collect();
    let wander: f64 = (0..max_steps).map(|t| gamma.powi(t as i32)).sum();
    out.push(Candidate {
        label: "no treasure".into(),
        value: vec![0.0, -wander],
        actions: Vec::new(),
    });
    out
}

/// Every distinct `(treasure, path length)` outcome of action sequences of
/// at most `max_len` steps, found by enumerating all sequences.
pub fn dst_exhaustive_outcomes(map: &DstMap, max_len: usize) -> Vec<((usize, usize), f64, usize)> {
    fn walk(map: &DstMap, pos: (usize, usize), depth: usize, max_len: usize, out: &mut Vec<((usize, usize), f64, usize)>) {
        if depth == max_len {
            return;
        }
        for a in DstAction::ALL {
            let next = map.move_from(pos, a);
            match map.cell(next) {
                Cell::Treasure(v) => {
                    let o = (next, v, depth + 1);
                    if !out.contains(&o) {
                        out.push(o);
                    }
                }
                _ => walk(map, next, depth + 1, max_len, out),
            }
        }
    }
    let mut out = Vec::new();
    walk(map, map.start(), 0, max_len, &mut out);
    out
}
