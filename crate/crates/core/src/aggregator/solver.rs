//! Backtracking search with forward checking.
//!
//! Variables are taken in index order and values in domain order, so the
//! first solution found is deterministic. After each assignment every
//! unassigned variable's live domain is filtered to values that keep each
//! of its constraints satisfiable; sum constraints use optimistic bounds
//! over the live domains of the unassigned scope.

use super::csp::{Assignment, Constraint, CspInstance, Relation};
use super::model::SetpointAction;

pub fn solve_csp(inst: &CspInstance) -> Option<Assignment> {
    let values = solve_values(inst)?;
    Some(inst.assignment_from(&values))
}

/// Solves and returns the chosen value per variable.
pub fn solve_values(inst: &CspInstance) -> Option<Vec<SetpointAction>> {
    let n = inst.variables.len();
    let mut by_var = vec![Vec::new(); n];
    for (ci, c) in inst.constraints.iter().enumerate() {
        for &v in &c.scope {
            if !by_var[v].contains(&ci) {
                by_var[v].push(ci);
            }
        }
    }
    let search = Search { inst, by_var };
    let live: Vec<Vec<usize>> = inst.domains.iter().map(|d| (0..d.len()).collect()).collect();
    if live.iter().any(Vec::is_empty) {
        return None;
    }
    // Constraints with empty scope (or any scope) must be viable up front.
    let mut assigned = vec![None; n];
    if !inst.constraints.iter().all(|c| search.viable(c, &assigned, &live)) {
        return None;
    }
    let live = search.propagate(&assigned, live)?;
    if search.backtrack(0, &mut assigned, live) {
        Some(
            assigned
                .iter()
                .enumerate()
                .map(|(v, a)| inst.domains[v][a.expect("complete")])
                .collect(),
        )
    } else {
        None
    }
}

struct Search<'a> {
    inst: &'a CspInstance,
    by_var: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn value(&self, var: usize, idx: usize) -> SetpointAction {
        self.inst.domains[var][idx]
    }

    fn delivered(&self, var: usize, idx: usize) -> f64 {
        self.inst.variables[var].delivered_kw(&self.value(var, idx))
    }

    /// Can `c` still be satisfied given the assigned values and live domains?
    fn viable(&self, c: &Constraint, assigned: &[Option<usize>], live: &[Vec<usize>]) -> bool {
        match c.relation {
            Relation::AtLeastKw(q) => {
                let best: f64 = c
                    .scope
                    .iter()
                    .map(|&v| match assigned[v] {
                        Some(i) => self.delivered(v, i),
                        None => live[v].iter().map(|&i| self.delivered(v, i)).fold(f64::NEG_INFINITY, f64::max),
                    })
                    .sum();
                best + 1e-9 >= q
            }
            Relation::AtMostKw(q) => {
                let least: f64 = c
                    .scope
                    .iter()
                    .map(|&v| match assigned[v] {
                        Some(i) => self.delivered(v, i),
                        None => live[v].iter().map(|&i| self.delivered(v, i)).fold(f64::INFINITY, f64::min),
                    })
                    .sum();
                least <= q + 1e-9
            }
            _ => {
                let unassigned: Vec<usize> = c.scope.iter().copied().filter(|&v| assigned[v].is_none()).collect();
                match unassigned.as_slice() {
                    [] => c.holds(&self.inst.variables, &self.tuple(c, assigned, None)),
                    [only] => live[*only]
                        .iter()
                        .any(|&i| c.holds(&self.inst.variables, &self.tuple(c, assigned, Some((*only, i))))),
                    _ => true,
                }
            }
        }
    }

    fn tuple(&self, c: &Constraint, assigned: &[Option<usize>], extra: Option<(usize, usize)>) -> Vec<SetpointAction> {
        c.scope
            .iter()
            .map(|&v| {
                let idx = match extra {
                    Some((ev, ei)) if ev == v => ei,
                    _ => assigned[v].expect("scope variable assigned"),
                };
                self.value(v, idx)
            })
            .collect()
    }

    /// Filters every unassigned variable's live domain. `None` on a wipe-out.
    fn propagate(&self, assigned: &[Option<usize>], mut live: Vec<Vec<usize>>) -> Option<Vec<Vec<usize>>> {
        let mut scratch = assigned.to_vec();
        for var in 0..assigned.len() {
            if assigned[var].is_some() {
                continue;
            }
            let candidates = std::mem::take(&mut live[var]);
            let mut kept = Vec::with_capacity(candidates.len());
            for idx in candidates {
                scratch[var] = Some(idx);
                if self.by_var[var].iter().all(|&ci| self.viable(&self.inst.constraints[ci], &scratch, &live)) {
                    kept.push(idx);
                }
            }
            scratch[var] = None;
            if kept.is_empty() {
                return None;
            }
            live[var] = kept;
        }
        Some(live)
    }

    fn backtrack(&self, var: usize, assigned: &mut Vec<Option<usize>>, live: Vec<Vec<usize>>) -> bool {
        if var == assigned.len() {
            return true;
        }
        for &idx in &live[var] {
            assigned[var] = Some(idx);
            let mut narrowed = live.clone();
            narrowed[var] = vec![idx];
            let consistent = self.by_var[var]
                .iter()
                .all(|&ci| self.viable(&self.inst.constraints[ci], assigned, &narrowed));
            if consistent {
                if let Some(next) = self.propagate(assigned, narrowed) {
                    if self.backtrack(var + 1, assigned, next) {
                        return true;
                    }
                }
            }
        }
        assigned[var] = None;
        false
    }
}
