//! Cost-minimising market clearing over whole (non-divisible) bids.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::model::Bid;

/// Above this many bids the exact search gives way to greedy plus repair.
pub const EXACT_CLEARING_LIMIT: usize = 20;

const COST_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clearing {
    /// Accepted bid ids, sorted.
    pub selected: Vec<String>,
    pub total_cost: f64,
    pub offered_kw: f64,
}

/// Picks the cheapest set of bids whose offers sum to at least
/// `quantity_kw`. `None` when even all bids together fall short.
///
/// Ties on cost go to the lexicographically smallest id list.
pub fn clear_market(bids: &[Bid], quantity_kw: f64) -> Option<Clearing> {
    let total: f64 = bids.iter().map(|b| b.offered_kw).sum();
    if total + COST_EPS < quantity_kw {
        return None;
    }
    let mut order: Vec<&Bid> = bids.iter().collect();
    order.sort_by(|a, b| {
        a.price_per_kw
            .partial_cmp(&b.price_per_kw)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.bid_id.cmp(&b.bid_id))
    });
    let chosen = if bids.len() <= EXACT_CLEARING_LIMIT {
        branch_and_bound(&order, quantity_kw)?
    } else {
        greedy_with_repair(&order, quantity_kw)?
    };
    Some(summarize(&chosen))
}

fn summarize(chosen: &[&Bid]) -> Clearing {
    let mut selected: Vec<String> = chosen.iter().map(|b| b.bid_id.clone()).collect();
    selected.sort();
    Clearing {
        selected,
        total_cost: chosen.iter().map(|b| b.cost()).sum(),
        offered_kw: chosen.iter().map(|b| b.offered_kw).sum(),
    }
}

fn sorted_ids(chosen: &[&Bid]) -> Vec<String> {
    let mut ids: Vec<String> = chosen.iter().map(|b| b.bid_id.clone()).collect();
    ids.sort();
    ids
}

struct Search<'a> {
    bids: &'a [&'a Bid],
    need: f64,
    /// suffix_kw[i] = kW offered by bids[i..].
    suffix_kw: Vec<f64>,
    best_cost: f64,
    best: Option<(Vec<usize>, Vec<String>)>,
}

impl Search<'_> {
    /// Fractional fill of the remaining need from bids[i..], cheapest first:
    /// a lower bound on any completion.
    fn lower_bound(&self, i: usize, mut remaining: f64) -> f64 {
        let mut bound = 0.0;
        for b in &self.bids[i..] {
            if remaining <= 0.0 {
                break;
            }
            let take = remaining.min(b.offered_kw);
            bound += take * b.price_per_kw;
            remaining -= take;
        }
        bound
    }

    fn offer(&mut self, chosen: &[usize], cost: f64) {
        let better = match &self.best {
            None => true,
            Some((_, ids)) => {
                cost < self.best_cost - COST_EPS
                    || (cost <= self.best_cost + COST_EPS && {
                        let refs: Vec<&Bid> = chosen.iter().map(|&i| self.bids[i]).collect();
                        sorted_ids(&refs) < *ids
                    })
            }
        };
        if better {
            let refs: Vec<&Bid> = chosen.iter().map(|&i| self.bids[i]).collect();
            self.best_cost = cost;
            self.best = Some((chosen.to_vec(), sorted_ids(&refs)));
        }
    }

    fn dfs(&mut self, i: usize, covered: f64, cost: f64, chosen: &mut Vec<usize>) {
        if covered + COST_EPS >= self.need {
            self.offer(chosen, cost);
            return;
        }
        if i == self.bids.len() || covered + self.suffix_kw[i] + COST_EPS < self.need {
            return;
        }
        if self.best.is_some() && cost + self.lower_bound(i, self.need - covered) > self.best_cost + COST_EPS {
            return;
        }
        chosen.push(i);
        let b = self.bids[i];
        self.dfs(i + 1, covered + b.offered_kw, cost + b.cost(), chosen);
        chosen.pop();
        self.dfs(i + 1, covered, cost, chosen);
    }
}

fn branch_and_bound<'a>(bids: &[&'a Bid], need: f64) -> Option<Vec<&'a Bid>> {
    let mut suffix_kw = vec![0.0; bids.len() + 1];
    for i in (0..bids.len()).rev() {
        suffix_kw[i] = suffix_kw[i + 1] + bids[i].offered_kw;
    }
    let mut search = Search {
        bids,
        need,
        suffix_kw,
        best_cost: f64::INFINITY,
        best: None,
    };
    search.dfs(0, 0.0, 0.0, &mut Vec::new());
    search
        .best
        .map(|(idx, _)| idx.into_iter().map(|i| bids[i]).collect())
}

fn greedy_with_repair<'a>(bids: &[&'a Bid], need: f64) -> Option<Vec<&'a Bid>> {
    let mut chosen = vec![false; bids.len()];
    let mut covered = 0.0;
    for (i, b) in bids.iter().enumerate() {
        if covered + COST_EPS >= need {
            break;
        }
        chosen[i] = true;
        covered += b.offered_kw;
    }
    if covered + COST_EPS < need {
        return None;
    }
    loop {
        let mut improved = false;
        // Drop bids that are no longer needed, most expensive first.
        let mut by_cost: Vec<usize> = (0..bids.len()).filter(|&i| chosen[i]).collect();
        by_cost.sort_by(|&a, &b| bids[b].cost().partial_cmp(&bids[a].cost()).unwrap_or(Ordering::Equal));
        for i in by_cost {
            if covered - bids[i].offered_kw + COST_EPS >= need {
                chosen[i] = false;
                covered -= bids[i].offered_kw;
                improved = true;
            }
        }
        // One-for-one swaps that keep coverage and lower cost.
        'swap: for s in 0..bids.len() {
            if !chosen[s] {
                continue;
            }
            for u in 0..bids.len() {
                if chosen[u] || bids[u].cost() + COST_EPS >= bids[s].cost() {
                    continue;
                }
                if covered - bids[s].offered_kw + bids[u].offered_kw + COST_EPS >= need {
                    chosen[s] = false;
                    chosen[u] = true;
                    covered += bids[u].offered_kw - bids[s].offered_kw;
                    improved = true;
                    break 'swap;
                }
            }
        }
        if !improved {
            break;
        }
    }
    Some(
        bids.iter()
            .zip(&chosen)
            .filter(|(_, &c)| c)
            .map(|(b, _)| *b)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bid(id: &str, kw: f64, price: f64) -> Bid {
        Bid {
            bid_id: id.into(),
            prosumer: format!("p-{id}"),
            offered_kw: kw,
            price_per_kw: price,
            resource_ids: vec![],
        }
    }

    /// Exhaustive minimum over all covering subsets.
    fn brute_force(bids: &[Bid], q: f64) -> Option<f64> {
        let n = bids.len();
        (0u32..1 << n)
            .filter_map(|mask| {
                let (kw, cost) = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .fold((0.0, 0.0), |(k, c), i| (k + bids[i].offered_kw, c + bids[i].cost()));
                (kw + COST_EPS >= q).then_some(cost)
            })
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    #[test]
    fn three_bid_example() {
        let bids = [bid("A", 6.0, 3.0), bid("B", 5.0, 2.0), bid("C", 10.0, 6.0)];
        // Oracle: subsets covering 10 kW are {A,B}=28, {C}=60, {A,C}=78, {B,C}=70, {A,B,C}=88.
        assert_eq!(brute_force(&bids, 10.0), Some(28.0));
        let c = clear_market(&bids, 10.0).unwrap();
        assert_eq!(c.selected, ["A", "B"]);
        assert_eq!(c.total_cost, 28.0);
        assert_eq!(c.offered_kw, 11.0);
    }

    #[test]
    fn single_free_bid() {
        let c = clear_market(&[bid("only", 1.0, 0.0)], 1.0).unwrap();
        assert_eq!(c.selected, ["only"]);
        assert_eq!(c.total_cost, 0.0);
    }

    #[test]
    fn insufficient_offers_are_unsat() {
        assert!(clear_market(&[bid("a", 5.0, 1.0), bid("b", 3.0, 1.0)], 10.0).is_none());
        assert!(clear_market(&[], 1.0).is_none());
    }

    #[test]
    fn equal_cost_sets_break_ties_by_id() {
        let bids = [bid("z", 5.0, 2.0), bid("a", 5.0, 2.0)];
        assert_eq!(clear_market(&bids, 5.0).unwrap().selected, ["a"]);
    }

    #[test]
    fn greedy_path_handles_large_books() {
        let bids: Vec<Bid> = (0..30).map(|i| bid(&format!("b{i:02}"), 1.0 + (i % 4) as f64, 1.0 + (i % 7) as f64)).collect();
        let c = clear_market(&bids, 20.0).unwrap();
        assert!(c.offered_kw >= 20.0);
        let recomputed: f64 = bids.iter().filter(|b| c.selected.contains(&b.bid_id)).map(Bid::cost).sum();
        assert!((recomputed - c.total_cost).abs() < 1e-9);
    }

    #[test]
    fn matches_brute_force_on_small_books() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.gen_range(0..=10);
            let bids: Vec<Bid> = (0..n)
                .map(|i| bid(&format!("b{i}"), rng.gen_range(1..=10) as f64, rng.gen_range(0..=8) as f64))
                .collect();
            let q = rng.gen_range(1..=40) as f64;
            let exact = brute_force(&bids, q);
            let got = clear_market(&bids, q).map(|c| c.total_cost);
            assert_eq!(got.is_some(), exact.is_some());
            if let (Some(a), Some(b)) = (got, exact) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }
}
