//! Real-coded NSGA-II for two minimization objectives.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsgaConfig {
    pub population: usize,
    pub generations: usize,
    /// SBX distribution index.
    pub eta_c: f64,
    /// Polynomial mutation distribution index.
    pub eta_m: f64,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `None` means `1 / genes`.
    pub mutation_prob: Option<f64>,
    pub seed: u64,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        Self {
            population: 80,
            generations: 100,
            eta_c: 15.0,
            eta_m: 20.0,
            crossover_prob: 0.9,
            mutation_prob: None,
            seed: 0,
        }
    }
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || self.population % 2 != 0 {
            return Err(Error::Config(format!(
                "population must be even and >= 4, got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Config("crossover probability outside [0, 1]".into()));
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config("mutation probability outside [0, 1]".into()));
            }
        }
        if !(self.eta_c >= 0.0) || !(self.eta_m >= 0.0) {
            return Err(Error::Config("distribution indices must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub x: Vec<f64>,
    pub objectives: [f64; 2],
    pub rank: usize,
    pub crowding: f64,
}

/// `a` dominates `b`: no worse in every objective, strictly better in one.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Partition into non-dominated fronts; indices ascend within each front.
pub fn fast_nondominated_sort(objectives: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = objectives.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in p + 1..n {
            if dominates(&objectives[p], &objectives[q]) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates(&objectives[q], &objectives[p]) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order as `front`).
pub fn crowding_distance(objectives: &[[f64; 2]], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            objectives[front[a]][m]
                .total_cmp(&objectives[front[b]][m])
                .then(a.cmp(&b))
        });
        let lo = objectives[front[order[0]]][m];
        let hi = objectives[front[order[n - 1]]][m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            let gap = objectives[front[order[k + 1]]][m] - objectives[front[order[k - 1]]][m];
            dist[order[k]] += gap / range;
        }
    }
    dist
}

/// Lower rank wins, then larger crowding distance.
fn crowded_better(a: &Individual, b: &Individual) -> bool {
    a.rank < b.rank || (a.rank == b.rank && a.crowding > b.crowding)
}

fn assign_rank_and_crowding(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let objs: Vec<[f64; 2]> = pop.iter().map(|i| i.objectives).collect();
    let fronts = fast_nondominated_sort(&objs);
    for (rank, front) in fronts.iter().enumerate() {
        let cd = crowding_distance(&objs, front);
        for (k, &i) in front.iter().enumerate() {
            pop[i].rank = rank;
            pop[i].crowding = cd[k];
        }
    }
    fronts
}

fn sbx_pair(y1: f64, y2: f64, lo: f64, hi: f64, eta: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    if (y1 - y2).abs() <= 1e-14 || hi <= lo {
        return (y1, y2);
    }
    let (a, b) = if y1 < y2 { (y1, y2) } else { (y2, y1) };
    let u: f64 = rng.random();
    let spread = |beta: f64| {
        let alpha = 2.0 - beta.powf(-(eta + 1.0));
        if u <= 1.0 / alpha {
            (u * alpha).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
        }
    };
    let betaq = spread(1.0 + 2.0 * (a - lo) / (b - a));
    let c1 = (0.5 * ((a + b) - betaq * (b - a))).clamp(lo, hi);
    let betaq = spread(1.0 + 2.0 * (hi - b) / (b - a));
    let c2 = (0.5 * ((a + b) + betaq * (b - a))).clamp(lo, hi);
    if rng.random::<f64>() < 0.5 {
        (c2, c1)
    } else {
        (c1, c2)
    }
}

fn polynomial_mutation(y: f64, lo: f64, hi: f64, eta: f64, rng: &mut ChaCha8Rng) -> f64 {
    if hi <= lo {
        return y;
    }
    let d1 = (y - lo) / (hi - lo);
    let d2 = (hi - y) / (hi - lo);
    let u: f64 = rng.random();
    let pow = 1.0 / (eta + 1.0);
    let dq = if u < 0.5 {
        let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
        v.powf(pow) - 1.0
    } else {
        let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
        1.0 - v.powf(pow)
    };
    (y + dq * (hi - lo)).clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub best_f1: f64,
    pub best_f2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NsgaResult {
    /// Final population with rank and crowding assigned.
    pub population: Vec<Individual>,
    /// Fronts of the final population (indices into `population`).
    pub fronts: Vec<Vec<usize>>,
    /// Best objective values after initialization and after each generation.
    pub history: Vec<GenerationStats>,
}

impl NsgaResult {
    /// First-front members ordered by (f1, f2).
    pub fn archive(&self) -> Vec<&Individual> {
        let mut members: Vec<&Individual> = self.fronts[0].iter().map(|&i| &self.population[i]).collect();
        members.sort_by(|a, b| {
            a.objectives[0]
                .total_cmp(&b.objectives[0])
                .then(a.objectives[1].total_cmp(&b.objectives[1]))
        });
        members
    }
}

fn stats(pop: &[Individual]) -> GenerationStats {
    GenerationStats {
        best_f1: pop.iter().map(|i| i.objectives[0]).fold(f64::INFINITY, f64::min),
        best_f2: pop.iter().map(|i| i.objectives[1]).fold(f64::INFINITY, f64::min),
    }
}

fn evaluate_all<F>(xs: Vec<Vec<f64>>, objective: &F) -> Result<Vec<Individual>>
where
    F: Fn(&[f64]) -> Result<[f64; 2]> + Sync,
{
    xs.into_par_iter()
        .map(|x| {
            let objectives = objective(&x)?;
            if !objectives.iter().all(|v| v.is_finite()) {
                return Err(Error::domain(format!("non-finite objectives {objectives:?}")));
            }
            Ok(Individual {
                x,
                objectives,
                rank: 0,
                crowding: 0.0,
            })
        })
        .collect()
}

/// Minimize `objective` over the box `bounds`. Evaluations may run in
/// parallel; every random draw happens sequentially from the seeded stream.
/// `initial` individuals (clipped to the box) replace the first random ones.
pub fn nsga2_run<F>(bounds: &[(f64, f64)], cfg: &NsgaConfig, initial: &[Vec<f64>], objective: F) -> Result<NsgaResult>
where
    F: Fn(&[f64]) -> Result<[f64; 2]> + Sync,
{
    cfg.validate()?;
    if bounds.is_empty() {
        return Err(Error::Config("no decision variables".into()));
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
        return Err(Error::Config(format!("invalid bound [{lo}, {hi}]")));
    }
    let genes = bounds.len();
    let n = cfg.population;
    let pm = cfg.mutation_prob.unwrap_or(1.0 / genes as f64);
    let mut rng = seed::rng(cfg.seed, "nsga2");
    let clip = |x: &mut Vec<f64>| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };

    let mut xs: Vec<Vec<f64>> = Vec::with_capacity(n);
    for seed_x in initial.iter().take(n) {
        if seed_x.len() != genes {
            return Err(Error::Config("initial individual has the wrong length".into()));
        }
        let mut x = seed_x.clone();
        clip(&mut x);
        xs.push(x);
    }
    while xs.len() < n {
        xs.push(bounds.iter().map(|(lo, hi)| if hi > lo { rng.random_range(*lo..=*hi) } else { *lo }).collect());
    }
    let mut pop = evaluate_all(xs, &objective)?;
    assign_rank_and_crowding(&mut pop);
    let mut history = vec![stats(&pop)];

    for _ in 0..cfg.generations {
        let tournament = |rng: &mut ChaCha8Rng| {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if crowded_better(&pop[b], &pop[a]) {
                b
            } else {
                a
            }
        };
        let mut children: Vec<Vec<f64>> = Vec::with_capacity(n);
        while children.len() < n {
            let p1 = tournament(&mut rng);
            let p2 = tournament(&mut rng);
            let mut c1 = pop[p1].x.clone();
            let mut c2 = pop[p2].x.clone();
            if rng.random::<f64>() < cfg.crossover_prob {
                for g in 0..genes {
                    if rng.random::<f64>() < 0.5 {
                        let (lo, hi) = bounds[g];
                        let (a, b) = sbx_pair(c1[g], c2[g], lo, hi, cfg.eta_c, &mut rng);
                        c1[g] = a;
                        c2[g] = b;
                    }
                }
            }
            for c in [&mut c1, &mut c2] {
                for g in 0..genes {
                    if rng.random::<f64>() < pm {
                        let (lo, hi) = bounds[g];
                        c[g] = polynomial_mutation(c[g], lo, hi, cfg.eta_m, &mut rng);
                    }
                }
                clip(c);
            }
            children.push(c1);
            children.push(c2);
        }
        let offspring = evaluate_all(children, &objective)?;

        let mut combined = pop;
        combined.extend(offspring);
        let fronts = assign_rank_and_crowding(&mut combined);
        let mut keep: Vec<usize> = Vec::with_capacity(n);
        for front in &fronts {
            if keep.len() + front.len() <= n {
                keep.extend(front);
            } else {
                let mut rest = front.clone();
                rest.sort_by(|&a, &b| combined[b].crowding.total_cmp(&combined[a].crowding).then(a.cmp(&b)));
                keep.extend(rest.into_iter().take(n - keep.len()));
            }
            if keep.len() == n {
                break;
            }
        }
        let mut slots: Vec<Option<Individual>> = combined.into_iter().map(Some).collect();
        pop = keep.iter().map(|&i| slots[i].take().expect("selected once")).collect();
        assign_rank_and_crowding(&mut pop);
        history.push(stats(&pop));
    }

    let fronts = assign_rank_and_crowding(&mut pop);
    Ok(NsgaResult {
        population: pop,
        fronts,
        history,
    })
}
