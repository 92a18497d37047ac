//! Grid over `(n_batch, n_collect)` measuring real interactions needed to
//! reach a target return.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::distill::median;
use crate::dyna::{Dyna, DynaConfig};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub n_batch: Vec<usize>,
    pub n_collect: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.n_batch.len() * self.n_collect.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(n_batch, n_collect, seed)` in output order.
    pub fn runs(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::with_capacity(self.len());
        for &b in &self.n_batch {
            for &c in &self.n_collect {
                for &s in &self.seeds {
                    out.push((b, c, s));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_batch: usize,
    pub n_collect: usize,
    pub seed: u64,
    pub ratio: f64,
    /// Empty when the target was never reached.
    pub interactions_to_target: Option<u64>,
    pub best_return: f64,
    pub refits: usize,
    pub interactions: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n_batch: usize,
    pub n_collect: usize,
    pub ratio: f64,
    pub reached: usize,
    pub runs: usize,
    /// Unreached runs count as infinite.
    pub median_interactions: f64,
}

fn run_one(env: &EnvSpec, base: &DynaConfig, n_batch: usize, n_collect: usize, seed: u64) -> Result<SweepRow> {
    let cfg = DynaConfig { n_batch, n_collect, ..base.clone() };
    let mut dyna = Dyna::new(env.clone(), cfg, seed)?;
    dyna.run(|_, _| Ok(()))?;
    let s = dyna.state();
    Ok(SweepRow {
        n_batch,
        n_collect,
        seed,
        ratio: n_collect as f64 / n_batch as f64,
        interactions_to_target: s.interactions_to_target,
        best_return: s.best_return,
        refits: s.refits_done,
        interactions: s.interactions,
    })
}

/// One loop per grid point and seed, early-stopping at `base.target_return`.
/// Rows come back in [`SweepGrid::runs`] order whatever `workers` is.
pub fn run_sweep(env: &EnvSpec, base: &DynaConfig, grid: &SweepGrid, workers: usize) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if base.target_return.is_none() {
        return Err(Error::invalid("sweep needs target_return"));
    }
    let runs = grid.runs();
    let results: Mutex<Vec<Option<Result<SweepRow>>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    let next = Mutex::new(0usize);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(runs.len()) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(&(b, c, s)) = runs.get(i) else { break };
                let r = run_one(env, base, b, c, s);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every run executed")).collect()
}

/// Per-cell medians, in grid order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepCell> {
    let mut cells: Vec<SweepCell> = Vec::new();
    let mut samples: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let pos = cells.iter().position(|c| c.n_batch == r.n_batch && c.n_collect == r.n_collect);
        let i = pos.unwrap_or_else(|| {
            cells.push(SweepCell {
                n_batch: r.n_batch,
                n_collect: r.n_collect,
                ratio: r.ratio,
                reached: 0,
                runs: 0,
                median_interactions: f64::NAN,
            });
            samples.push(Vec::new());
            cells.len() - 1
        });
        cells[i].runs += 1;
        cells[i].reached += usize::from(r.interactions_to_target.is_some());
        samples[i].push(r.interactions_to_target.map_or(f64::INFINITY, |n| n as f64));
    }
    for (c, s) in cells.iter_mut().zip(&samples) {
        c.median_interactions = median(s);
    }
    cells
}

pub fn write_rows_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cells_csv(cells: &[SweepCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(b: usize, c: usize, seed: u64, hit: Option<u64>) -> SweepRow {
        SweepRow {
            n_batch: b,
            n_collect: c,
            seed,
            ratio: c as f64 / b as f64,
            interactions_to_target: hit,
            best_return: 0.0,
            refits: 1,
            interactions: 0,
        }
    }

    #[test]
    fn grid_order_and_size() {
        let g = SweepGrid { n_batch: vec![1, 2], n_collect: vec![10, 20], seeds: vec![0, 1] };
        assert_eq!(g.len(), 8);
        assert_eq!(g.runs()[..3], [(1, 10, 0), (1, 10, 1), (1, 20, 0)]);
    }

    #[test]
    fn medians_treat_misses_as_infinite() {
        let rows = vec![row(1, 10, 0, Some(100)), row(1, 10, 1, None), row(1, 10, 2, Some(300)), row(2, 10, 0, None)];
        let cells = summarize(&rows);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].median_interactions, 300.0);
        assert_eq!(cells[0].reached, 2);
        assert!(cells[1].median_interactions.is_infinite());
    }

    #[test]
    fn rejects_empty_grid_and_missing_target() {
        let env = EnvSpec::Swingup { params: Default::default() };
        let mut cfg = DynaConfig::defaults_for(&env);
        let empty = SweepGrid { n_batch: vec![], n_collect: vec![1], seeds: vec![0] };
        cfg.target_return = Some(1.0);
        assert!(run_sweep(&env, &cfg, &empty, 1).is_err());
        cfg.target_return = None;
        let g = SweepGrid { n_batch: vec![1], n_collect: vec![1], seeds: vec![0] };
        assert!(run_sweep(&env, &cfg, &g, 1).is_err());
    }

    #[test]
    fn worker_count_does_not_change_rows() {
        let env = EnvSpec::Swingup { params: Default::default() };
        let mut cfg = DynaConfig::defaults_for(&env);
        cfg.n_off = 1000;
        cfg.refits = 1;
        cfg.ppo.batch_size = 200;
        cfg.ppo.hidden = vec![8];
        cfg.eval_episodes = 1;
        cfg.dynamics.ensemble.n_members = 3;
        cfg.target_return = Some(1e9);
        let g = SweepGrid { n_batch: vec![1, 2], n_collect: vec![100], seeds: vec![3] };
        let a = run_sweep(&env, &cfg, &g, 1).unwrap();
        let b = run_sweep(&env, &cfg, &g, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|r| r.interactions == 1100 && r.interactions_to_target.is_none()));
    }
}
