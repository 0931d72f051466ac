//! Seeded Monte Carlo grids of exact-demixing success rates.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admm::AdmmConfig;
use crate::decode::{demix, DecodeConfig};
use crate::error::{DemixError, Result};
use crate::greedy::{greedy_demix, GreedyConfig};
use crate::model::{generate_instance, recovery_score, AmplitudeLaw, InstanceParams, SpikeSupport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Admm,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaKeyword {
    /// `λ = 1/sqrt(n)`.
    Auto,
}

/// Regularization weight: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaChoice {
    Value(f64),
    Keyword(LambdaKeyword),
}

impl LambdaChoice {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            LambdaChoice::Value(v) => v,
            LambdaChoice::Keyword(LambdaKeyword::Auto) => AdmmConfig::default_lambda(n),
        }
    }
}

impl std::str::FromStr for LambdaChoice {
    type Err = DemixError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaChoice::Keyword(LambdaKeyword::Auto));
        }
        s.parse::<f64>()
            .map(LambdaChoice::Value)
            .map_err(|_| DemixError::InvalidParameter(format!("lambda must be a number or \"auto\", got {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub n_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub s_values: Vec<usize>,
    /// Minimum separations in units of `1/(n-1)`.
    pub delta_values: Vec<f64>,
    pub lambda_values: Vec<LambdaChoice>,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub amp_law: AmplitudeLaw,
    #[serde(default)]
    pub spike_support: SpikeSupport,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty()
            || self.k_values.is_empty()
            || self.s_values.is_empty()
            || self.delta_values.is_empty()
            || self.lambda_values.is_empty()
        {
            return Err(DemixError::InvalidParameter("grid lists must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(DemixError::InvalidParameter("trials must be at least 1".into()));
        }
        if self.n_values.iter().any(|&n| n < 2) {
            return Err(DemixError::InvalidParameter("n must be at least 2".into()));
        }
        if self.delta_values.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(DemixError::InvalidParameter("separations must be nonnegative".into()));
        }
        for l in &self.lambda_values {
            if let LambdaChoice::Value(v) = l {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(DemixError::InvalidParameter("lambda must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// Index of a grid cell in each axis: `(n, k, s, delta, lambda)`.
pub type CellIndex = [usize; 5];

/// Seed of one trial, a function of the base seed and the cell and trial
/// indices only.
pub fn stable_seed(base_seed: u64, cell: CellIndex, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    for i in cell {
        h.update((i as u64).to_le_bytes());
    }
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub exact: bool,
    pub relative_mse: Option<f64>,
    /// Wall-clock seconds; the only field that differs between reruns.
    pub runtime: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: CellIndex,
    pub n: usize,
    pub k: usize,
    pub s: usize,
    /// In units of `1/(n-1)`.
    pub delta: f64,
    pub lambda: f64,
    pub fraction: f64,
    pub mean_runtime: f64,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub grid: ExperimentGrid,
    /// Cells in lexicographic order of [`CellIndex`].
    pub cells: Vec<CellResult>,
}

fn run_trial(grid: &ExperimentGrid, n: usize, k: usize, s: usize, delta: f64, lambda: f64, seed: u64) -> TrialResult {
    let start = Instant::now();
    let outcome = (|| -> Result<(bool, f64)> {
        let mut p = InstanceParams::new(n, k, s, delta / (n - 1) as f64, seed);
        p.amp_law = grid.amp_law;
        p.spike_support = grid.spike_support;
        let inst = generate_instance(&p)?;
        let (spectrum, spikes) = match grid.method {
            Method::Admm => {
                let out = demix(&inst.y, &AdmmConfig::equality(lambda), &DecodeConfig::default())?;
                (out.spectrum, out.spikes)
            }
            Method::Greedy => {
                let out = greedy_demix(&inst.y, &GreedyConfig::default())?;
                (out.spectrum, out.spikes)
            }
        };
        let score = recovery_score(&inst, &spectrum, &spikes)?;
        Ok((score.exact_demix, score.relative_mse))
    })();
    let runtime = start.elapsed().as_secs_f64();
    match outcome {
        Ok((exact, mse)) => TrialResult {
            seed,
            exact,
            relative_mse: Some(mse),
            runtime,
            error: None,
        },
        Err(e) => TrialResult {
            seed,
            exact: false,
            relative_mse: None,
            runtime,
            error: Some(e.to_string()),
        },
    }
}

/// Run every trial of every cell. Failures are recorded per trial.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridResult> {
    grid.validate()?;
    let mut cells = Vec::new();
    for (ni, &n) in grid.n_values.iter().enumerate() {
        for (ki, &k) in grid.k_values.iter().enumerate() {
            for (si, &s) in grid.s_values.iter().enumerate() {
                for (di, &d) in grid.delta_values.iter().enumerate() {
                    for (li, &l) in grid.lambda_values.iter().enumerate() {
                        cells.push(([ni, ki, si, di, li], n, k, s, d, l.resolve(n)));
                    }
                }
            }
        }
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..grid.trials).map(move |t| (c, t)))
        .collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (idx, n, k, s, d, l) = cells[c];
            run_trial(grid, n, k, s, d, l, stable_seed(grid.base_seed, idx, t))
        })
        .collect();

    let cells = cells
        .into_iter()
        .zip(results.chunks(grid.trials))
        .map(|((index, n, k, s, delta, lambda), trials)| {
            let successes = trials.iter().filter(|t| t.exact).count();
            CellResult {
                index,
                n,
                k,
                s,
                delta,
                lambda,
                fraction: successes as f64 / trials.len() as f64,
                mean_runtime: trials.iter().map(|t| t.runtime).sum::<f64>() / trials.len() as f64,
                trials: trials.to_vec(),
            }
        })
        .collect();
    Ok(GridResult {
        grid: grid.clone(),
        cells,
    })
}

/// One success-fraction matrix for fixed `(n, s, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slab {
    pub n: usize,
    pub s: usize,
    pub lambda: f64,
    /// Position of the slab on the `(n, s, λ)` axes.
    pub index: [usize; 3],
    pub csv: String,
}

impl GridResult {
    pub fn fraction(&self, index: CellIndex) -> Option<f64> {
        self.cells.iter().find(|c| c.index == index).map(|c| c.fraction)
    }

    /// CSV matrices: header `delta` followed by the k values, one row per
    /// separation (in units of `1/(n-1)`), cells holding success fractions.
    pub fn slabs(&self) -> Vec<Slab> {
        let g = &self.grid;
        let mut out = Vec::new();
        for (ni, &n) in g.n_values.iter().enumerate() {
            for (si, &s) in g.s_values.iter().enumerate() {
                for (li, l) in g.lambda_values.iter().enumerate() {
                    let mut csv = String::from("delta");
                    for k in &g.k_values {
                        csv.push_str(&format!(",{k}"));
                    }
                    csv.push('\n');
                    for (di, d) in g.delta_values.iter().enumerate() {
                        csv.push_str(&d.to_string());
                        for ki in 0..g.k_values.len() {
                            let f = self.fraction([ni, ki, si, di, li]).unwrap_or(f64::NAN);
                            csv.push_str(&format!(",{f}"));
                        }
                        csv.push('\n');
                    }
                    out.push(Slab {
                        n,
                        s,
                        lambda: l.resolve(n),
                        index: [ni, si, li],
                        csv,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> ExperimentGrid {
        ExperimentGrid {
            n_values: vec![21],
            k_values: vec![1, 2],
            s_values: vec![1],
            delta_values: vec![3.0],
            lambda_values: vec![LambdaChoice::Keyword(LambdaKeyword::Auto)],
            trials: 1,
            base_seed: 7,
            method: Method::Greedy,
            amp_law: AmplitudeLaw::UnitPhase,
            spike_support: SpikeSupport::FixedCardinality,
        }
    }

    #[test]
    fn seeds_depend_on_every_index() {
        let base = stable_seed(1, [0, 0, 0, 0, 0], 0);
        assert_eq!(base, stable_seed(1, [0, 0, 0, 0, 0], 0));
        assert_ne!(base, stable_seed(2, [0, 0, 0, 0, 0], 0));
        for axis in 0..5 {
            let mut idx = [0; 5];
            idx[axis] = 1;
            assert_ne!(base, stable_seed(1, idx, 0));
        }
        assert_ne!(base, stable_seed(1, [0, 0, 0, 0, 0], 1));
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!("auto".parse::<LambdaChoice>().unwrap().resolve(100), 0.1);
        assert_eq!("0.25".parse::<LambdaChoice>().unwrap().resolve(100), 0.25);
        assert!("x".parse::<LambdaChoice>().is_err());
        let v: Vec<LambdaChoice> = serde_json::from_str(r#"[0.1, "auto"]"#).unwrap();
        assert_eq!(v[1], LambdaChoice::Keyword(LambdaKeyword::Auto));
    }

    #[test]
    fn empty_lists_rejected() {
        let mut g = tiny_grid();
        g.k_values.clear();
        assert!(run_grid(&g).is_err());
        let mut g = tiny_grid();
        g.trials = 0;
        assert!(run_grid(&g).is_err());
    }

    #[test]
    fn slab_csv_layout() {
        let r = run_grid(&tiny_grid()).unwrap();
        let slabs = r.slabs();
        assert_eq!(slabs.len(), 1);
        let lines: Vec<&str> = slabs[0].csv.lines().collect();
        assert_eq!(lines[0], "delta,1,2");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("3,"));
    }
}
