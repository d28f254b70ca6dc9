//! Harvest trace generators and the trace CSV format.
//!
//! Every generator is calibrated so node `i` harvests `d_i * k / m` energy
//! per slot on average, which makes its realised density match `d_i`.
//! Each node draws from its own ChaCha stream keyed by the node id, so
//! adding nodes never perturbs existing rows.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HarvestTrace, NetworkConfig};

/// Per-node densities `d_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub densities: Vec<f64>,
}

impl DensityProfile {
    pub fn new(densities: Vec<f64>) -> Result<Self> {
        if let Some(d) = densities.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::Parameter(format!(
                "density must be nonnegative, got {d}"
            )));
        }
        Ok(DensityProfile { densities })
    }

    pub fn uniform(nodes: usize, density: f64) -> Result<Self> {
        Self::new(vec![density; nodes])
    }

    /// Network density: mean of the per-node densities.
    pub fn network_density(&self) -> f64 {
        if self.densities.is_empty() {
            return 0.0;
        }
        self.densities.iter().sum::<f64>() / self.densities.len() as f64
    }

    /// Per-slot mean harvest `d_i * k / m`.
    pub fn rates(&self, cfg: &NetworkConfig) -> Vec<f64> {
        let scale = cfg.channels as f64 / cfg.nodes as f64;
        self.densities.iter().map(|d| d * scale).collect()
    }

    fn check(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.densities.len() != cfg.nodes {
            return Err(Error::Config(format!(
                "profile has {} densities for {} nodes",
                self.densities.len(),
                cfg.nodes
            )));
        }
        Ok(())
    }
}

/// Two-level profile: the first `count_high` nodes at `d_high`, the rest at `d_low`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelProfile {
    #[serde(default)]
    pub count_high: usize,
    #[serde(default)]
    pub d_high: f64,
    pub d_low: f64,
}

pub fn make_profile(spec: TwoLevelProfile, nodes: usize) -> Result<DensityProfile> {
    if spec.count_high > nodes {
        return Err(Error::Parameter(format!(
            "count_high {} exceeds node count {nodes}",
            spec.count_high
        )));
    }
    let mut d = vec![spec.d_low; nodes];
    d[..spec.count_high].fill(spec.d_high);
    DensityProfile::new(d)
}

/// How Markov chain states turn into energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovScaling {
    /// `E = d_i * (k/m) * M_i(t)`, mean-calibrated.
    #[default]
    Normalized,
    /// `E = d_i * M_i(t)`; exceeds scheduling capacity for most profiles.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovHarvestParams {
    pub levels: Vec<f64>,
    /// Row-stochastic transition matrix over `levels`.
    pub transition: Vec<Vec<f64>>,
    #[serde(default)]
    pub scaling: MarkovScaling,
}

impl Default for MarkovHarvestParams {
    /// Levels `{0, 1, 2}`, stay with probability 0.9, move to either
    /// other level with 0.05.
    fn default() -> Self {
        MarkovHarvestParams {
            levels: vec![0.0, 1.0, 2.0],
            transition: vec![
                vec![0.9, 0.05, 0.05],
                vec![0.05, 0.9, 0.05],
                vec![0.05, 0.05, 0.9],
            ],
            scaling: MarkovScaling::Normalized,
        }
    }
}

impl MarkovHarvestParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        if n == 0 {
            return Err(Error::Parameter(
                "markov chain needs at least one level".into(),
            ));
        }
        if self.levels.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(Error::Parameter("markov levels must be nonnegative".into()));
        }
        if self.transition.len() != n || self.transition.iter().any(|r| r.len() != n) {
            return Err(Error::Parameter(format!(
                "transition matrix must be {n}x{n}"
            )));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|p| p.is_nan() || *p < 0.0) {
                return Err(Error::Parameter(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(())
    }

    /// Stationary distribution by power iteration from uniform.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.levels.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for (i, row) in self.transition.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }

    /// Stationary mean level `E[M]`.
    pub fn mean_level(&self) -> f64 {
        self.stationary()
            .iter()
            .zip(&self.levels)
            .map(|(p, l)| p * l)
            .sum()
    }
}

fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Constant-rate harvest: every slot node `i` gets exactly `d_i * k / m`.
pub fn gen_deterministic(cfg: &NetworkConfig, profile: &DensityProfile) -> Result<HarvestTrace> {
    profile.check(cfg)?;
    let grid = profile
        .rates(cfg)
        .into_iter()
        .map(|r| vec![r; cfg.horizon])
        .collect();
    HarvestTrace::new(grid, vec![0.0; cfg.nodes])
}

/// Independent Poisson harvests with mean `d_i * k / m` per slot.
pub fn gen_poisson(
    cfg: &NetworkConfig,
    profile: &DensityProfile,
    seed: u64,
) -> Result<HarvestTrace> {
    profile.check(cfg)?;
    let grid = profile
        .rates(cfg)
        .into_iter()
        .enumerate()
        .map(|(i, rate)| {
            if rate == 0.0 {
                return Ok(vec![0.0; cfg.horizon]);
            }
            let dist = Poisson::new(rate)
                .map_err(|e| Error::Parameter(format!("poisson rate {rate}: {e}")))?;
            let mut rng = node_rng(seed, i);
            Ok((0..cfg.horizon).map(|_| dist.sample(&mut rng)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    HarvestTrace::new(grid, vec![0.0; cfg.nodes])
}

/// Simulate one chain of `len` states starting from `start`.
pub fn markov_states(
    params: &MarkovHarvestParams,
    start: usize,
    len: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let mut s = start;
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(s);
        s = sample_index(&params.transition[s], rng.random::<f64>());
    }
    out
}

/// Markov-modulated harvests; each chain starts from the stationary law.
pub fn gen_markov(
    cfg: &NetworkConfig,
    profile: &DensityProfile,
    params: &MarkovHarvestParams,
    seed: u64,
) -> Result<HarvestTrace> {
    profile.check(cfg)?;
    params.validate()?;
    let pi = params.stationary();
    let scale = match params.scaling {
        MarkovScaling::Normalized => cfg.channels as f64 / cfg.nodes as f64,
        MarkovScaling::Literal => 1.0,
    };
    let grid = profile
        .densities
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = node_rng(seed, i);
            let start = sample_index(&pi, rng.random::<f64>());
            markov_states(params, start, cfg.horizon, &mut rng)
                .into_iter()
                .map(|s| d * scale * params.levels[s])
                .collect()
        })
        .collect();
    HarvestTrace::new(grid, vec![0.0; cfg.nodes])
}

/// Write a trace as CSV: `node_id[,initial_battery],1,2,...,N`.
///
/// The `initial_battery` column is only written when some node starts with
/// energy. Values use Rust's shortest round-trip float formatting.
pub fn write_trace_csv<W: Write>(trace: &HarvestTrace, mut w: W) -> std::io::Result<()> {
    let with_b0 = trace.initial_battery.iter().any(|b| *b != 0.0);
    write!(w, "node_id")?;
    if with_b0 {
        write!(w, ",initial_battery")?;
    }
    for t in 1..=trace.horizon() {
        write!(w, ",{t}")?;
    }
    writeln!(w)?;
    for (i, row) in trace.grid.iter().enumerate() {
        write!(w, "{i}")?;
        if with_b0 {
            write!(w, ",{}", trace.initial_battery[i])?;
        }
        for e in row {
            write!(w, ",{e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_trace_csv<R: BufRead>(r: R) -> Result<HarvestTrace> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::TraceFormat {
        line: 1,
        reason: "empty input".into(),
    })?;
    let header = header?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"node_id") {
        return Err(Error::TraceFormat {
            line: 1,
            reason: "first column must be node_id".into(),
        });
    }
    let with_b0 = cols.get(1) == Some(&"initial_battery");
    let first_slot = if with_b0 { 2 } else { 1 };
    for (j, c) in cols[first_slot..].iter().enumerate() {
        if c.parse::<usize>().ok() != Some(j + 1) {
            return Err(Error::TraceFormat {
                line: 1,
                reason: format!("expected slot column {}, found {c:?}", j + 1),
            });
        }
    }
    let horizon = cols.len() - first_slot;

    let mut grid = Vec::new();
    let mut b0 = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::TraceFormat {
                line: lineno,
                reason: format!("{} fields, header has {}", fields.len(), cols.len()),
            });
        }
        let bad = |reason: String| Error::TraceFormat {
            line: lineno,
            reason,
        };
        let id: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("bad node id {:?}", fields[0])))?;
        if id != grid.len() {
            return Err(bad(format!("node ids must be 0,1,2,..; got {id}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| bad(format!("bad number {s:?}")))
        };
        b0.push(if with_b0 { num(fields[1])? } else { 0.0 });
        grid.push(
            fields[first_slot..]
                .iter()
                .map(|s| num(s))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if grid.is_empty() || horizon == 0 {
        return Err(Error::TraceFormat {
            line: 1,
            reason: "trace has no nodes or no slots".into(),
        });
    }
    HarvestTrace::new(grid, b0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize, k: usize, n: usize) -> NetworkConfig {
        NetworkConfig::new(m, k, n).unwrap()
    }

    #[test]
    fn deterministic_rates() {
        let t =
            gen_deterministic(&cfg(2, 1, 4), &DensityProfile::uniform(2, 1.0).unwrap()).unwrap();
        assert!(t.grid.iter().flatten().all(|e| *e == 0.5));

        let c = cfg(4, 2, 10);
        let t = gen_deterministic(&c, &DensityProfile::uniform(4, 0.5).unwrap()).unwrap();
        assert!(t.grid.iter().flatten().all(|e| *e == 0.25));
        assert_eq!(t.total_floors().iter().sum::<u64>(), 8);
    }

    #[test]
    fn high_density_profile_rate() {
        let c = cfg(100, 10, 5);
        let p = make_profile(
            TwoLevelProfile {
                count_high: 25,
                d_high: 3.0,
                d_low: 0.3,
            },
            100,
        )
        .unwrap();
        let t = gen_deterministic(&c, &p).unwrap();
        assert!((t.grid[0][0] - 0.3).abs() < 1e-15);
        assert!((t.grid[99][0] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn profiles() {
        let hi = make_profile(
            TwoLevelProfile {
                count_high: 25,
                d_high: 3.0,
                d_low: 0.3,
            },
            100,
        )
        .unwrap();
        assert!((hi.network_density() - 0.975).abs() < 1e-12);
        let lo = make_profile(
            TwoLevelProfile {
                count_high: 5,
                d_high: 2.1,
                d_low: 0.1,
            },
            100,
        )
        .unwrap();
        assert!((lo.network_density() - 0.2).abs() < 1e-12);
        let u = make_profile(
            TwoLevelProfile {
                count_high: 0,
                d_high: 0.0,
                d_low: 1.0,
            },
            10,
        )
        .unwrap();
        assert_eq!(u.network_density(), 1.0);
        assert!(make_profile(
            TwoLevelProfile {
                count_high: 11,
                d_high: 1.0,
                d_low: 1.0
            },
            10
        )
        .is_err());
    }

    #[test]
    fn poisson_zero_density_row_is_zero() {
        let c = cfg(3, 1, 50);
        let p = DensityProfile::new(vec![0.0, 1.0, 2.0]).unwrap();
        let t = gen_poisson(&c, &p, 11).unwrap();
        assert!(t.grid[0].iter().all(|e| *e == 0.0));
        assert!(t
            .grid
            .iter()
            .flatten()
            .all(|e| *e >= 0.0 && e.fract() == 0.0));
    }

    #[test]
    fn poisson_is_seed_deterministic_and_row_stable() {
        let p3 = DensityProfile::uniform(3, 0.7).unwrap();
        let p5 = DensityProfile::uniform(5, 0.7).unwrap();
        let a = gen_poisson(&cfg(3, 3, 200), &p3, 5).unwrap();
        let b = gen_poisson(&cfg(3, 3, 200), &p3, 5).unwrap();
        assert_eq!(a, b);
        // k/m held fixed so rates match; extra nodes leave earlier rows alone
        let c = gen_poisson(&cfg(5, 5, 200), &p5, 5).unwrap();
        assert_eq!(a.grid[..], c.grid[..3]);
        assert_ne!(a, gen_poisson(&cfg(3, 3, 200), &p3, 6).unwrap());
    }

    #[test]
    fn markov_identity_chain_stuck_at_zero() {
        let params = MarkovHarvestParams {
            levels: vec![0.0, 1.0, 2.0],
            transition: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            scaling: MarkovScaling::Normalized,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(markov_states(&params, 0, 100, &mut rng)
            .iter()
            .all(|s| *s == 0));
    }

    #[test]
    fn markov_rejects_non_stochastic() {
        let mut params = MarkovHarvestParams::default();
        params.transition[1][1] = 0.8;
        assert!(matches!(params.validate(), Err(Error::Parameter(_))));
        let c = cfg(2, 1, 10);
        let p = DensityProfile::uniform(2, 0.5).unwrap();
        assert!(gen_markov(&c, &p, &params, 0).is_err());
    }

    #[test]
    fn markov_default_stationary_is_uniform() {
        let pi = MarkovHarvestParams::default().stationary();
        for p in pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((MarkovHarvestParams::default().mean_level() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn literal_markov_scaling_drops_k_over_m() {
        let c = cfg(10, 1, 300);
        let p = DensityProfile::uniform(10, 1.0).unwrap();
        let norm = gen_markov(&c, &p, &MarkovHarvestParams::default(), 3).unwrap();
        let lit = gen_markov(
            &c,
            &p,
            &MarkovHarvestParams {
                scaling: MarkovScaling::Literal,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        for (a, b) in norm.grid.iter().flatten().zip(lit.grid.iter().flatten()) {
            assert!((a * 10.0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip_keeps_initial_battery() {
        let t = HarvestTrace::new(vec![vec![0.1, 2.0], vec![0.0, 0.3]], vec![1.5, 0.0]).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node_id,initial_battery,1,2\n0,1.5,0.1,2\n"));
        assert_eq!(read_trace_csv(&buf[..]).unwrap(), t);
    }

    #[test]
    fn csv_rejects_garbage() {
        assert!(read_trace_csv("node,1,2\n0,1,1\n".as_bytes()).is_err());
        assert!(read_trace_csv("node_id,1,2\n0,1\n".as_bytes()).is_err());
        assert!(read_trace_csv("node_id,1,2\n0,1,x\n".as_bytes()).is_err());
        assert!(read_trace_csv("node_id,1,2\n0,1,-1\n".as_bytes()).is_err());
        assert!(read_trace_csv("node_id,1,3\n0,1,1\n".as_bytes()).is_err());
    }
}
