//! On-disk formats shared by the scenario engine and the command line.
//!
//! Node ids in files are one-based; paths are lists of node ids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bridge::{MarkovPrior, PathPrior};
use crate::error::{Error, Result};
use crate::imitation::{edge_usage, MarkovTarget, TransportPlan};
use crate::network::PathSpace;

/// Writes through a temporary sibling file and renames it into place, so a
/// failed run never leaves a partial file behind.
pub fn atomic_write(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A node distribution stored as a JSON array.
pub fn read_distribution(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn to_zero_based(path: &[usize], n: usize) -> Result<Vec<usize>> {
    path.iter()
        .map(|&id| {
            if id == 0 || id > n {
                Err(Error::Validation(format!("node id {id} outside 1..={n}")))
            } else {
                Ok(id - 1)
            }
        })
        .collect()
}

fn to_one_based(path: &[usize]) -> Vec<usize> {
    path.iter().map(|i| i + 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMass {
    pub path: Vec<usize>,
    pub p: f64,
}

/// A distribution over explicit paths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathMassFile {
    pub paths: Vec<PathMass>,
}

impl PathMassFile {
    pub fn from_vector(space: &PathSpace, values: &[f64]) -> Self {
        let paths = space
            .paths()
            .iter()
            .zip(values)
            .filter(|(_, &p)| p > 0.0)
            .map(|(path, &p)| PathMass { path: to_one_based(path), p })
            .collect();
        PathMassFile { paths }
    }

    /// Places the listed masses on `space`; a listed path outside it is an error.
    pub fn to_vector(&self, space: &PathSpace) -> Result<Vec<f64>> {
        let mut out = vec![0.0; space.len()];
        for entry in &self.paths {
            let path = to_zero_based(&entry.path, space.node_count())?;
            let k = space.index_of(&path).ok_or_else(|| {
                Error::Validation(format!("path {:?} is not an admissible path of the problem", entry.path))
            })?;
            out[k] += entry.p;
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathWeight {
    pub path: Vec<usize>,
    pub w: f64,
}

/// A bridge prior: transition-matrix form or explicit path weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PriorFile {
    Markov {
        mu0: Vec<f64>,
        m: Vec<Vec<f64>>,
        #[serde(rename = "T")]
        horizon: usize,
    },
    Path {
        n: usize,
        #[serde(rename = "T")]
        horizon: usize,
        paths: Vec<PathWeight>,
    },
}

pub enum LoadedPrior {
    Markov { prior: MarkovPrior, horizon: usize },
    Path(PathPrior),
}

fn dense(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::ShapeMismatch("matrix rows must all have one entry per node".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn dense_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PriorFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn build(&self) -> Result<LoadedPrior> {
        match self {
            PriorFile::Markov { mu0, m, horizon } => Ok(LoadedPrior::Markov {
                prior: MarkovPrior::new(DVector::from_vec(mu0.clone()), dense(m)?)?,
                horizon: *horizon,
            }),
            PriorFile::Path { n, horizon, paths } => {
                let list = paths
                    .iter()
                    .map(|p| to_zero_based(&p.path, *n))
                    .collect::<Result<Vec<_>>>()?;
                let weights: Vec<f64> = paths.iter().map(|p| p.w).collect();
                let space = Arc::new(PathSpace::from_paths(*n, *horizon, list)?);
                Ok(LoadedPrior::Path(PathPrior::new(space, &weights)?))
            }
        }
    }

    pub fn from_path_prior(prior: &PathPrior) -> Self {
        let space = prior.space();
        PriorFile::Path {
            n: space.node_count(),
            horizon: space.horizon(),
            paths: space
                .paths()
                .iter()
                .zip(prior.weights())
                .map(|(p, w)| PathWeight { path: to_one_based(p), w })
                .collect(),
        }
    }
}

/// A Markov imitation target; `nu_q0` defaults to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMatrixFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_q0: Option<Vec<f64>>,
    pub r_q: Vec<Vec<f64>>,
}

impl TargetMatrixFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn build(&self) -> Result<MarkovTarget> {
        let r_q = dense(&self.r_q)?;
        let n = r_q.nrows();
        let nu = self.nu_q0.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
        MarkovTarget::new(DVector::from_vec(nu), r_q)
    }
}

fn path_label(path: &[usize]) -> String {
    path.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("-")
}

fn parse_label(label: &str) -> Result<Vec<usize>> {
    label
        .split('-')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&id| id > 0)
                .map(|id| id - 1)
                .ok_or_else(|| Error::Validation(format!("bad path label {label:?}")))
        })
        .collect()
}

/// Plain-text plan: objective terms, the paths with mass at least
/// `min_probability` (with their costs), and per-step edge usage.
pub fn format_plan(plan: &TransportPlan, costs: &[f64], min_probability: f64) -> String {
    let mut out = String::new();
    let o = &plan.objective;
    out.push_str("[objective]\n");
    let _ = writeln!(out, "expected_cost,{:e}", o.expected_cost);
    let _ = writeln!(out, "kl_to_q,{:e}", o.kl_to_q);
    let _ = writeln!(out, "alpha,{:e}", o.alpha);
    let _ = writeln!(out, "total,{:e}", o.total);
    let _ = writeln!(out, "route,{:?}", plan.route);
    let _ = writeln!(out, "iterations,{}", plan.iterations);
    out.push_str("[paths]\npath,probability,cost\n");
    for (k, path) in plan.space.paths().iter().enumerate() {
        if plan.path_law[k] >= min_probability && plan.path_law[k] > 0.0 {
            let _ = writeln!(out, "{},{:e},{:e}", path_label(path), plan.path_law[k], costs[k]);
        }
    }
    out.push_str("[usage]\nt,from,to,mass\n");
    for ((t, i, j), mass) in edge_usage(plan) {
        let _ = writeln!(out, "{t},{},{},{mass:e}", i + 1, j + 1);
    }
    out
}

/// The `[paths]` and `[objective]` sections of a plan file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPlan {
    pub paths: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
    pub costs: Vec<f64>,
    pub alpha: Option<f64>,
}

pub fn parse_plan(text: &str) -> Result<ParsedPlan> {
    let mut section = "";
    let mut plan = ParsedPlan { paths: Vec::new(), probabilities: Vec::new(), costs: Vec::new(), alpha: None };
    let num = |s: &str| {
        s.trim().parse::<f64>().map_err(|_| Error::Validation(format!("bad number {s:?} in plan file")))
    };
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if line.starts_with('[') {
            section = line;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match section {
            "[objective]" if fields[0] == "alpha" && fields.len() == 2 => plan.alpha = Some(num(fields[1])?),
            "[paths]" if fields[0] != "path" => {
                if fields.len() != 3 {
                    return Err(Error::Validation(format!("bad path line {line:?}")));
                }
                plan.paths.push(parse_label(fields[0])?);
                plan.probabilities.push(num(fields[1])?);
                plan.costs.push(num(fields[2])?);
            }
            _ => {}
        }
    }
    if plan.paths.is_empty() {
        return Err(Error::Validation("plan file lists no paths".into()));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        assert_eq!(parse_label(&path_label(&[0, 4, 11])).unwrap(), vec![0, 4, 11]);
        assert!(parse_label("1-0-2").is_err());
    }

    #[test]
    fn path_mass_rejects_unknown_paths() {
        let space = PathSpace::from_paths(2, 1, vec![vec![0, 1]]).unwrap();
        let file = PathMassFile { paths: vec![PathMass { path: vec![2, 1], p: 1.0 }] };
        assert!(file.to_vector(&space).is_err());
    }
}
