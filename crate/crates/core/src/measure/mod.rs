//! Empirical measures on phase space `(x, w)` in R^6 and Wasserstein-1 distances.

mod assignment;

use std::io::{Read, Write};

use nalgebra::Vector3;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng;

/// Largest size accepted by [`w1_exact`].
pub const MAX_EXACT_POINTS: usize = 2048;
const WEIGHT_TOL: f64 = 1e-12;

pub type Point = [f64; 6];

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("unsupported measure pair: {0}")]
    UnsupportedMeasure(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Vec<Point>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn uniform(points: Vec<Point>) -> Result<Self, MeasureError> {
        if points.is_empty() {
            return Err(MeasureError::InvalidMeasure("empty point set".into()));
        }
        let n = points.len();
        Ok(Self {
            points,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weighted(points: Vec<Point>, weights: Vec<f64>) -> Result<Self, MeasureError> {
        if points.is_empty() {
            return Err(MeasureError::InvalidMeasure("empty point set".into()));
        }
        if points.len() != weights.len() {
            return Err(MeasureError::InvalidMeasure(format!(
                "{} points, {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(MeasureError::InvalidMeasure(
                "negative or NaN weight".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(MeasureError::InvalidMeasure(format!(
                "weights sum to {total}"
            )));
        }
        Ok(Self { points, weights })
    }

    pub fn from_phase(x: &[Vector3<f64>], w: &[Vector3<f64>]) -> Result<Self, MeasureError> {
        if x.len() != w.len() {
            return Err(MeasureError::InvalidMeasure(
                "x and w lengths differ".into(),
            ));
        }
        Self::uniform(x.iter().zip(w).map(|(a, b)| join(a, b)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x(&self, i: usize) -> Vector3<f64> {
        let p = &self.points[i];
        Vector3::new(p[0], p[1], p[2])
    }

    pub fn w(&self, i: usize) -> Vector3<f64> {
        let p = &self.points[i];
        Vector3::new(p[3], p[4], p[5])
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= WEIGHT_TOL)
    }

    /// Same weights, every point shifted by `c`.
    pub fn translated(&self, c: &Point) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| std::array::from_fn(|k| p[k] + c[k]))
            .collect();
        Self {
            points,
            weights: self.weights.clone(),
        }
    }

    /// Same weights, every point replaced by `f(x, w)`.
    pub fn map_points<F: FnMut(Vector3<f64>, Vector3<f64>) -> (Vector3<f64>, Vector3<f64>)>(
        &self,
        mut f: F,
    ) -> Self {
        let points = (0..self.len())
            .map(|i| {
                let (x, w) = f(self.x(i), self.w(i));
                join(&x, &w)
            })
            .collect();
        Self {
            points,
            weights: self.weights.clone(),
        }
    }

    /// CSV rows `x1,x2,x3,w1,w2,w3,weight` with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MeasureError> {
        let mut out = std::io::BufWriter::new(out);
        writeln!(out, "x1,x2,x3,w1,w2,w3,weight")?;
        for (p, w) in self.points.iter().zip(&self.weights) {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p[0], p[1], p[2], p[3], p[4], p[5], w
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads 6 or 7 columns per row; a non-numeric first row is a header.
    /// Without a weight column the measure is uniform.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, MeasureError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut width = None;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = match vals {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(e) => return Err(MeasureError::InvalidMeasure(format!("row {row}: {e}"))),
            };
            if vals.len() != 6 && vals.len() != 7 {
                return Err(MeasureError::InvalidMeasure(format!(
                    "row {row}: expected 6 or 7 columns"
                )));
            }
            if *width.get_or_insert(vals.len()) != vals.len() {
                return Err(MeasureError::InvalidMeasure(format!(
                    "row {row}: inconsistent column count"
                )));
            }
            points.push(std::array::from_fn(|k| vals[k]));
            if vals.len() == 7 {
                weights.push(vals[6]);
            }
        }
        if weights.is_empty() {
            Self::uniform(points)
        } else {
            Self::weighted(points, weights)
        }
    }
}

pub fn join(x: &Vector3<f64>, w: &Vector3<f64>) -> Point {
    [x[0], x[1], x[2], w[0], w[1], w[2]]
}

fn dist(p: &Point, q: &Point) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Exact W1 between equal-size uniform measures, Euclidean cost on R^6.
pub fn w1_exact(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64, MeasureError> {
    let n = mu.len();
    if nu.len() != n {
        return Err(MeasureError::UnsupportedMeasure(format!(
            "sizes differ: {} vs {}",
            n,
            nu.len()
        )));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(MeasureError::UnsupportedMeasure(
            "non-uniform weights".into(),
        ));
    }
    if n > MAX_EXACT_POINTS {
        return Err(MeasureError::UnsupportedMeasure(format!(
            "{n} points exceeds {MAX_EXACT_POINTS}"
        )));
    }
    let mut cost = Vec::with_capacity(n * n);
    for p in &mu.points {
        cost.extend(nu.points.iter().map(|q| dist(p, q)));
    }
    let (_, total) = assignment::solve(n, &cost);
    Ok(total / n as f64)
}

/// 1D W1 between weighted samples `(value, weight)`; sorts in place.
pub fn w1_1d(a: &mut [(f64, f64)], b: &mut [(f64, f64)]) -> f64 {
    a.sort_by(|p, q| p.0.total_cmp(&q.0));
    b.sort_by(|p, q| p.0.total_cmp(&q.0));
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let (mut i, mut j) = (0, 0);
    let (mut wa, mut wb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    while i < na && j < nb {
        let d = (a[i].0 - b[j].0).abs();
        if wa <= wb {
            total += wa * d;
            wb -= wa;
            i += 1;
            if i < na {
                wa = a[i].1;
            }
        } else {
            total += wb * d;
            wa -= wb;
            j += 1;
            if j < nb {
                wb = b[j].1;
            }
        }
    }
    total
}

/// Sliced W1: mean over random unit directions of the projected 1D W1.
pub fn w1_sliced(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    n_projections: usize,
    seed: u64,
) -> f64 {
    let mut rng = rng::stream(seed, 0);
    let dirs: Vec<Point> = (0..n_projections)
        .map(|_| loop {
            let u: Point = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break u.map(|c| c / norm);
            }
        })
        .collect();
    let project = |m: &EmpiricalMeasure, u: &Point| -> Vec<(f64, f64)> {
        m.points
            .iter()
            .zip(&m.weights)
            .map(|(p, w)| (p.iter().zip(u).map(|(a, b)| a * b).sum(), *w))
            .collect()
    };
    let total: f64 = dirs
        .iter()
        .map(|u| w1_1d(&mut project(mu, u), &mut project(nu, u)))
        .sum();
    total / n_projections.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_distance() {
        let a = EmpiricalMeasure::uniform(vec![[0.0; 6]]).unwrap();
        let b = EmpiricalMeasure::uniform(vec![[3.0, 4.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        assert!((w1_exact(&a, &b).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(w1_exact(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn rejects_unsupported_pairs() {
        let a = EmpiricalMeasure::uniform(vec![[0.0; 6], [1.0; 6]]).unwrap();
        let b = EmpiricalMeasure::uniform(vec![[0.0; 6]]).unwrap();
        assert!(matches!(
            w1_exact(&a, &b),
            Err(MeasureError::UnsupportedMeasure(_))
        ));
        let c = EmpiricalMeasure::weighted(vec![[0.0; 6], [1.0; 6]], vec![0.25, 0.75]).unwrap();
        assert!(matches!(
            w1_exact(&a, &c),
            Err(MeasureError::UnsupportedMeasure(_))
        ));
    }

    #[test]
    fn weights_validated() {
        assert!(EmpiricalMeasure::weighted(vec![[0.0; 6]], vec![0.9]).is_err());
        assert!(EmpiricalMeasure::weighted(vec![[0.0; 6], [1.0; 6]], vec![1.5, -0.5]).is_err());
        assert!(EmpiricalMeasure::uniform(vec![]).is_err());
    }

    #[test]
    fn one_dimensional_weighted_transport() {
        // mass 1/2 at 0 and 1/2 at 1 against mass 1 at 0.25
        let mut a = vec![(0.0, 0.5), (1.0, 0.5)];
        let mut b = vec![(0.25, 1.0)];
        assert!((w1_1d(&mut a, &mut b) - (0.5 * 0.25 + 0.5 * 0.75)).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip() {
        let m = EmpiricalMeasure::weighted(
            vec![[0.1, -2.0, 3.5, 0.0, 1e-17, 7.0], [1.0; 6]],
            vec![0.3, 0.7],
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(EmpiricalMeasure::read_csv(buf.as_slice()).unwrap(), m);
        let plain = "0,0,0,0,0,0\n1,1,1,1,1,1\n";
        let u = EmpiricalMeasure::read_csv(plain.as_bytes()).unwrap();
        assert!(u.is_uniform() && u.len() == 2);
    }
}
