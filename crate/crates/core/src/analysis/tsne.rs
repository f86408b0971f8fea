use super::{AnalysisError, Result};
use crate::numerics::{Prng, Tensor};

/// Largest input the exact O(n²) implementation accepts.
pub const MAX_POINTS: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    /// Iterations with exaggerated affinities and the lower momentum.
    pub early_iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            exaggeration: 12.0,
            early_iterations: 250,
            seed: 0,
        }
    }
}

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;

fn squared_distances(x: &Tensor) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (x.row(i), x.row(j));
            let s: f64 = (0..d).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

/// Conditional distribution and its entropy (nats) for precision `beta`.
fn conditional(dist: &[f64], skip: usize, beta: f64, row: &mut [f64]) -> f64 {
    let floor = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (j, p) in row.iter_mut().enumerate() {
        *p = if j == skip { 0.0 } else { (-beta * (dist[j] - floor)).exp() };
        total += *p;
    }
    let mut entropy = 0.0;
    for p in row.iter_mut() {
        *p /= total;
        if *p > 0.0 {
            entropy -= *p * p.ln();
        }
    }
    entropy
}

/// Row-stochastic conditional affinities `p_{j|i}` whose entropies match
/// `ln(perplexity)`.
pub fn conditional_affinities(x: &Tensor, perplexity: f64) -> Result<Tensor> {
    let n = x.rows();
    if n < 2 || !(perplexity >= 1.0 && perplexity <= (n - 1) as f64) {
        return Err(AnalysisError::InvalidConfig(format!(
            "perplexity {perplexity} outside [1, {}]",
            n.saturating_sub(1)
        )));
    }
    let dist = squared_distances(x);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let di = &dist[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        // entropy falls from ln(n−1) at beta = 0 as beta grows
        let mut hi = 1.0;
        let mut h = conditional(di, i, hi, row);
        while h > target + ENTROPY_TOL {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(AnalysisError::PerplexityInfeasible { perplexity, point: i });
            }
            h = conditional(di, i, hi, row);
        }
        let mut lo = 0.0;
        let mut beta = hi;
        for _ in 0..MAX_BISECTIONS {
            if (h - target).abs() <= ENTROPY_TOL {
                break;
            }
            if h > target {
                lo = beta;
            } else {
                hi = beta;
            }
            beta = 0.5 * (lo + hi);
            h = conditional(di, i, beta, row);
        }
        if (h - target).abs() > ENTROPY_TOL {
            return Err(AnalysisError::PerplexityInfeasible { perplexity, point: i });
        }
    }
    Ok(Tensor::matrix(n, n, p))
}

/// Embedding plus the KL divergence after every iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub points: Tensor,
    pub kl: Vec<f64>,
}

/// Exact t-SNE to two dimensions.
pub fn tsne_embed(x: &Tensor, config: &TsneConfig) -> Result<TsneResult> {
    let n = x.rows();
    if n > MAX_POINTS {
        return Err(AnalysisError::TooManyPoints { n, max: MAX_POINTS });
    }
    if config.iterations < config.early_iterations {
        return Err(AnalysisError::InvalidConfig(format!(
            "iterations {} below the {} early-exaggeration iterations",
            config.iterations, config.early_iterations
        )));
    }
    let cond = conditional_affinities(x, config.perplexity)?;
    let c = cond.data();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((c[i * n + j] + c[j * n + i]) / (2.0 * n as f64)).max(1e-300);
        }
    }
    let mut rng = Prng::new(config.seed);
    let mut y: Vec<f64> = (0..2 * n).map(|_| 1e-4 * rng.gaussian()).collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    let mut num = vec![0.0; n * n];
    let mut kl = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let early = it < config.early_iterations;
        let exaggeration = if early { config.exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        grad.fill(0.0);
        let mut divergence = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j] / z;
                let pij = p[i * n + j];
                divergence += pij * (pij / q.max(1e-300)).ln();
                let m = 4.0 * (exaggeration * pij - q) * num[i * n + j];
                grad[2 * i] += m * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += m * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        kl.push(divergence);
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - config.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        for axis in 0..2 {
            let mean = (0..n).map(|i| y[2 * i + axis]).sum::<f64>() / n as f64;
            for i in 0..n {
                y[2 * i + axis] -= mean;
            }
        }
    }
    Ok(TsneResult {
        points: Tensor::matrix(n, 2, y),
        kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(n: usize, d: usize, seed: u64) -> Tensor {
        Tensor::randn(&[n, d], 1.0, &mut Prng::new(seed))
    }

    #[test]
    fn affinity_rows_match_perplexity() {
        let x = random(60, 5, 1);
        let p = conditional_affinities(&x, 10.0).unwrap();
        for i in 0..60 {
            let row = p.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            assert_eq!(row[i], 0.0);
            let h: f64 = row.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
            assert!((h - 10f64.ln()).abs() <= 1e-3);
        }
    }

    #[test]
    fn invalid_perplexity() {
        let x = random(5, 2, 1);
        assert!(matches!(conditional_affinities(&x, 5.0), Err(AnalysisError::InvalidConfig(_))));
        // three identical neighbours fix the entropy at ln 3 for every beta
        let same = Tensor::matrix(4, 1, vec![0.0; 4]);
        assert!(matches!(
            conditional_affinities(&same, 2.0),
            Err(AnalysisError::PerplexityInfeasible { .. })
        ));
    }

    #[test]
    fn equidistant_triangle_stays_symmetric() {
        let s = 3f64.sqrt() / 2.0;
        let x = Tensor::matrix(3, 2, vec![0.0, 0.0, 1.0, 0.0, 0.5, s]);
        let cfg = TsneConfig {
            perplexity: 2.0,
            ..Default::default()
        };
        let y = tsne_embed(&x, &cfg).unwrap().points;
        let d = |i: usize, j: usize| {
            let (a, b) = (y.row(i), y.row(j));
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        let ds = [d(0, 1), d(0, 2), d(1, 2)];
        let (lo, hi) = (ds.iter().cloned().fold(f64::INFINITY, f64::min), ds.iter().cloned().fold(0.0, f64::max));
        assert!(hi / lo <= 1.05, "{ds:?}");
    }

    #[test]
    fn kl_descends_after_exaggeration() {
        let x = random(80, 6, 3);
        let cfg = TsneConfig {
            perplexity: 15.0,
            iterations: 600,
            seed: 4,
            ..Default::default()
        };
        let run = tsne_embed(&x, &cfg).unwrap();
        let late = &run.kl[250..];
        let steps = late.len() - 1;
        let down = late.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(down as f64 >= 0.95 * steps as f64, "{down}/{steps}");
        assert_eq!(run, tsne_embed(&x, &cfg).unwrap());
    }
}
