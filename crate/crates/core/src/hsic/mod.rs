//! HSIC-based sensitivity ranking of input variables against time-dependent outputs.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TimeGrid;
use crate::prob::{rng_from_seed, stats};

/// Dense Gram matrices above this size are refused.
pub const MAX_SAMPLE: usize = 5000;

/// Gaussian kernel Gram matrix `exp(-(x_p - x_q)^2 / (2 bw^2))`.
pub fn gram_matrix(sample: &[f64], bandwidth: f64) -> Result<DMatrix<f64>> {
    let g = Gram::new(sample, bandwidth)?;
    let n = g.n;
    Ok(DMatrix::from_fn(n, n, |p, q| g.k[p * n + q]))
}

/// Row-major symmetric Gram matrix, optionally double-centered.
struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn new(sample: &[f64], bandwidth: f64) -> Result<Self> {
        let n = sample.len();
        if n < 2 {
            return Err(Error::Shape(format!("Gram matrix needs n >= 2, got {n}")));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::DegenerateSample(format!("kernel bandwidth must be positive, got {bandwidth}")));
        }
        let scale = -0.5 / (bandwidth * bandwidth);
        let mut k = vec![0.0; n * n];
        for p in 0..n {
            k[p * n + p] = 1.0;
            for q in p + 1..n {
                let d = sample[p] - sample[q];
                let v = (scale * d * d).exp();
                k[p * n + q] = v;
                k[q * n + p] = v;
            }
        }
        Ok(Self { n, k })
    }

    /// Bandwidth set to the sample standard deviation.
    fn auto(sample: &[f64]) -> Result<Self> {
        let sd = stats::std_dev(sample);
        if !(sd > 0.0) {
            return Err(Error::DegenerateSample("constant sample has zero bandwidth".into()));
        }
        Self::new(sample, sd)
    }

    /// H K H with H = I - 11^T / n.
    fn centered(mut self) -> Self {
        let n = self.n;
        let nf = n as f64;
        let row: Vec<f64> = (0..n).map(|p| self.k[p * n..(p + 1) * n].iter().sum::<f64>() / nf).collect();
        let grand = row.iter().sum::<f64>() / nf;
        for p in 0..n {
            for q in 0..n {
                // symmetric: column means equal row means
                self.k[p * n + q] += grand - row[p] - row[q];
            }
        }
        self
    }

    /// `Tr(L H M H) / n^2` given `self` already centered.
    fn hsic_with(&self, other: &Gram) -> f64 {
        let s: f64 = self.k.iter().zip(&other.k).map(|(a, b)| a * b).sum();
        (s / (self.n * self.n) as f64).max(0.0)
    }
}

fn check_pair(x: &[f64], z: &[f64]) -> Result<()> {
    if x.len() != z.len() {
        return Err(Error::Shape(format!("samples of lengths {} and {}", x.len(), z.len())));
    }
    if x.len() < 4 {
        return Err(Error::Shape(format!("HSIC needs n >= 4, got {}", x.len())));
    }
    if x.len() > MAX_SAMPLE {
        return Err(Error::Sizing(format!("n = {} exceeds the dense limit {MAX_SAMPLE}", x.len())));
    }
    Ok(())
}

/// Biased (V-statistic) HSIC estimate with Gaussian kernels at the empirical SD.
pub fn hsic_v_statistic(x: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(x, z)?;
    let lx = Gram::auto(x)?.centered();
    let mz = Gram::auto(z)?;
    Ok(lx.hsic_with(&mz))
}

/// Normalized index `HSIC(x,z) / sqrt(HSIC(x,x) HSIC(z,z))`, in [0, 1].
pub fn r2_hsic(x: &[f64], z: &[f64]) -> Result<f64> {
    check_pair(x, z)?;
    let lx = Gram::auto(x)?;
    let lz = Gram::auto(z)?;
    let cx = lx.centered();
    let cz = lz.centered();
    r2_from_centered(&cx, &cz)
}

fn r2_from_centered(cx: &Gram, cz: &Gram) -> Result<f64> {
    let hxz = cx.hsic_with(cz);
    let hxx = cx.hsic_with(cx);
    let hzz = cz.hsic_with(cz);
    let denom = (hxx * hzz).sqrt();
    if !(denom > 0.0) {
        return Err(Error::DegenerateSample("HSIC normalization is zero".into()));
    }
    Ok((hxz / denom).clamp(0.0, 1.0))
}

/// R2-HSIC of `x` against `count` random permutations of `z`; the null
/// distribution of the index under independence.
pub fn permutation_null(x: &[f64], z: &[f64], count: usize, seed: u64) -> Result<Vec<f64>> {
    check_pair(x, z)?;
    let cx = Gram::auto(x)?.centered();
    let mz = Gram::auto(z)?;
    let n = mz.n;
    let hxx = cx.hsic_with(&cx);
    let hzz = mz.clone_centered().hsic_with(&mz);
    let denom = (hxx * hzz).sqrt();
    if !(denom > 0.0) {
        return Err(Error::DegenerateSample("HSIC normalization is zero".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        perm.shuffle(&mut rng);
        let mut s = 0.0;
        for p in 0..n {
            let row = &cx.k[p * n..(p + 1) * n];
            let zr = &mz.k[perm[p] * n..(perm[p] + 1) * n];
            s += row.iter().zip(&perm).map(|(a, &q)| a * zr[q]).sum::<f64>();
        }
        let h = (s / (n * n) as f64).max(0.0);
        out.push((h / denom).clamp(0.0, 1.0));
    }
    Ok(out)
}

impl Gram {
    fn clone_centered(&self) -> Gram {
        Gram { n: self.n, k: self.k.clone() }.centered()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsicReport {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    /// d x |times| indices.
    pub r2: DMatrix<f64>,
    pub averaged: Vec<f64>,
    pub selected_index: usize,
}

impl HsicReport {
    pub fn selected_name(&self) -> &str {
        &self.names[self.selected_index]
    }

    /// Variables sorted by decreasing averaged index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.averaged.len()).collect();
        idx.sort_by(|&a, &b| self.averaged[b].total_cmp(&self.averaged[a]).then(a.cmp(&b)));
        idx
    }

    /// `variable,t_1,...,t_L,averaged,selected`, one row per variable.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variable");
        for t in &self.times {
            s.push_str(&format!(",{t}"));
        }
        s.push_str(",averaged,selected\n");
        for (j, name) in self.names.iter().enumerate() {
            s.push_str(name);
            for l in 0..self.times.len() {
                s.push_str(&format!(",{}", self.r2[(j, l)]));
            }
            s.push_str(&format!(",{},{}\n", self.averaged[j], u8::from(j == self.selected_index)));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Ranks DoE inputs by R2-HSIC against outputs interpolated to `data_times`,
/// averaged over those times, and selects the most influential variable not in
/// `exclude`. Ties go to the lowest index.
pub fn rank_and_select(
    names: &[String],
    doe_inputs: &DMatrix<f64>,
    doe_outputs: &DMatrix<f64>,
    sim_grid: &TimeGrid,
    data_times: &[f64],
    exclude: &BTreeSet<usize>,
) -> Result<HsicReport> {
    let (n, d) = doe_inputs.shape();
    if names.len() != d {
        return Err(Error::Shape(format!("{} names for {d} variables", names.len())));
    }
    if doe_outputs.shape() != (sim_grid.len(), n) {
        return Err(Error::Shape(format!(
            "outputs are {:?}, expected {:?}",
            doe_outputs.shape(),
            (sim_grid.len(), n)
        )));
    }
    if n < 10 {
        return Err(Error::Shape(format!("ranking needs at least 10 DoE runs, got {n}")));
    }
    if n > MAX_SAMPLE {
        return Err(Error::Sizing(format!("n = {n} exceeds the dense limit {MAX_SAMPLE}")));
    }
    if data_times.is_empty() {
        return Err(Error::Config("no data times to rank against".into()));
    }
    if (0..d).all(|j| exclude.contains(&j)) {
        return Err(Error::ExhaustedVariables);
    }

    let inputs: Vec<Gram> = (0..d)
        .into_par_iter()
        .map(|j| {
            let col: Vec<f64> = doe_inputs.column(j).iter().copied().collect();
            Gram::auto(&col)
                .map(Gram::centered)
                .map_err(|e| Error::DegenerateSample(format!("input {}: {e}", names[j])))
        })
        .collect::<Result<_>>()?;
    let self_terms: Vec<f64> = inputs.iter().map(|g| g.hsic_with(g)).collect();

    let locs = data_times
        .iter()
        .map(|&t| sim_grid.locate(t))
        .collect::<Result<Vec<_>>>()?;

    let columns: Vec<Vec<f64>> = locs
        .par_iter()
        .enumerate()
        .map(|(l, &(i, frac))| {
            let z: Vec<f64> = (0..n)
                .map(|r| crate::models::grid::lerp(doe_outputs[(i, r)], doe_outputs[(i + 1, r)], frac))
                .collect();
            let gz = match Gram::auto(&z) {
                Ok(g) => g,
                Err(_) => {
                    log::warn!("output is constant at t = {}; its indices are set to 0", data_times[l]);
                    return vec![0.0; d];
                }
            };
            let cz = gz.centered();
            let hzz = cz.hsic_with(&cz);
            inputs
                .iter()
                .zip(&self_terms)
                .map(|(cx, &hxx)| {
                    let denom = (hxx * hzz).sqrt();
                    if denom > 0.0 {
                        (cx.hsic_with(&cz) / denom).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let r2 = DMatrix::from_fn(d, data_times.len(), |j, l| columns[l][j]);
    let averaged: Vec<f64> = (0..d).map(|j| r2.row(j).mean()).collect();
    let mut best: Option<usize> = None;
    for j in (0..d).filter(|j| !exclude.contains(j)) {
        match best {
            Some(b) if averaged[j] <= averaged[b] => {
                if averaged[j] == averaged[b] {
                    log::info!("HSIC tie between {} and {}; keeping {}", names[b], names[j], names[b]);
                }
            }
            _ => best = Some(j),
        }
    }
    Ok(HsicReport {
        names: names.to_vec(),
        times: data_times.to_vec(),
        r2,
        averaged,
        selected_index: best.ok_or(Error::ExhaustedVariables)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Quadruple-sum trace expansion written out without centering shortcuts.
    fn brute_force_hsic(x: &[f64], z: &[f64]) -> f64 {
        let n = x.len();
        let l = gram_matrix(x, stats::std_dev(x)).unwrap();
        let m = gram_matrix(z, stats::std_dev(z)).unwrap();
        let h = |a: usize, b: usize| f64::from(u8::from(a == b)) - 1.0 / n as f64;
        let mut s = 0.0;
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    let lh = l[(p, q)] * h(q, r);
                    for t in 0..n {
                        s += lh * m[(r, t)] * h(t, p);
                    }
                }
            }
        }
        s / (n * n) as f64
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn three_point_gram() {
        let g = gram_matrix(&[0.0, 1.0, 2.0], 1.0).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert!((g[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g[(0, 2)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(g[(1, 2)], g[(2, 1)]);
        let ones = gram_matrix(&[3.0; 4], 1.0).unwrap();
        assert!(ones.iter().all(|&v| v == 1.0));
        assert!(matches!(gram_matrix(&[1.0, 2.0], 0.0), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        let g = gram_matrix(&random(150, 4), 0.3).unwrap();
        let eig = g.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10);
    }

    #[test]
    fn trace_estimator_matches_quadruple_sum() {
        for seed in 0..3 {
            let x = random(30, seed);
            let z: Vec<f64> = x.iter().zip(random(30, seed + 100)).map(|(a, b)| a * a + 0.3 * b).collect();
            let fast = hsic_v_statistic(&x, &z).unwrap();
            let slow = brute_force_hsic(&x, &z);
            assert!(((fast - slow) / slow).abs() < 1e-10, "{fast} vs {slow}");
        }
    }

    #[test]
    fn normalization_identities() {
        let x = random(60, 1);
        assert_eq!(r2_hsic(&x, &x).unwrap(), 1.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(r2_hsic(&x, &neg).unwrap(), 1.0);
        assert!(hsic_v_statistic(&x, &x).unwrap() > 0.0);
    }

    #[test]
    fn affine_invariance() {
        let x = random(80, 2);
        let z: Vec<f64> = x.iter().zip(random(80, 3)).map(|(a, b)| (3.0 * a).sin() + b).collect();
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        let a = r2_hsic(&x, &z).unwrap();
        let b = r2_hsic(&x2, &z).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        assert!(matches!(hsic_v_statistic(&[1.0; 5], &[1.0; 4]), Err(Error::Shape(_))));
        assert!(matches!(r2_hsic(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn selects_the_driving_variable() {
        let n = 150;
        let x1 = random(n, 10);
        let x2 = random(n, 11);
        let inputs = DMatrix::from_fn(n, 2, |r, c| if c == 0 { x1[r] } else { x2[r] });
        let grid = TimeGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let outputs = DMatrix::from_fn(3, n, |t, r| x1[r] * (1.0 + t as f64));
        let names = vec!["x1".to_string(), "x2".to_string()];
        let rep = rank_and_select(&names, &inputs, &outputs, &grid, &[0.5, 1.5], &BTreeSet::new()).unwrap();
        assert_eq!(rep.selected_index, 0);
        assert!(rep.averaged[1] < 0.05, "{}", rep.averaged[1]);
        assert!((rep.averaged[0] - 1.0).abs() < 1e-12);

        let single = rank_and_select(&names, &inputs, &outputs, &grid, &[1.5], &BTreeSet::new()).unwrap();
        assert_eq!(single.averaged[1], single.r2[(1, 0)]);

        let excl = rank_and_select(&names, &inputs, &outputs, &grid, &[1.5], &BTreeSet::from([0])).unwrap();
        assert_eq!(excl.selected_index, 1);
        let all = rank_and_select(&names, &inputs, &outputs, &grid, &[1.5], &BTreeSet::from([0, 1]));
        assert!(matches!(all, Err(Error::ExhaustedVariables)));

        let csv = rep.to_csv();
        assert!(csv.starts_with("variable,0.5,1.5,averaged,selected\nx1,"));
        assert!(csv.lines().nth(1).unwrap().ends_with(",1"));
    }

    #[test]
    fn permutation_null_matches_direct_permuted_index() {
        let x = random(40, 20);
        let z = random(40, 21);
        let null = permutation_null(&x, &z, 3, 9).unwrap();
        let mut rng = rng_from_seed(9);
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut rng);
        let zp: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        assert!((null[0] - r2_hsic(&x, &zp).unwrap()).abs() < 1e-12);
    }
}
