//! Affine map from classifier feature space into the joint vision-language
//! embedding space, fitted by (lightly regularized) least squares.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{check_dims, cosine_slices, FeatureMatrix, FeatureVector};

/// Ridge added to the diagonal of the normal equations when none is given.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// `h(z) = W z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineAligner {
    weight: FeatureMatrix,
    bias: FeatureVector,
}

impl AffineAligner {
    pub fn new(weight: FeatureMatrix, bias: FeatureVector) -> Result<Self> {
        check_dims(weight.rows(), bias.dim())?;
        Ok(Self { weight, bias })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(FeatureMatrix::identity(dim)?, FeatureVector::zeros(dim)?)
    }

    pub fn weight(&self) -> &FeatureMatrix {
        &self.weight
    }

    pub fn bias(&self) -> &FeatureVector {
        &self.bias
    }

    pub fn dim_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn dim_out(&self) -> usize {
        self.weight.rows()
    }

    /// `W z + b`.
    pub fn apply(&self, z: &FeatureVector) -> Result<FeatureVector> {
        let mut h = self.weight.matvec(z.as_slice())?;
        for (hi, bi) in h.iter_mut().zip(self.bias.as_slice()) {
            *hi += bi;
        }
        FeatureVector::new(h)
    }

    /// Cosine similarity between the aligned feature and a text embedding.
    pub fn similarity(&self, z: &FeatureVector, t_hat: &FeatureVector) -> Result<f64> {
        check_dims(self.dim_out(), t_hat.dim())?;
        let h = self.apply(z)?;
        cosine_slices(h.as_slice(), t_hat.as_slice())
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(&AlignerFile::from(self))
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, AlignerParseError> {
        let file: AlignerFile = serde_json::from_str(s)?;
        Ok(file.try_into()?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AlignerParseError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// On-disk JSON layout.
#[derive(Debug, Serialize, Deserialize)]
pub struct AlignerFile {
    pub dim_in: usize,
    pub dim_out: usize,
    #[serde(rename = "W")]
    pub weight: Vec<f64>,
    #[serde(rename = "b")]
    pub bias: Vec<f64>,
}

impl From<&AffineAligner> for AlignerFile {
    fn from(al: &AffineAligner) -> Self {
        Self {
            dim_in: al.dim_in(),
            dim_out: al.dim_out(),
            weight: al.weight.as_slice().to_vec(),
            bias: al.bias.as_slice().to_vec(),
        }
    }
}

impl TryFrom<AlignerFile> for AffineAligner {
    type Error = Error;

    fn try_from(f: AlignerFile) -> Result<Self> {
        let weight = FeatureMatrix::new(f.dim_out, f.dim_in, f.weight)?;
        check_dims(f.dim_out, f.bias.len())?;
        AffineAligner::new(weight, FeatureVector::new(f.bias)?)
    }
}

/// Paired classifier features (rows of `features`) and joint-space image
/// embeddings (rows of `targets`).
#[derive(Debug, Clone)]
pub struct AlignmentDataset {
    features: FeatureMatrix,
    targets: FeatureMatrix,
}

impl AlignmentDataset {
    pub fn new(features: FeatureMatrix, targets: FeatureMatrix) -> Result<Self> {
        check_dims(features.rows(), targets.rows())?;
        Ok(Self { features, targets })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn targets(&self) -> &FeatureMatrix {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let pick = |m: &FeatureMatrix| {
            let values = rows.iter().flat_map(|&r| m.row(r).iter().copied()).collect();
            FeatureMatrix::new(rows.len(), m.cols(), values)
        };
        Self::new(pick(&self.features)?, pick(&self.targets)?)
    }
}

/// Mean over samples of `‖W z + b − target‖²`.
pub fn mean_squared_error(al: &AffineAligner, data: &AlignmentDataset) -> Result<f64> {
    check_dims(al.dim_in(), data.features.cols())?;
    check_dims(al.dim_out(), data.targets.cols())?;
    let mut total = 0.0;
    for r in 0..data.len() {
        let h = al.weight.matvec(data.features.row(r))?;
        total += h
            .iter()
            .zip(al.bias.as_slice())
            .zip(data.targets.row(r))
            .map(|((hi, bi), ti)| (hi + bi - ti).powi(2))
            .sum::<f64>();
    }
    Ok(total / data.len() as f64)
}

/// Fits `W, b` minimizing the mean squared error plus `ridge · ‖[W b]‖²`.
///
/// Features are augmented with a constant 1 column. With at least as many
/// samples as unknowns per output the primal normal equations
/// `(XᵀX + λI) β = XᵀY` are solved; otherwise the equivalent dual system
/// `(XXᵀ + λI) α = Y`, `β = Xᵀα`, which with `ridge = 0` yields the
/// minimum-norm exact interpolant.
pub fn train_aligner(data: &AlignmentDataset, ridge: f64) -> Result<AffineAligner> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
    }
    let n = data.len();
    let d = data.features.cols();
    let m = data.targets.cols();
    let p = d + 1;

    let x = DMatrix::from_fn(n, p, |r, c| if c < d { data.features.get(r, c) } else { 1.0 });
    let y = DMatrix::from_fn(n, m, |r, c| data.targets.get(r, c));

    // beta is p x m: rows 0..d hold Wᵀ, row d holds b.
    let beta = if n >= p {
        let gram = x.transpose() * &x;
        let rhs = x.transpose() * &y;
        solve_spd(gram, ridge, &rhs)?
    } else {
        let kernel = &x * x.transpose();
        let alpha = solve_spd(kernel, ridge, &y)?;
        x.transpose() * alpha
    };

    let mut weight = vec![0.0; m * d];
    for o in 0..m {
        for i in 0..d {
            weight[o * d + i] = beta[(i, o)];
        }
    }
    let bias = (0..m).map(|o| beta[(d, o)]).collect();
    AffineAligner::new(FeatureMatrix::new(m, d, weight)?, FeatureVector::new(bias)?)
}

fn solve_spd(mut a: DMatrix<f64>, ridge: f64, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    // Cholesky succeeds on rank-deficient matrices whenever rounding leaves a
    // tiny positive pivot; reject pivots at the rounding floor.
    let floor = max_diag * n as f64 * f64::EPSILON;
    let l = chol.l_dirty();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= floor) {
        return Err(Error::SingularSystem);
    }
    let sol = chol.solve(rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Dataset generated by a known affine map.
    fn affine_data(seed: u64, n: usize, d: usize, m: usize) -> (Vec<f64>, Vec<f64>, AlignmentDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, m * d);
        let c = gaussian(&mut rng, m);
        let z = gaussian(&mut rng, n * d);
        let mut t = vec![0.0; n * m];
        for s in 0..n {
            for o in 0..m {
                t[s * m + o] = c[o] + (0..d).map(|i| a[o * d + i] * z[s * d + i]).sum::<f64>();
            }
        }
        let data = AlignmentDataset::new(
            FeatureMatrix::new(n, d, z).unwrap(),
            FeatureMatrix::new(n, m, t).unwrap(),
        )
        .unwrap();
        (a, c, data)
    }

    #[test]
    fn recovers_known_affine_map() {
        let (a, c, data) = affine_data(11, 50, 3, 2);
        let al = train_aligner(&data, DEFAULT_RIDGE).unwrap();
        let max_w = al
            .weight()
            .as_slice()
            .iter()
            .zip(&a)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let max_b = al
            .bias()
            .as_slice()
            .iter()
            .zip(&c)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_w < 1e-8 && max_b < 1e-8, "{max_w} {max_b}");
    }

    #[test]
    fn single_sample_interpolated_exactly() {
        let z = fv(&[0.3, -1.2, 2.0]);
        let t = fv(&[1.0, -0.5]);
        let data = AlignmentDataset::new(
            FeatureMatrix::from_rows(std::slice::from_ref(&z)).unwrap(),
            FeatureMatrix::from_rows(std::slice::from_ref(&t)).unwrap(),
        )
        .unwrap();
        let al = train_aligner(&data, 0.0).unwrap();
        let h = al.apply(&z).unwrap();
        let resid = h.add_scaled(-1.0, &t).unwrap().norm();
        assert!(resid <= 1e-10, "{resid}");
    }

    #[test]
    fn zero_targets_give_zero_map() {
        let (_, _, data) = affine_data(3, 20, 4, 3);
        let zero = AlignmentDataset::new(data.features().clone(), FeatureMatrix::zeros(20, 3).unwrap()).unwrap();
        let al = train_aligner(&zero, 1e-8).unwrap();
        assert!(al.weight().as_slice().iter().all(|v| v.abs() < 1e-6));
        assert!(al.bias().as_slice().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn rank_deficient_without_ridge_is_singular() {
        // Second feature column duplicates the first.
        let z = FeatureMatrix::new(4, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]).unwrap();
        let t = FeatureMatrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let data = AlignmentDataset::new(z, t).unwrap();
        assert_eq!(train_aligner(&data, 0.0), Err(Error::SingularSystem));
        assert!(train_aligner(&data, 1e-6).is_ok());
    }

    #[test]
    fn rejects_bad_ridge_and_mismatched_rows() {
        let (_, _, data) = affine_data(1, 10, 2, 2);
        assert!(matches!(train_aligner(&data, -1.0), Err(Error::InvalidConfig(_))));
        let bad = AlignmentDataset::new(FeatureMatrix::zeros(3, 2).unwrap(), FeatureMatrix::zeros(4, 2).unwrap());
        assert!(matches!(bad, Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn apply_examples() {
        let id = AffineAligner::identity(2).unwrap();
        assert_eq!(id.apply(&fv(&[1.0, 2.0])).unwrap().as_slice(), &[1.0, 2.0]);
        let al = AffineAligner::new(
            FeatureMatrix::new(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap(),
            fv(&[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(al.apply(&fv(&[1.0, 1.0])).unwrap().as_slice(), &[3.0, 1.0]);
        assert!(matches!(
            al.apply(&fv(&[1.0, 1.0, 1.0])),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn apply_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, d) = (4, 7);
        let w = gaussian(&mut rng, m * d);
        let b = gaussian(&mut rng, m);
        let z = gaussian(&mut rng, d);
        let al = AffineAligner::new(FeatureMatrix::new(m, d, w.clone()).unwrap(), fv(&b)).unwrap();
        let got = al.apply(&fv(&z)).unwrap();
        for o in 0..m {
            let mut acc = b[o];
            for i in 0..d {
                acc += w[o * d + i] * z[i];
            }
            assert!((got[o] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn similarity_examples() {
        let id = AffineAligner::identity(2).unwrap();
        assert_eq!(id.similarity(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(id.similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(
            id.similarity(&fv(&[0.0, 0.0]), &fv(&[0.0, 1.0])),
            Err(Error::ZeroNorm { .. })
        ));
    }

    #[test]
    fn similarity_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, d) = (5, 3);
        let w = gaussian(&mut rng, m * d);
        let b = gaussian(&mut rng, m);
        let z = gaussian(&mut rng, d);
        let t = gaussian(&mut rng, m);
        let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let t_hat: Vec<f64> = t.iter().map(|v| v / tn).collect();
        let al = AffineAligner::new(FeatureMatrix::new(m, d, w.clone()).unwrap(), fv(&b)).unwrap();

        let h: Vec<f64> = (0..m)
            .map(|o| b[o] + (0..d).map(|i| w[o * d + i] * z[i]).sum::<f64>())
            .collect();
        let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect = h.iter().zip(&t_hat).map(|(a, b)| a * b).sum::<f64>() / hn;
        let got = al.similarity(&fv(&z), &fv(&t_hat)).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn trained_solution_is_locally_optimal() {
        let (_, _, clean) = affine_data(21, 40, 4, 3);
        // add noise so the optimum has nonzero residual
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let noisy_t: Vec<f64> = clean
            .targets()
            .as_slice()
            .iter()
            .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data =
            AlignmentDataset::new(clean.features().clone(), FeatureMatrix::new(40, 3, noisy_t).unwrap()).unwrap();
        let al = train_aligner(&data, 0.0).unwrap();
        let base = mean_squared_error(&al, &data).unwrap();
        for _ in 0..25 {
            let dw = gaussian(&mut rng, 12);
            let db = gaussian(&mut rng, 3);
            let scale = 1e-3 / (dw.iter().chain(&db).map(|v| v * v).sum::<f64>()).sqrt();
            let w: Vec<f64> = al
                .weight()
                .as_slice()
                .iter()
                .zip(&dw)
                .map(|(a, b)| a + scale * b)
                .collect();
            let b: Vec<f64> = al
                .bias()
                .as_slice()
                .iter()
                .zip(&db)
                .map(|(a, b)| a + scale * b)
                .collect();
            let pert = AffineAligner::new(FeatureMatrix::new(3, 4, w).unwrap(), fv(&b)).unwrap();
            assert!(mean_squared_error(&pert, &data).unwrap() >= base);
        }
    }

    #[test]
    fn json_round_trip_layout() {
        let al = AffineAligner::new(
            FeatureMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
            fv(&[0.5, -0.5]),
        )
        .unwrap();
        let s = al.to_json().unwrap();
        assert_eq!(
            s,
            r#"{"dim_in":3,"dim_out":2,"W":[1.0,2.0,3.0,4.0,5.0,6.0],"b":[0.5,-0.5]}"#
        );
        assert_eq!(AffineAligner::from_json(&s).unwrap(), al);
        assert!(AffineAligner::from_json(r#"{"dim_in":3,"dim_out":2,"W":[1.0],"b":[0.5,-0.5]}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn apply_is_affine(seed in 0u64..1000, alpha in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, d) = (3, 4);
            let al = AffineAligner::new(
                FeatureMatrix::new(m, d, gaussian(&mut rng, m * d)).unwrap(),
                fv(&gaussian(&mut rng, m)),
            ).unwrap();
            let z1 = fv(&gaussian(&mut rng, d));
            let z2 = fv(&gaussian(&mut rng, d));
            let mix = z1.scale(alpha).unwrap().add_scaled(1.0 - alpha, &z2).unwrap();
            let lhs = al.apply(&mix).unwrap();
            let rhs = al.apply(&z1).unwrap().scale(alpha).unwrap()
                .add_scaled(1.0 - alpha, &al.apply(&z2).unwrap()).unwrap();
            for i in 0..m {
                proptest::prop_assert!((lhs[i] - rhs[i]).abs() < 1e-10);
            }
        }
    }
}
