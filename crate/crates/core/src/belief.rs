//! Joint Gaussian belief over the positions of all movable objects.
//!
//! Object `i` occupies coordinates `2i, 2i+1` of the stacked state. Objects
//! are static, so there is no prediction step: the belief only changes
//! through measurement updates and when a manipulation pins an object down.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{vec2, Shape, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("object index {index} out of range for {count} objects")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("measurement noise covariance is singular")]
    SingularNoise,
    #[error("covariance is not symmetric positive semi-definite")]
    NotPsd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, BeliefError> {
        let n = mean.len();
        if !n.is_multiple_of(2) || cov.nrows() != n || cov.ncols() != n {
            return Err(BeliefError::Dimension(format!(
                "mean has {n} entries, covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-9 * scale {
            return Err(BeliefError::NotPsd);
        }
        if n > 0 && cov.clone().symmetric_eigenvalues().min() < -1e-10 * scale {
            return Err(BeliefError::NotPsd);
        }
        Ok(Self { mean, cov })
    }

    /// Independent isotropic priors, one standard deviation per object.
    pub fn isotropic(means: &[Vec2], sigmas: &[f64]) -> Result<Self, BeliefError> {
        if means.len() != sigmas.len() {
            return Err(BeliefError::Dimension("one sigma per object expected".into()));
        }
        let n = means.len();
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for (i, (m, s)) in means.iter().zip(sigmas).enumerate() {
            mean[2 * i] = m.x;
            mean[2 * i + 1] = m.y;
            cov[(2 * i, 2 * i)] = s * s;
            cov[(2 * i + 1, 2 * i + 1)] = s * s;
        }
        Self::new(mean, cov)
    }

    pub fn num_objects(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn check(&self, i: usize) -> Result<(), BeliefError> {
        if i < self.num_objects() {
            Ok(())
        } else {
            Err(BeliefError::IndexOutOfRange { index: i, count: self.num_objects() })
        }
    }

    /// Mean and 2×2 covariance block of object `i` (0-based).
    pub fn marginal(&self, i: usize) -> Result<(Vec2, Matrix2<f64>), BeliefError> {
        self.check(i)?;
        let m = vec2(self.mean[2 * i], self.mean[2 * i + 1]);
        let c = self.cov.fixed_view::<2, 2>(2 * i, 2 * i).into_owned();
        Ok((m, c))
    }

    pub fn object_mean(&self, i: usize) -> Vec2 {
        vec2(self.mean[2 * i], self.mean[2 * i + 1])
    }

    pub fn means(&self) -> Vec<Vec2> {
        (0..self.num_objects()).map(|i| self.object_mean(i)).collect()
    }

    /// `det Σ_i`, the uncertainty measure used for grasping decisions (m⁴).
    pub fn uncertainty(&self, i: usize) -> Result<f64, BeliefError> {
        Ok(self.marginal(i)?.1.determinant())
    }

    /// Pins object `i` at `position` with isotropic spread `sigma` and no
    /// correlation with the other objects.
    pub fn set_known(&mut self, i: usize, position: Vec2, sigma: f64) -> Result<(), BeliefError> {
        self.check(i)?;
        let n = self.mean.len();
        for k in 0..n {
            for r in [2 * i, 2 * i + 1] {
                self.cov[(r, k)] = 0.0;
                self.cov[(k, r)] = 0.0;
            }
        }
        self.cov[(2 * i, 2 * i)] = sigma * sigma;
        self.cov[(2 * i + 1, 2 * i + 1)] = sigma * sigma;
        self.mean[2 * i] = position.x;
        self.mean[2 * i + 1] = position.y;
        Ok(())
    }

    pub fn with_cov(&self, cov: DMatrix<f64>) -> Self {
        Self { mean: self.mean.clone(), cov }
    }
}

/// Position-proportional sensor noise: each coordinate has standard
/// deviation `scale · |p_c|`, with a variance floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub range: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
}

fn default_noise_scale() -> f64 {
    0.05
}

fn default_noise_floor() -> f64 {
    1e-6
}

impl SensorModel {
    pub fn new(range: f64) -> Self {
        Self { range, noise_scale: default_noise_scale(), noise_floor: default_noise_floor() }
    }

    /// Diagonal of `R` for the stacked coordinates of `positions`.
    pub fn expected_noise(&self, positions: &[Vec2]) -> DVector<f64> {
        expected_noise(positions, self.noise_scale, self.noise_floor)
    }
}

pub fn expected_noise(positions: &[Vec2], scale: f64, floor: f64) -> DVector<f64> {
    DVector::from_iterator(
        2 * positions.len(),
        positions.iter().flat_map(|p| [p.x, p.y]).map(|c| (scale * c.abs()).powi(2).max(floor)),
    )
}

/// Stacked observation of the visible objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Observed object indices, ascending.
    pub observed: Vec<usize>,
    pub y: DVector<f64>,
    /// Diagonal of `R`.
    pub noise: DVector<f64>,
}

impl Measurement {
    pub fn empty() -> Self {
        Self { observed: Vec::new(), y: DVector::zeros(0), noise: DVector::zeros(0) }
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// The selection matrix `M`: one identity block per observed object.
    pub fn selection(&self, num_objects: usize) -> DMatrix<f64> {
        selection_matrix(&self.observed, num_objects)
    }
}

pub fn selection_matrix(observed: &[usize], num_objects: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * observed.len(), 2 * num_objects);
    for (row, &i) in observed.iter().enumerate() {
        m[(2 * row, 2 * i)] = 1.0;
        m[(2 * row + 1, 2 * i + 1)] = 1.0;
    }
    m
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Posterior covariance `(Σ⁻¹ + Mᵀ R⁻¹ M)⁻¹`, symmetrized.
///
/// Uses the information form when `Σ` is invertible and falls back to the
/// gain form `(I - K M) Σ` when it is not (pinned objects have tiny but
/// possibly singular blocks).
pub fn posterior_cov(
    cov: &DMatrix<f64>,
    observed: &[usize],
    noise: &DVector<f64>,
) -> Result<DMatrix<f64>, BeliefError> {
    if observed.is_empty() {
        return Ok(cov.clone());
    }
    if noise.len() != 2 * observed.len() {
        return Err(BeliefError::Dimension("noise does not match observed rows".into()));
    }
    if noise.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
        return Err(BeliefError::SingularNoise);
    }
    let n = cov.nrows() / 2;
    let m = selection_matrix(observed, n);
    let r_inv = DMatrix::from_diagonal(&noise.map(|r| 1.0 / r));
    let mut post = match cov.clone().cholesky() {
        Some(ch) => {
            let info = ch.inverse() + m.transpose() * &r_inv * &m;
            match info.clone().cholesky() {
                Some(c) => c.inverse(),
                None => gain_form(cov, &m, noise)?,
            }
        }
        None => gain_form(cov, &m, noise)?,
    };
    symmetrize(&mut post);
    Ok(post)
}

fn gain_form(cov: &DMatrix<f64>, m: &DMatrix<f64>, noise: &DVector<f64>) -> Result<DMatrix<f64>, BeliefError> {
    let s = m * cov * m.transpose() + DMatrix::from_diagonal(noise);
    let s_inv = s.cholesky().ok_or(BeliefError::SingularNoise)?.inverse();
    let k = cov * m.transpose() * s_inv;
    let id = DMatrix::identity(cov.nrows(), cov.nrows());
    Ok((id - k * m) * cov)
}

/// Kalman measurement update.
pub fn kf_update(b: &GaussianBelief, meas: &Measurement) -> Result<GaussianBelief, BeliefError> {
    if meas.is_empty() {
        return Ok(b.clone());
    }
    let n = b.num_objects();
    if let Some(&bad) = meas.observed.iter().find(|&&i| i >= n) {
        return Err(BeliefError::IndexOutOfRange { index: bad, count: n });
    }
    if meas.y.len() != 2 * meas.observed.len() {
        return Err(BeliefError::Dimension("observation does not match observed rows".into()));
    }
    let cov = posterior_cov(&b.cov, &meas.observed, &meas.noise)?;
    let m = meas.selection(n);
    let r_inv = DMatrix::from_diagonal(&meas.noise.map(|r| 1.0 / r));
    // K = Σ⁺ Mᵀ R⁻¹
    let gain = &cov * m.transpose() * r_inv;
    let innovation = &meas.y - &m * &b.mean;
    let mean = &b.mean + gain * innovation;
    Ok(GaussianBelief { mean, cov })
}

/// Objects whose position lies within `range` of `pose` with no occluder
/// interior on the straight line between them.
pub fn visible_objects(pose: Vec2, positions: &[Vec2], occluders: &[Shape], range: f64) -> Vec<usize> {
    positions
        .iter()
        .enumerate()
        .filter(|(_, q)| (*q - pose).norm() <= range)
        .filter(|(_, q)| !occluders.iter().any(|o| o.segment_hits_interior(pose, **q)))
        .map(|(i, _)| i)
        .collect()
}

/// Measurement-free covariance update at waypoint `w`: visibility and noise
/// both come from the estimated positions `means`.
pub fn riccati(cov: &DMatrix<f64>, w: Vec2, means: &[Vec2], occluders: &[Shape], sensor: &SensorModel) -> DMatrix<f64> {
    let observed = visible_objects(w, means, occluders, sensor.range);
    let rows: Vec<Vec2> = observed.iter().map(|&i| means[i]).collect();
    let noise = sensor.expected_noise(&rows);
    posterior_cov(cov, &observed, &noise).expect("noise is floored and positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn noise_examples() {
        let r = expected_noise(&[vec2(2.0, 0.0)], 0.05, 1e-6);
        assert!(close(r[0], 0.01, 1e-15));
        assert!(close(r[1], 1e-6, 1e-18));
        let r = expected_noise(&[vec2(3.0, 4.0)], 0.05, 1e-6);
        assert!(close(r[0], 0.0225, 1e-15) && close(r[1], 0.04, 1e-15));
    }

    #[test]
    fn unit_update() {
        let b = GaussianBelief::isotropic(&[vec2(1.0, 2.0)], &[1.0]).unwrap();
        let m = Measurement {
            observed: vec![0],
            y: DVector::from_vec(vec![1.0, 2.0]),
            noise: DVector::from_vec(vec![1.0, 1.0]),
        };
        let post = kf_update(&b, &m).unwrap();
        assert!((post.cov() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-12);
        assert!((post.mean() - b.mean()).amax() < 1e-12);
        assert_eq!(kf_update(&b, &Measurement::empty()).unwrap(), b);
    }

    #[test]
    fn marginal_block() {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 4.0, 4.0]));
        let b = GaussianBelief::new(DVector::zeros(4), cov).unwrap();
        let (_, s) = b.marginal(1).unwrap();
        assert_eq!(s, Matrix2::new(4.0, 0.0, 0.0, 4.0));
        assert!(close(b.uncertainty(1).unwrap(), 16.0, 1e-12));
        assert!(matches!(b.marginal(2), Err(BeliefError::IndexOutOfRange { .. })));
    }

    #[test]
    fn visibility_rules() {
        let occ = [Shape::disk(vec2(1.0, 0.0), 0.2)];
        let pts = [vec2(1.99, 0.0), vec2(0.0, 1.99), vec2(0.0, 2.01)];
        assert_eq!(visible_objects(Vec2::zeros(), &pts, &occ, 2.0), vec![1]);
    }

    #[test]
    fn pinning_removes_correlation() {
        let mut cov = DMatrix::from_element(4, 4, 0.5);
        cov.fill_diagonal(1.0);
        let mut b = GaussianBelief::new(DVector::zeros(4), cov).unwrap();
        b.set_known(0, vec2(3.0, 1.0), 1e-4).unwrap();
        assert_eq!(b.cov()[(0, 2)], 0.0);
        assert!(close(b.uncertainty(0).unwrap(), 1e-16, 1e-24));
        assert_eq!(b.object_mean(0), vec2(3.0, 1.0));
    }

    #[test]
    fn singular_prior_uses_gain_form() {
        let mut b = GaussianBelief::isotropic(&[vec2(1.0, 1.0)], &[0.0]).unwrap();
        b.set_known(0, vec2(1.0, 1.0), 0.0).unwrap();
        let m = Measurement {
            observed: vec![0],
            y: DVector::from_vec(vec![1.1, 1.0]),
            noise: DVector::from_vec(vec![0.01, 0.01]),
        };
        let post = kf_update(&b, &m).unwrap();
        assert!(post.cov().amax() < 1e-15);
        assert!((post.object_mean(0) - vec2(1.0, 1.0)).norm() < 1e-12);
    }
}
