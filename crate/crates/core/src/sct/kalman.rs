//! Constant-velocity Kalman filter in `(cx, cy, aspect, height)` space.
//!
//! State is the measurement plus its per-frame velocity. Process and
//! measurement noise scale with the box height, so the filter behaves the
//! same for near and far vehicles.

use nalgebra::{Cholesky, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 8>;
pub type StateCovariance = SMatrix<f64, 8, 8>;
pub type MeasurementVector = SVector<f64, 4>;
pub type MeasurementCovariance = SMatrix<f64, 4, 4>;

/// Chi-square 0.95 quantile with 4 degrees of freedom.
pub const CHI2INV95_4DOF: f64 = 9.4877;

const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
}

impl KalmanState {
    /// The box at the state's mean position.
    pub fn to_box(&self) -> Result<BoundingBox> {
        BoundingBox::from_xyah(self.mean[0], self.mean[1], self.mean[2], self.mean[3])
    }
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> SMatrix<f64, 4, 8> {
    SMatrix::<f64, 4, 8>::identity()
}

/// Zero-velocity state centred on `bbox`.
pub fn kf_initiate(bbox: &BoundingBox) -> KalmanState {
    let z = bbox.to_xyah();
    let h = z[3];
    let mut mean = StateVector::zeros();
    for i in 0..4 {
        mean[i] = z[i];
    }
    let std = [
        2.0 * STD_WEIGHT_POSITION * h,
        2.0 * STD_WEIGHT_POSITION * h,
        1e-2,
        2.0 * STD_WEIGHT_POSITION * h,
        10.0 * STD_WEIGHT_VELOCITY * h,
        10.0 * STD_WEIGHT_VELOCITY * h,
        1e-5,
        10.0 * STD_WEIGHT_VELOCITY * h,
    ];
    let covariance = StateCovariance::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
    KalmanState { mean, covariance }
}

/// Advances the state one frame.
pub fn kf_predict(state: &KalmanState) -> KalmanState {
    let h = state.mean[3];
    let std = [
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_POSITION * h,
        1e-2,
        STD_WEIGHT_POSITION * h,
        STD_WEIGHT_VELOCITY * h,
        STD_WEIGHT_VELOCITY * h,
        1e-5,
        STD_WEIGHT_VELOCITY * h,
    ];
    let q = StateCovariance::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
    let f = transition();
    KalmanState {
        mean: f * state.mean,
        covariance: symmetrize(&(f * state.covariance * f.transpose() + q)),
    }
}

/// Predicted measurement distribution `(H x, H P H' + R)`.
pub fn kf_project(state: &KalmanState) -> (MeasurementVector, MeasurementCovariance) {
    let h = state.mean[3];
    let std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h];
    let r = MeasurementCovariance::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
    let hm = observation();
    let cov = hm * state.covariance * hm.transpose() + r;
    (hm * state.mean, (cov + cov.transpose()) * 0.5)
}

/// Kalman correction with a box measurement.
///
/// The posterior covariance uses the Joseph form, which stays symmetric
/// positive semidefinite under rounding.
pub fn kf_update(state: &KalmanState, measurement: &BoundingBox) -> Result<KalmanState> {
    let (proj_mean, proj_cov) = kf_project(state);
    let chol = Cholesky::new(proj_cov).ok_or(Error::Singular("innovation covariance"))?;
    let hm = observation();
    // K = P H' S^-1, solved as S K' = H P
    let pht = state.covariance * hm.transpose();
    let gain = chol.solve(&pht.transpose()).transpose();
    let z = MeasurementVector::from(measurement.to_xyah());
    let innovation = z - proj_mean;
    let mean = state.mean + gain * innovation;

    let h = state.mean[3];
    let std = [STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h];
    let r = MeasurementCovariance::from_diagonal(&SVector::from_iterator(std.iter().map(|s| s * s)));
    let i_kh = StateCovariance::identity() - gain * hm;
    let covariance = i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose();
    Ok(KalmanState {
        mean,
        covariance: symmetrize(&covariance),
    })
}

/// Squared Mahalanobis distance of `point` under `N(mean, cov)`.
pub fn mahalanobis_sq(mean: &MeasurementVector, cov: &MeasurementCovariance, point: &MeasurementVector) -> Result<f64> {
    let chol = Cholesky::new(*cov).ok_or(Error::Singular("projected covariance"))?;
    let d = point - mean;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&d)
        .ok_or(Error::Singular("projected covariance"))?;
    Ok(y.norm_squared())
}

/// Squared Mahalanobis distance of each candidate box from the state's
/// predicted measurement.
pub fn gating_distance(state: &KalmanState, candidates: &[BoundingBox]) -> Result<Vec<f64>> {
    let (mean, cov) = kf_project(state);
    candidates
        .iter()
        .map(|b| mahalanobis_sq(&mean, &cov, &MeasurementVector::from(b.to_xyah())))
        .collect()
}
