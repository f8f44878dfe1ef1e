//! Constant-velocity Kalman filter over box centroids, the trajectory
//! baseline.
//!
//! State is `(cx, cy, vx, vy)` with unit frame steps and position-only
//! observations. Velocity is initialized by differencing the first two
//! observations, so on noise-free linear motion the filter is exact from the
//! second update on. Covariance updates use the Joseph form to preserve
//! symmetry.

use crate::geom::{Centroid, Offset};
use crate::scalar::Scalar;

/// Noise configuration in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanConfig {
    pub process_noise_pos: f64,
    pub process_noise_vel: f64,
    pub observation_noise: f64,
    /// Velocity variance before the second observation pins it down.
    pub initial_velocity_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_noise_pos: 1e-2,
            process_noise_vel: 1e-4,
            observation_noise: 1.0,
            initial_velocity_var: 1e3,
        }
    }
}

type M4<S> = [[S; 4]; 4];

#[derive(Debug, Clone)]
pub struct KalmanFilter<S> {
    state: [S; 4],
    cov: M4<S>,
    q: [S; 4],
    r: S,
    updates: usize,
    last_observed: Centroid<S>,
}

fn zeros4<S: Scalar>() -> M4<S> {
    [[S::zero(); 4]; 4]
}

fn diag4<S: Scalar>(d: [S; 4]) -> M4<S> {
    let mut m = zeros4();
    for i in 0..4 {
        m[i][i] = d[i];
    }
    m
}

fn mat_mul<S: Scalar>(a: &M4<S>, b: &M4<S>) -> M4<S> {
    let mut out = zeros4();
    for i in 0..4 {
        for k in 0..4 {
            let aik = a[i][k];
            for j in 0..4 {
                out[i][j] = out[i][j] + aik * b[k][j];
            }
        }
    }
    out
}

fn transpose<S: Scalar>(a: &M4<S>) -> M4<S> {
    let mut out = zeros4();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i];
        }
    }
    out
}

impl<S: Scalar> KalmanFilter<S> {
    /// Starts a filter at a track's first observation with zero velocity.
    pub fn new(initial: Centroid<S>, config: &KalmanConfig) -> Self {
        let r = S::cast(config.observation_noise);
        let vel_var = S::cast(config.initial_velocity_var);
        Self {
            state: [initial.x, initial.y, S::zero(), S::zero()],
            cov: diag4([r.max(S::one()), r.max(S::one()), vel_var, vel_var]),
            q: [
                S::cast(config.process_noise_pos),
                S::cast(config.process_noise_pos),
                S::cast(config.process_noise_vel),
                S::cast(config.process_noise_vel),
            ],
            r,
            updates: 1,
            last_observed: initial,
        }
    }

    pub fn position(&self) -> Centroid<S> {
        Centroid::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Offset<S> {
        Offset::new(self.state[2], self.state[3])
    }

    pub fn covariance(&self) -> &M4<S> {
        &self.cov
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Time update: advances the state one frame and returns the predicted
    /// position.
    #[allow(clippy::needless_range_loop)]
    pub fn predict(&mut self) -> Centroid<S> {
        self.state[0] = self.state[0] + self.state[2];
        self.state[1] = self.state[1] + self.state[3];
        let mut f = diag4([S::one(); 4]);
        f[0][2] = S::one();
        f[1][3] = S::one();
        let mut p = mat_mul(&mat_mul(&f, &self.cov), &transpose(&f));
        for i in 0..4 {
            p[i][i] = p[i][i] + self.q[i];
        }
        self.cov = p;
        self.position()
    }

    /// Measurement update with an observed centroid. The second observation
    /// initializes the velocity by differencing instead of a standard
    /// update; later observations use the standard equations.
    pub fn update(&mut self, z: Centroid<S>) {
        if self.updates == 1 {
            let v = z - self.last_observed;
            self.state = [z.x, z.y, v.dx, v.dy];
            let two = S::cast(2.0);
            let vel_var = two * self.r + self.q[2];
            self.cov = diag4([self.r, self.r, vel_var, vel_var]);
        } else {
            self.standard_update(z);
        }
        self.updates += 1;
        self.last_observed = z;
    }

    #[allow(clippy::needless_range_loop)]
    fn standard_update(&mut self, z: Centroid<S>) {
        let p = &self.cov;
        // S = H P H^T + R with H selecting the position block
        let s00 = p[0][0] + self.r;
        let s01 = p[0][1];
        let s10 = p[1][0];
        let s11 = p[1][1] + self.r;
        let det = s00 * s11 - s01 * s10;
        if det <= S::zero() || !det.is_finite() {
            // degenerate innovation covariance (e.g. the zero-noise limit):
            // keep the prediction
            return;
        }
        let inv = [[s11 / det, -s01 / det], [-s10 / det, s00 / det]];

        // K = P H^T S^-1, a 4x2 gain from the first two columns of P
        let mut k = [[S::zero(); 2]; 4];
        for i in 0..4 {
            for j in 0..2 {
                k[i][j] = p[i][0] * inv[0][j] + p[i][1] * inv[1][j];
            }
        }

        let y = [z.x - self.state[0], z.y - self.state[1]];
        for i in 0..4 {
            self.state[i] = self.state[i] + k[i][0] * y[0] + k[i][1] * y[1];
        }

        // Joseph form: P = (I - K H) P (I - K H)^T + K R K^T
        let mut ikh = diag4([S::one(); 4]);
        for i in 0..4 {
            ikh[i][0] = ikh[i][0] - k[i][0];
            ikh[i][1] = ikh[i][1] - k[i][1];
        }
        let mut cov = mat_mul(&mat_mul(&ikh, &self.cov), &transpose(&ikh));
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] = cov[i][j] + k[i][0] * self.r * k[j][0] + k[i][1] * self.r * k[j][1];
            }
        }
        self.cov = cov;
    }
}
