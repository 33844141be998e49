//! Twelve-state error-state EKF with velocity aiding.
//!
//! Error state ordering is `[dv (3), de (3), b_a (3), b_g (3)]` with
//! `dv = v_hat - v` and `T_hat = (I + [de x]) T`. Bias components are the
//! residuals between the true bias and the running estimate.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::earth::{self, WGS84};
use crate::error::{NavError, Result};
use crate::strapdown::{skew, BodyToNavDcm, NavState, ORTHONORMALITY_TOL};

pub const N_STATES: usize = 12;

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Vector12 = SVector<f64, 12>;
pub type Matrix3x12 = SMatrix<f64, 3, 12>;
pub type Covariance12 = Matrix12;

/// Innovation covariances with a 1-norm condition number above this are rejected.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Stacked error-state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState(pub Vector12);

impl ErrorState {
    pub fn zeros() -> Self {
        Self(Vector12::zeros())
    }

    pub fn from_parts(dv: Vector3<f64>, de: Vector3<f64>, ba: Vector3<f64>, bg: Vector3<f64>) -> Self {
        let mut x = Vector12::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&dv);
        x.fixed_rows_mut::<3>(3).copy_from(&de);
        x.fixed_rows_mut::<3>(6).copy_from(&ba);
        x.fixed_rows_mut::<3>(9).copy_from(&bg);
        Self(x)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into()
    }

    pub fn attitude(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into()
    }

    pub fn accel_bias(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(6).into()
    }

    pub fn gyro_bias(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(9).into()
    }
}

/// Continuous process noise, per-axis variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoiseConfig {
    pub accel_var: f64,
    pub gyro_var: f64,
    #[serde(default)]
    pub accel_bias_rw_var: f64,
    #[serde(default)]
    pub gyro_bias_rw_var: f64,
}

impl ProcessNoiseConfig {
    pub fn new(accel_var: f64, gyro_var: f64) -> Self {
        Self { accel_var, gyro_var, accel_bias_rw_var: 0.0, gyro_bias_rw_var: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.accel_var, self.gyro_var, self.accel_bias_rw_var, self.gyro_bias_rw_var];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NavError::InvalidConfig(format!(
                "process noise variances must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }

    /// `Q^c = diag(accel x3, gyro x3, accel-bias RW x3, gyro-bias RW x3)`
    pub fn continuous(&self) -> Matrix12 {
        let mut d = Vector12::zeros();
        for i in 0..3 {
            d[i] = self.accel_var;
            d[3 + i] = self.gyro_var;
            d[6 + i] = self.accel_bias_rw_var;
            d[9 + i] = self.gyro_bias_rw_var;
        }
        Matrix12::from_diagonal(&d)
    }
}

/// Diagonal of the discrete measurement noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementNoiseConfig {
    pub variance: [f64; 3],
}

impl MeasurementNoiseConfig {
    pub fn isotropic(var: f64) -> Self {
        Self { variance: [var; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variance.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NavError::InvalidConfig(format!(
                "measurement variances must be non-negative: {:?}",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.variance))
    }
}

/// Frame in which an aiding velocity is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AidingKind {
    /// Doppler velocity log, body frame.
    Dvl,
    /// GNSS receiver, navigation frame.
    Gnss,
}

impl AidingKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AidingKind::Dvl => "dvl",
            AidingKind::Gnss => "gnss",
        }
    }
}

impl std::str::FromStr for AidingKind {
    type Err = NavError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dvl" => Ok(AidingKind::Dvl),
            "gnss" => Ok(AidingKind::Gnss),
            other => Err(NavError::InvalidConfig(format!("unknown aiding kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AidingMeasurement {
    pub time: f64,
    pub kind: AidingKind,
    pub velocity: Vector3<f64>,
}

/// System matrix of the error-state dynamics at the current estimate.
///
/// `f_n` is the (bias-corrected) specific force resolved in NED.
#[allow(non_snake_case)]
pub fn build_F(state: &NavState, f_n: &Vector3<f64>) -> Result<Matrix12> {
    let p = &state.position;
    let lat = p.latitude;
    if !lat.is_finite() || lat.abs() > std::f64::consts::FRAC_PI_2 {
        return Err(NavError::LatitudeOutOfRange(lat));
    }
    if earth::is_polar(lat) {
        return Err(NavError::SingularLatitude(lat));
    }
    let (r_m, r_n) = earth::principal_radii_unchecked(&WGS84, lat);
    let r_e = (r_m * r_n).sqrt();
    let h = p.altitude;
    let v = &state.velocity;
    let (v_n, v_e, v_d) = (v[0], v[1], v[2]);
    let (s, c) = lat.sin_cos();
    let tan = s / c;
    let w_ie = WGS84.earth_rate;

    let lat_dot = v_n / (r_m + h);
    let lon_dot = v_e / (c * (r_n + h));
    let w_n = (lon_dot + w_ie) * c;
    let w_e = -lat_dot;
    let w_d = -(lon_dot + w_ie) * s;

    let f_vv = Matrix3::new(
        v_d / r_e,
        2.0 * w_d,
        -v_n / r_e,
        -(w_d - w_ie * s),
        v_d / r_e + v_n / r_e * tan,
        w_n + w_ie * c,
        2.0 * v_n / r_e,
        -2.0 * w_n,
        0.0,
    );
    let f_ve = Matrix3::new(
        0.0, f_n[2], -f_n[1], //
        -f_n[2], 0.0, f_n[0], //
        f_n[1], -f_n[0], 0.0,
    );
    let f_ev = Matrix3::new(0.0, -1.0 / (r_n + h), 0.0, 1.0 / (r_m + h), 0.0, 0.0, 0.0, tan / (r_n + h), 0.0);
    let f_ee = Matrix3::new(
        0.0, w_d, -w_e, //
        -w_d, 0.0, w_n, //
        w_e, -w_n, 0.0,
    );
    let t = state.attitude.matrix();

    let mut f = Matrix12::zeros();
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&f_vv);
    f.fixed_view_mut::<3, 3>(0, 3).copy_from(&f_ve);
    f.fixed_view_mut::<3, 3>(0, 6).copy_from(t);
    f.fixed_view_mut::<3, 3>(3, 0).copy_from(&f_ev);
    f.fixed_view_mut::<3, 3>(3, 3).copy_from(&f_ee);
    f.fixed_view_mut::<3, 3>(3, 9).copy_from(t);
    Ok(f)
}

/// Noise shaping matrix `blockdiag(T, T, I, I)`.
#[allow(non_snake_case)]
pub fn build_G(t: &BodyToNavDcm) -> Matrix12 {
    let mut g = Matrix12::identity();
    g.fixed_view_mut::<3, 3>(0, 0).copy_from(t.matrix());
    g.fixed_view_mut::<3, 3>(3, 3).copy_from(t.matrix());
    g
}

/// First-order transition matrix `I + F dt`.
pub fn transition<const N: usize>(f: &SMatrix<f64, N, N>, dt: f64) -> SMatrix<f64, N, N> {
    SMatrix::<f64, N, N>::identity() + f * dt
}

/// `Q^d = G Q^c G^T dt`
#[allow(non_snake_case)]
pub fn discrete_Q<const N: usize>(g: &SMatrix<f64, N, N>, qc: &SMatrix<f64, N, N>, dt: f64) -> SMatrix<f64, N, N> {
    symmetrize(&(g * qc * g.transpose() * dt))
}

#[inline]
pub fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

/// Covariance prediction `Phi P Phi^T + Q^d`, symmetrized.
pub fn predict<const N: usize>(
    p: &SMatrix<f64, N, N>,
    phi: &SMatrix<f64, N, N>,
    qd: &SMatrix<f64, N, N>,
) -> SMatrix<f64, N, N> {
    symmetrize(&(phi * p * phi.transpose() + qd))
}

fn one_norm<const M: usize>(a: &SMatrix<f64, M, M>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Kalman gain `P H^T (H P H^T + R)^-1`.
///
/// An exactly zero innovation covariance means neither the state nor the
/// measurement is uncertain; the gain is then zero.
pub fn gain<const N: usize, const M: usize>(
    p: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
) -> Result<SMatrix<f64, N, M>> {
    let s = symmetrize(&(h * p * h.transpose() + r));
    if s.iter().all(|x| *x == 0.0) {
        return Ok(SMatrix::<f64, N, M>::zeros());
    }
    let s_inv = s.try_inverse().ok_or(NavError::FilterDivergence { condition: f64::INFINITY })?;
    let condition = one_norm(&s) * one_norm(&s_inv);
    if !condition.is_finite() || condition > MAX_INNOVATION_CONDITION {
        return Err(NavError::FilterDivergence { condition });
    }
    Ok(p * h.transpose() * s_inv)
}

/// Measurement update: `dx = K dz`, `P = (I - K H) P`, symmetrized.
pub fn update<const N: usize, const M: usize>(
    dz: &SVector<f64, M>,
    k: &SMatrix<f64, N, M>,
    p: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
) -> (SVector<f64, N>, SMatrix<f64, N, N>) {
    let dx = k * dz;
    let p_new = (SMatrix::<f64, N, N>::identity() - k * h) * p;
    (dx, symmetrize(&p_new))
}

/// Joseph-form covariance update `(I-KH) P (I-KH)^T + K R K^T`.
pub fn update_joseph<const N: usize, const M: usize>(
    dz: &SVector<f64, M>,
    k: &SMatrix<f64, N, M>,
    p: &SMatrix<f64, N, N>,
    h: &SMatrix<f64, M, N>,
    r: &SMatrix<f64, M, M>,
) -> (SVector<f64, N>, SMatrix<f64, N, N>) {
    let dx = k * dz;
    let a = SMatrix::<f64, N, N>::identity() - k * h;
    let p_new = a * p * a.transpose() + k * r * k.transpose();
    (dx, symmetrize(&p_new))
}

/// Observation matrix and residual `z_hat - z` for an aiding measurement.
pub fn measurement_model(meas: &AidingMeasurement, state: &NavState) -> (Matrix3x12, Vector3<f64>) {
    let mut h = Matrix3x12::zeros();
    match meas.kind {
        AidingKind::Gnss => {
            h.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
            (h, state.velocity - meas.velocity)
        }
        AidingKind::Dvl => {
            let t_nb = state.attitude.nav_to_body();
            h.fixed_view_mut::<3, 3>(0, 0).copy_from(&t_nb);
            h.fixed_view_mut::<3, 3>(0, 3).copy_from(&(t_nb * skew(&state.velocity)));
            (h, t_nb * state.velocity - meas.velocity)
        }
    }
}

/// Small-angle limit above which an attitude correction is reported as large.
pub const LARGE_ANGLE_CORRECTION: f64 = 0.5;

/// Feed an estimated error state back into the navigation solution.
///
/// Returns the corrected state and whether the attitude correction exceeded
/// the small-angle limit.
pub fn inject_errors(state: &NavState, dx: &ErrorState) -> (NavState, bool) {
    let de = dx.attitude();
    let large = de.norm() > LARGE_ANGLE_CORRECTION;
    if large {
        log::debug!("large attitude correction {:.3} rad", de.norm());
    }
    let corrected = (Matrix3::identity() - skew(&de)) * state.attitude.matrix();
    let out = NavState {
        position: state.position,
        velocity: state.velocity - dx.velocity(),
        attitude: BodyToNavDcm::orthonormalized(corrected),
        accel_bias: state.accel_bias + dx.accel_bias(),
        gyro_bias: state.gyro_bias + dx.gyro_bias(),
    };
    (out, large)
}

/// Initial error state and covariance: `(0, Q^d)`.
pub fn init_filter(qd: &Matrix12) -> (ErrorState, Covariance12) {
    (ErrorState::zeros(), *qd)
}

/// Result of a covariance/attitude health check.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HealthReport {
    pub checks: u64,
    pub symmetry_violations: u64,
    pub psd_violations: u64,
    pub orthonormality_violations: u64,
    pub worst_symmetry: f64,
    pub worst_orthonormality: f64,
}

impl HealthReport {
    pub fn violations(&self) -> u64 {
        self.symmetry_violations + self.psd_violations + self.orthonormality_violations
    }

    pub fn merge(&mut self, other: &HealthReport) {
        self.checks += other.checks;
        self.symmetry_violations += other.symmetry_violations;
        self.psd_violations += other.psd_violations;
        self.orthonormality_violations += other.orthonormality_violations;
        self.worst_symmetry = self.worst_symmetry.max(other.worst_symmetry);
        self.worst_orthonormality = self.worst_orthonormality.max(other.worst_orthonormality);
    }

    pub fn check(&mut self, p: &Covariance12, attitude: &BodyToNavDcm) {
        self.checks += 1;
        let asym = relative_asymmetry(p);
        self.worst_symmetry = self.worst_symmetry.max(asym);
        if asym > 1e-10 {
            self.symmetry_violations += 1;
        }
        if !is_psd(p, 1e-12) {
            self.psd_violations += 1;
        }
        let ortho = attitude.orthonormality_error();
        self.worst_orthonormality = self.worst_orthonormality.max(ortho);
        if ortho > ORTHONORMALITY_TOL {
            self.orthonormality_violations += 1;
        }
    }
}

/// `||P - P^T||_F / ||P||_F` (zero for the zero matrix).
pub fn relative_asymmetry<const N: usize>(p: &SMatrix<f64, N, N>) -> f64 {
    let n = p.norm();
    if n == 0.0 {
        return 0.0;
    }
    (p - p.transpose()).norm() / n
}

/// True when the smallest eigenvalue of `p` is at least `-tol`.
pub fn is_psd<const N: usize>(p: &SMatrix<f64, N, N>, tol: f64) -> bool {
    let shifted = symmetrize(p) + SMatrix::<f64, N, N>::identity() * tol;
    shifted.cholesky().is_some() || min_eigenvalue(p) >= -tol
}

pub fn min_eigenvalue<const N: usize>(p: &SMatrix<f64, N, N>) -> f64 {
    let s = symmetrize(p);
    nalgebra::DMatrix::from_column_slice(N, N, s.as_slice())
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Filter configuration, immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub process: ProcessNoiseConfig,
    pub measurement: MeasurementNoiseConfig,
    pub joseph: bool,
}

/// Error-state filter bound to one navigation run.
#[derive(Debug, Clone)]
pub struct ErrorStateEkf {
    config: FilterConfig,
    qc: Matrix12,
    r: Matrix3<f64>,
    p: Covariance12,
}

impl ErrorStateEkf {
    /// Start with `P_0 = Q^d` evaluated at the initial attitude and step size.
    pub fn new(config: FilterConfig, attitude: &BodyToNavDcm, dt: f64) -> Result<Self> {
        config.process.validate()?;
        config.measurement.validate()?;
        let qc = config.process.continuous();
        let qd = discrete_Q(&build_G(attitude), &qc, dt);
        let (_, p) = init_filter(&qd);
        Ok(Self { config, qc, r: config.measurement.matrix(), p })
    }

    pub fn covariance(&self) -> &Covariance12 {
        &self.p
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Velocity block trace.
    pub fn velocity_trace(&self) -> f64 {
        self.p[(0, 0)] + self.p[(1, 1)] + self.p[(2, 2)]
    }

    /// Covariance prediction over one mechanization step taken from `state`
    /// with the bias-corrected body specific force `f_b`.
    pub fn propagate(&mut self, state: &NavState, f_b: &Vector3<f64>, dt: f64) -> Result<()> {
        let f_n = state.attitude.matrix() * f_b;
        let f = build_F(state, &f_n)?;
        let phi = transition(&f, dt);
        let qd = discrete_Q(&build_G(&state.attitude), &self.qc, dt);
        self.p = predict(&self.p, &phi, &qd);
        Ok(())
    }

    /// Measurement update followed by closed-loop feedback into `state`.
    pub fn correct(&mut self, state: &NavState, meas: &AidingMeasurement) -> Result<NavState> {
        let (h, dz) = measurement_model(meas, state);
        let k = gain(&self.p, &h, &self.r)?;
        let (dx, p) = if self.config.joseph {
            update_joseph(&dz, &k, &self.p, &h, &self.r)
        } else {
            update(&dz, &k, &self.p, &h)
        };
        self.p = p;
        Ok(inject_errors(state, &ErrorState(dx)).0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strapdown::{propagate_nav, EulerAngles, GeodeticPosition, ImuSample};
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, SMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_at(lat_deg: f64, v: Vector3<f64>, e: EulerAngles) -> NavState {
        NavState::new(GeodeticPosition::from_degrees(lat_deg, 34.0, 5.0), v, BodyToNavDcm::from_euler(&e))
    }

    fn random_matrix<const N: usize>(rng: &mut ChaCha8Rng) -> SMatrix<f64, N, N> {
        SMatrix::<f64, N, N>::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    fn random_psd<const N: usize>(rng: &mut ChaCha8Rng) -> SMatrix<f64, N, N> {
        let a = random_matrix::<N>(rng);
        a * a.transpose()
    }

    #[test]
    fn f_matrix_specific_force_block() {
        let s = state_at(0.0, Vector3::zeros(), EulerAngles::default());
        let f = build_F(&s, &Vector3::new(0.0, 0.0, -9.8)).unwrap();
        let want = Matrix3::new(0.0, -9.8, 0.0, 9.8, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(f.fixed_view::<3, 3>(0, 3).into_owned(), want);
    }

    #[test]
    fn f_matrix_structure() {
        let s = state_at(32.0, Vector3::new(5.0, -1.0, 0.2), EulerAngles::new(0.1, 0.2, 0.3));
        let f = build_F(&s, &Vector3::new(0.1, 0.2, -9.8)).unwrap();
        for r in 6..12 {
            for c in 0..12 {
                assert_eq!(f[(r, c)], 0.0);
            }
        }
        assert_eq!(f.fixed_view::<3, 3>(0, 6).into_owned(), *s.attitude.matrix());
        assert_eq!(f.fixed_view::<3, 3>(3, 9).into_owned(), *s.attitude.matrix());
    }

    #[test]
    fn f_matrix_rest_at_equator_uses_earth_rate_only() {
        let mut s = state_at(0.0, Vector3::zeros(), EulerAngles::default());
        s.position.altitude = 0.0;
        let f = build_F(&s, &Vector3::new(0.0, 0.0, -9.78)).unwrap();
        let w = 7.292115e-5;
        let want = Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, w, 0.0, -w, 0.0);
        let got = f.fixed_view::<3, 3>(3, 3).into_owned();
        assert!((got - want).norm() < 1e-20);
    }

    // The linearized error dynamics must predict how a perturbed mechanization
    // diverges from the nominal one over a short horizon.
    #[test]
    fn f_matrix_matches_finite_difference_of_mechanization() {
        let s = state_at(32.0, Vector3::new(5.0, 2.0, 0.0), EulerAngles::new(0.05, -0.03, 0.7));
        let imu = ImuSample {
            time: 0.0,
            specific_force: Vector3::new(0.3, -0.2, -9.79),
            angular_rate: Vector3::new(0.001, -0.002, 0.05),
        };
        let dt = 1e-3;
        let f_n = s.attitude.matrix() * imu.specific_force;
        let f = build_F(&s, &f_n).unwrap();
        let nominal = propagate_nav(&s, &imu, dt).unwrap();

        let dx0 = ErrorState::from_parts(
            Vector3::new(1e-3, -2e-3, 5e-4),
            Vector3::new(2e-5, -1e-5, 3e-5),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let mut pert = s;
        pert.velocity += dx0.velocity();
        pert.attitude =
            BodyToNavDcm::orthonormalized((Matrix3::identity() + skew(&dx0.attitude())) * s.attitude.matrix());
        let pert_next = propagate_nav(&pert, &imu, dt).unwrap();

        let dv = pert_next.velocity - nominal.velocity;
        let e = pert_next.attitude.matrix() * nominal.attitude.matrix().transpose();
        let de = Vector3::new(e[(2, 1)] - e[(1, 2)], e[(0, 2)] - e[(2, 0)], e[(1, 0)] - e[(0, 1)]) * 0.5;

        let predicted = transition(&f, dt) * dx0.0;
        let pv: Vector3<f64> = predicted.fixed_rows::<3>(0).into();
        let pe: Vector3<f64> = predicted.fixed_rows::<3>(3).into();
        // agreement to second order in the perturbation size
        assert!((dv - pv).norm() < 1e-8, "dv {dv:?} vs {pv:?}");
        assert!((de - pe).norm() < 1e-10, "de {de:?} vs {pe:?}");
    }

    // Bias residual columns: a true accelerometer bias that the filter has not
    // yet estimated makes the velocity error grow along T b.
    #[test]
    fn bias_columns_match_mechanization() {
        let s = state_at(32.0, Vector3::new(3.0, 0.0, 0.0), EulerAngles::new(0.0, 0.0, 0.4));
        let imu = ImuSample {
            time: 0.0,
            specific_force: Vector3::new(0.0, 0.0, -9.79),
            angular_rate: Vector3::new(0.0, 0.0, 0.01),
        };
        let dt = 1e-3;
        let b = Vector3::new(0.01, -0.02, 0.005);
        // estimate carries -b: residual (true minus estimate) is +b for a zero true bias
        let mut biased = s;
        biased.accel_bias = -b;
        let a = propagate_nav(&s, &imu, dt).unwrap();
        let c = propagate_nav(&biased, &imu, dt).unwrap();
        let f = build_F(&s, &(s.attitude.matrix() * imu.specific_force)).unwrap();
        let dx = ErrorState::from_parts(Vector3::zeros(), Vector3::zeros(), b, Vector3::zeros());
        let predicted: Vector3<f64> = (f * dx.0 * dt).fixed_rows::<3>(0).into();
        assert!(((c.velocity - a.velocity) - predicted).norm() < 1e-15);
    }

    #[test]
    fn g_matrix_properties() {
        assert_eq!(build_G(&BodyToNavDcm::identity()), Matrix12::identity());
        let t = BodyToNavDcm::from_euler(&EulerAngles::new(0.4, -0.3, 2.0));
        let g = build_G(&t);
        let qc =
            ProcessNoiseConfig { accel_var: 4e-4, gyro_var: 4e-6, accel_bias_rw_var: 1e-8, gyro_bias_rw_var: 1e-10 }
                .continuous();
        let conj = g * qc * g.transpose();
        assert!((conj - qc).norm() < 1e-18);
        assert_eq!(g.fixed_view::<3, 3>(0, 3).into_owned(), Matrix3::zeros());
        assert_eq!(g.fixed_view::<3, 3>(6, 0).into_owned(), Matrix3::zeros());
    }

    #[test]
    fn transition_and_discrete_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_matrix::<12>(&mut rng);
        assert_eq!(transition(&Matrix12::zeros(), 0.5), Matrix12::identity());
        assert_eq!(transition(&f, 0.0), Matrix12::identity());
        let phi = transition(&f, 0.01);
        for r in 0..12 {
            for c in 0..12 {
                let i = if r == c { 1.0 } else { 0.0 };
                assert_eq!(phi[(r, c)], i + 0.01 * f[(r, c)]);
            }
        }
        let qc = ProcessNoiseConfig::new(0.02f64.powi(2), 0.002f64.powi(2)).continuous();
        let g = build_G(&BodyToNavDcm::identity());
        assert_eq!(discrete_Q(&g, &qc, 0.0), Matrix12::zeros());
        assert_eq!(discrete_Q(&g, &qc, 0.01), qc * 0.01);
        let t = BodyToNavDcm::from_euler(&EulerAngles::new(0.1, 0.2, 0.3));
        let a = discrete_Q(&build_G(&t), &qc, 0.01);
        let b = discrete_Q(&build_G(&t), &qc, 0.02);
        assert!((b - a * 2.0).norm() < 1e-20);
    }

    #[test]
    fn scalar_predict_gain_update() {
        let p = SMatrix::<f64, 1, 1>::new(1.0);
        let phi = SMatrix::<f64, 1, 1>::new(2.0);
        let q = SMatrix::<f64, 1, 1>::new(3.0);
        assert_eq!(predict(&p, &phi, &q)[0], 7.0);
        let h = SMatrix::<f64, 1, 1>::new(1.0);
        let k = gain(&p, &h, &SMatrix::<f64, 1, 1>::new(1.0)).unwrap();
        assert_eq!(k[0], 0.5);
        let (dx, p1) = update(&SVector::<f64, 1>::new(2.0), &k, &p, &h);
        assert_eq!(dx[0], 1.0);
        assert_eq!(p1[0], 0.5);
        let k = gain(&p, &h, &SMatrix::<f64, 1, 1>::new(1e12)).unwrap();
        assert!(k.norm() < 1e-9);
    }

    #[test]
    fn predict_identity_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_psd::<12>(&mut rng);
        assert_eq!(predict(&p, &Matrix12::identity(), &Matrix12::zeros()), symmetrize(&p));
        for _ in 0..20 {
            let p = random_psd::<12>(&mut rng);
            let phi = random_matrix::<12>(&mut rng);
            let q = random_psd::<12>(&mut rng);
            assert!(min_eigenvalue(&predict(&p, &phi, &q)) >= -1e-12);
        }
    }

    #[test]
    fn gain_is_zero_without_uncertainty() {
        let h = Matrix3x12::identity();
        let k = gain(&Matrix12::zeros(), &h, &Matrix3::zeros()).unwrap();
        assert_eq!(k, SMatrix::<f64, 12, 3>::zeros());
    }

    #[test]
    fn gain_rejects_singular_innovation() {
        let p = Matrix12::zeros();
        let mut h = Matrix3x12::zeros();
        h[(0, 0)] = 1.0;
        let r = Matrix3::from_diagonal(&Vector3::new(1.0, 1e-14, 1.0));
        assert!(matches!(gain(&p, &h, &r), Err(NavError::FilterDivergence { .. })));
    }

    #[test]
    fn gnss_gain_matches_reduced_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pv = random_psd::<3>(&mut rng) + Matrix3::identity() * 0.1;
        let rest = random_psd::<9>(&mut rng);
        let mut p = Matrix12::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&pv);
        p.fixed_view_mut::<9, 9>(3, 3).copy_from(&rest);
        let s = state_at(32.0, Vector3::zeros(), EulerAngles::default());
        let meas = AidingMeasurement { time: 0.0, kind: AidingKind::Gnss, velocity: Vector3::zeros() };
        let (h, _) = measurement_model(&meas, &s);
        let r = Matrix3::identity() * 0.004f64.powi(2);
        let k = gain(&p, &h, &r).unwrap();
        let k3 = pv * (pv + r).try_inverse().unwrap();
        assert!((k.fixed_view::<3, 3>(0, 0).into_owned() - k3).norm() < 1e-12);
        assert!(k.fixed_view::<9, 3>(3, 0).norm() < 1e-15);
    }

    // Constant-velocity scalar model observed directly: the filter with an
    // uninformative prior must reproduce the batch least-squares estimate.
    #[test]
    fn scalar_reduction_matches_batch_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = 1.7;
        let r = 0.3;
        let zs: Vec<f64> = (0..25).map(|_| truth + rng.random_range(-1.0..1.0)).collect();
        let mut x = 0.0;
        let mut p = SMatrix::<f64, 1, 1>::new(1e4);
        let h = SMatrix::<f64, 1, 1>::new(1.0);
        let rm = SMatrix::<f64, 1, 1>::new(r);
        for z in &zs {
            p = predict(&p, &SMatrix::<f64, 1, 1>::identity(), &SMatrix::<f64, 1, 1>::zeros());
            let k = gain(&p, &h, &rm).unwrap();
            let (dx, p1) = update(&SVector::<f64, 1>::new(x - z), &k, &p, &h);
            x -= dx[0];
            p = p1;
        }
        let n = zs.len() as f64;
        let batch = zs.iter().sum::<f64>() / n;
        // prior weight 1/1e4 against n/r of data
        let prior_bias = (batch - 0.0) * (1.0 / 1e4) / (1.0 / 1e4 + n / r);
        assert!((x - (batch - prior_bias)).abs() < 1e-9);
        assert!((p[0] - 1.0 / (1.0 / 1e4 + n / r)).abs() < 1e-9);
    }

    #[test]
    fn update_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_psd::<12>(&mut rng);
        let s = state_at(10.0, Vector3::new(1.0, 2.0, 0.0), EulerAngles::default());
        let meas = AidingMeasurement { time: 0.0, kind: AidingKind::Gnss, velocity: Vector3::zeros() };
        let (h, _) = measurement_model(&meas, &s);
        let k = gain(&p, &h, &Matrix3::identity()).unwrap();
        let (dx, p1) = update(&Vector3::zeros(), &k, &p, &h);
        assert_eq!(dx, Vector12::zeros());
        assert_eq!(p1, symmetrize(&((Matrix12::identity() - k * h) * p)));
        let (_, p2) = update(&Vector3::new(1.0, 2.0, 3.0), &SMatrix::<f64, 12, 3>::zeros(), &p, &h);
        assert_eq!(p2, symmetrize(&p));
    }

    #[test]
    fn gnss_innovation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_psd::<12>(&mut rng);
        let s = state_at(10.0, Vector3::new(1.0, 2.0, 0.0), EulerAngles::default());
        let meas = AidingMeasurement { time: 0.0, kind: AidingKind::Gnss, velocity: Vector3::new(0.9, 2.2, 0.05) };
        let (h, dz) = measurement_model(&meas, &s);
        let k = gain(&p, &h, &(Matrix3::identity() * 0.01)).unwrap();
        let (dx, _) = update(&dz, &k, &p, &h);
        let lhs = (Matrix3::identity() - h * k) * dz;
        let rhs = dz - h * dx;
        assert!((lhs - rhs).norm() <= 1e-12);
    }

    #[test]
    fn joseph_matches_standard_form_at_optimal_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_psd::<12>(&mut rng) + Matrix12::identity() * 0.01;
        let s = state_at(32.0, Vector3::new(1.0, 0.5, 0.0), EulerAngles::new(0.1, 0.0, 1.0));
        let meas = AidingMeasurement { time: 0.0, kind: AidingKind::Dvl, velocity: Vector3::zeros() };
        let (h, dz) = measurement_model(&meas, &s);
        let r = Matrix3::identity() * 0.004;
        let k = gain(&p, &h, &r).unwrap();
        let (_, a) = update(&dz, &k, &p, &h);
        let (_, b) = update_joseph(&dz, &k, &p, &h, &r);
        assert!((a - b).norm() < 1e-9 * p.norm());
    }

    #[test]
    fn measurement_models() {
        let s = state_at(32.0, Vector3::new(1.0, 2.0, 3.0), EulerAngles::default());
        let gnss = AidingMeasurement { time: 0.0, kind: AidingKind::Gnss, velocity: Vector3::zeros() };
        let (h, dz) = measurement_model(&gnss, &s);
        assert_eq!(h.fixed_view::<3, 3>(0, 0).into_owned(), Matrix3::identity());
        assert_eq!(h.fixed_view::<3, 9>(0, 3).into_owned(), SMatrix::<f64, 3, 9>::zeros());
        assert_eq!(dz, Vector3::new(1.0, 2.0, 3.0));

        let dvl = AidingMeasurement { time: 0.0, kind: AidingKind::Dvl, velocity: Vector3::zeros() };
        let rest = state_at(32.0, Vector3::zeros(), EulerAngles::default());
        let (h, _) = measurement_model(&dvl, &rest);
        let mut want = Matrix3x12::zeros();
        want.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
        assert_eq!(h, want);

        let (h, _) = measurement_model(&dvl, &s);
        let block = h.fixed_view::<3, 3>(0, 3).into_owned();
        let v_cross = Matrix3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(block, v_cross);
    }

    // First-order consistency of the DVL observation matrix with the
    // nonlinear prediction T_hat^T v_hat under the error convention above.
    #[test]
    fn dvl_matrix_matches_nonlinear_measurement() {
        let truth = state_at(32.0, Vector3::new(1.2, -0.4, 0.1), EulerAngles::new(0.05, 0.1, 0.8));
        let dv = Vector3::new(2e-4, -1e-4, 3e-4);
        let de = Vector3::new(1e-4, -2e-4, 1.5e-4);
        let mut est = truth;
        est.velocity += dv;
        est.attitude = BodyToNavDcm::orthonormalized((Matrix3::identity() + skew(&de)) * truth.attitude.matrix());
        let z = truth.attitude.nav_to_body() * truth.velocity;
        let meas = AidingMeasurement { time: 0.0, kind: AidingKind::Dvl, velocity: z };
        let (h, dz) = measurement_model(&meas, &est);
        let dx = ErrorState::from_parts(dv, de, Vector3::zeros(), Vector3::zeros());
        assert!((h * dx.0 - dz).norm() < 1e-7);
    }

    #[test]
    fn inject_errors_cases() {
        let s = state_at(32.0, Vector3::new(5.0, 0.0, 0.0), EulerAngles::new(0.0, 0.0, 0.3));
        let (out, large) = inject_errors(&s, &ErrorState::zeros());
        assert!(!large);
        assert_eq!(out.velocity, s.velocity);
        assert!((out.attitude.matrix() - s.attitude.matrix()).norm() < 1e-15);

        let dx =
            ErrorState::from_parts(Vector3::new(0.1, 0.0, 0.0), Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
        let (out, _) = inject_errors(&s, &dx);
        assert_eq!(out.velocity, Vector3::new(4.9, 0.0, 0.0));

        // an estimated error of +1e-3 rad about down means the estimate is rotated
        // by +1e-3 in yaw; removing it lowers the yaw
        let dx =
            ErrorState::from_parts(Vector3::zeros(), Vector3::new(0.0, 0.0, 1e-3), Vector3::zeros(), Vector3::zeros());
        let (out, _) = inject_errors(&s, &dx);
        let exact = Rotation3::from_axis_angle(&Vector3::z_axis(), -1e-3).matrix() * s.attitude.matrix();
        assert!((out.attitude.matrix() - exact).norm() < 1e-6);
        assert_relative_eq!(out.euler().yaw, 0.3 - 1e-3, epsilon = 1e-6);
        assert!(out.attitude.orthonormality_error() < ORTHONORMALITY_TOL);

        let dx = ErrorState::from_parts(
            Vector3::zeros(),
            Vector3::zeros(),
            Vector3::new(1e-3, 0.0, 0.0),
            Vector3::new(0.0, 2e-4, 0.0),
        );
        let (out, _) = inject_errors(&s, &dx);
        assert_eq!(out.accel_bias, Vector3::new(1e-3, 0.0, 0.0));
        assert_eq!(out.gyro_bias, Vector3::new(0.0, 2e-4, 0.0));

        let dx =
            ErrorState::from_parts(Vector3::zeros(), Vector3::new(0.6, 0.0, 0.0), Vector3::zeros(), Vector3::zeros());
        let (out, large) = inject_errors(&s, &dx);
        assert!(large);
        assert!(out.attitude.orthonormality_error() < ORTHONORMALITY_TOL);
    }

    #[test]
    fn init_filter_cases() {
        let (x, p) = init_filter(&Matrix12::zeros());
        assert_eq!(x, ErrorState::zeros());
        assert_eq!(p, Matrix12::zeros());
        let qc = ProcessNoiseConfig::new(1e-4, 1e-6).continuous();
        let qd = discrete_Q(&build_G(&BodyToNavDcm::identity()), &qc, 0.01);
        let (_, p) = init_filter(&qd);
        assert_eq!(p, Matrix12::from_diagonal(&p.diagonal()));
    }

    #[test]
    fn trace_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = state_at(32.0, Vector3::new(5.0, 0.0, 0.0), EulerAngles::new(0.0, 0.0, 0.2));
        let config = FilterConfig {
            process: ProcessNoiseConfig::new(4e-4, 4e-6),
            measurement: MeasurementNoiseConfig::isotropic(1.6e-5),
            joseph: false,
        };
        let mut ekf = ErrorStateEkf::new(config, &s.attitude, 0.01).unwrap();
        for _ in 0..10 {
            let before = ekf.velocity_trace();
            ekf.propagate(&s, &Vector3::new(0.0, 0.0, -9.79), 0.01).unwrap();
            assert!(ekf.velocity_trace() >= before);
        }
        let before = ekf.velocity_trace();
        let meas = AidingMeasurement {
            time: 0.0,
            kind: AidingKind::Gnss,
            velocity: s.velocity + Vector3::new(rng.random_range(-0.01..0.01), 0.0, 0.0),
        };
        ekf.correct(&s, &meas).unwrap();
        assert!(ekf.velocity_trace() <= before);
    }

    proptest::proptest! {
        #[test]
        fn update_keeps_covariance_healthy(seed in 0u64..500, r in 1e-6..1.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_psd::<12>(&mut rng) * 1e-2;
            let s = state_at(20.0, Vector3::new(2.0, -1.0, 0.0), EulerAngles::new(0.1, 0.05, 1.3));
            let kind = if seed % 2 == 0 { AidingKind::Gnss } else { AidingKind::Dvl };
            let meas = AidingMeasurement { time: 0.0, kind, velocity: Vector3::new(2.0, -1.0, 0.0) };
            let (h, dz) = measurement_model(&meas, &s);
            let k = gain(&p, &h, &(Matrix3::identity() * r)).unwrap();
            let (_, p1) = update(&dz, &k, &p, &h);
            proptest::prop_assert!(relative_asymmetry(&p1) <= 1e-10);
            proptest::prop_assert!(min_eigenvalue(&p1) >= -1e-12 * (1.0 + p.norm()));
        }
    }
}
