use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix6, Point2, Point3, Rotation3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_camera_point, CameraConfig, LandmarkModel, RigidPose};

use super::{KeypointSet, ALL_KEYPOINTS, NUM_KEYPOINTS};

/// RMS reprojection error (px) above which the drop-one search runs.
pub const DEFAULT_REPROJ_THRESHOLD: f64 = 2.0;

/// Rotational freedom given to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseModel {
    /// Unconstrained rotation: six parameters.
    #[default]
    Full,
    /// The landmark stands upright in a level camera frame and its keypoint
    /// plane faces the camera, so rotation follows from the bearing and only
    /// the translation is solved for.
    Upright,
}

impl std::str::FromStr for PoseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "upright" => Ok(Self::Upright),
            other => Err(Error::domain(format!("unknown pose model '{other}' (full|upright)"))),
        }
    }
}

/// Rotation of an upright landmark at camera-frame position `t` whose
/// keypoint plane faces the camera.
pub fn upright_rotation(t: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), t.x.atan2(t.z))
        * Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpOptions {
    pub model: PoseModel,
    pub max_iterations: usize,
    /// Converged once the parameter update norm drops below this.
    pub step_tolerance: f64,
    /// Also converged once an accepted step lowers the cost by less than
    /// this fraction.
    pub cost_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            model: PoseModel::Full,
            max_iterations: 100,
            step_tolerance: 1e-10,
            cost_tolerance: 1e-12,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    pub pose: RigidPose,
    /// RMS reprojection error over the subset (px).
    pub rms: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustPnp {
    pub pose: RigidPose,
    pub rms: f64,
    /// Keypoint indices used by the returned solve, ascending.
    pub subset: Vec<usize>,
}

fn validate_subset(subset: &[usize], lm: &LandmarkModel) -> Result<()> {
    if subset.len() < 4 {
        return Err(Error::domain(format!(
            "PnP needs at least 4 keypoints, got {}",
            subset.len()
        )));
    }
    let mut seen = [false; NUM_KEYPOINTS];
    for &i in subset {
        if i >= NUM_KEYPOINTS {
            return Err(Error::domain(format!("keypoint index {i} out of range")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::domain(format!("keypoint index {i} repeated")));
        }
    }
    // All model points on one line leave rotation about that line unobservable.
    let pts: Vec<Point3<f64>> = subset.iter().map(|&i| lm.keypoints()[i]).collect();
    let dir = pts
        .iter()
        .map(|p| p - pts[0])
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("non-empty");
    let spread = pts
        .iter()
        .map(|p| (p - pts[0]).cross(&dir).norm() / dir.norm())
        .fold(0.0, f64::max);
    if spread < 1e-9 * lm.height() {
        return Err(Error::domain("keypoint subset is collinear in the landmark model"));
    }
    Ok(())
}

/// RMS pixel distance between projected model keypoints and observations.
pub fn pnp_reprojection_error(
    pose: &RigidPose,
    kps: &KeypointSet,
    subset: &[usize],
    lm: &LandmarkModel,
    cam: &CameraConfig,
) -> Result<f64> {
    if subset.is_empty() {
        return Err(Error::domain("empty keypoint subset"));
    }
    let mut sq = 0.0;
    for &i in subset {
        let p = project_camera_point(cam, &pose.transform(&lm.keypoints()[i]))?;
        sq += (p - kps.points[i]).norm_squared();
    }
    Ok((sq / subset.len() as f64).sqrt())
}

/// Initial pose from a 2D similarity fit of the planar model silhouette.
///
/// The model lies in its z = 0 plane, so a fronto-parallel pose maps it to
/// the image by a scale, an in-plane rotation and a possible vertical flip.
/// Both flips are fitted and the better one kept; depth follows from the
/// scale as `f / s`.
fn initial_pose(
    kps: &KeypointSet,
    subset: &[usize],
    lm: &LandmarkModel,
    cam: &CameraConfig,
) -> Result<RigidPose> {
    let n = subset.len() as f64;
    let obs: Vec<Vector2<f64>> = subset.iter().map(|&i| kps.points[i].coords).collect();
    let obs_mean = obs.iter().sum::<Vector2<f64>>() / n;
    let model: Vec<Vector3<f64>> = subset.iter().map(|&i| lm.keypoints()[i].coords).collect();
    let model_mean = model.iter().sum::<Vector3<f64>>() / n;

    let mut best: Option<(f64, RigidPose)> = None;
    for flip in [Rotation3::identity(), Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)] {
        let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
        for (m, o) in model.iter().zip(&obs) {
            let a = (flip * (m - model_mean)).xy();
            let b = o - obs_mean;
            dot += a.dot(&b);
            cross += a.x * b.y - a.y * b.x;
            norm += a.norm_squared();
        }
        let theta = cross.atan2(dot);
        let scale = (dot * dot + cross * cross).sqrt() / norm; // px per meter
        if !(scale > 0.0) {
            continue;
        }
        let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), theta) * flip;
        let depth = cam.focal_px() / scale;
        let center = crate::geometry::back_project(cam, &Point2::from(obs_mean), depth);
        let translation = center.coords - rotation * model_mean;
        let pose = RigidPose::new(rotation, translation);
        if let Ok(err) = pnp_reprojection_error(&pose, kps, subset, lm, cam) {
            if best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, pose));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::domain("degenerate keypoint configuration: zero image extent"))
}

struct Normal {
    jtj: Matrix6<f64>,
    jtr: Vector6<f64>,
    cost: f64,
}

fn normal_equations(
    pose: &RigidPose,
    kps: &KeypointSet,
    subset: &[usize],
    lm: &LandmarkModel,
    cam: &CameraConfig,
) -> Option<Normal> {
    let f = cam.focal_px();
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    let mut cost = 0.0;
    for &i in subset {
        let q = pose.rotation * lm.keypoints()[i].coords;
        let p = q + pose.translation;
        if !(p.z > 0.0) {
            return None;
        }
        let proj = project_camera_point(cam, &Point3::from(p)).ok()?;
        let r = proj - kps.points[i];
        cost += r.norm_squared();

        let iz = 1.0 / p.z;
        let d_proj = Matrix2x3::new(
            f * iz, 0.0, -f * p.x * iz * iz,
            0.0, f * iz, -f * p.y * iz * iz,
        );
        // Left-multiplied rotation update: d(p)/d(omega) = -[q]x.
        let j_rot = d_proj * -q.cross_matrix();
        let mut j = nalgebra::Matrix2x6::zeros();
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&j_rot);
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_proj);
        jtj += j.transpose() * j;
        jtr += j.transpose() * r;
    }
    Some(Normal { jtj, jtr, cost })
}

/// Maps the reduced parameter vector onto the six-parameter
/// `[omega, dt]` update at `pose`.
fn parameter_map(model: PoseModel, pose: &RigidPose) -> DMatrix<f64> {
    match model {
        PoseModel::Full => DMatrix::identity(6, 6),
        PoseModel::Upright => {
            // Translation moves the bearing, which turns the landmark about y.
            let t = pose.translation;
            let r2 = t.x * t.x + t.z * t.z;
            let mut m = DMatrix::zeros(6, 3);
            m[(1, 0)] = t.z / r2;
            m[(1, 2)] = -t.x / r2;
            for k in 0..3 {
                m[(3 + k, k)] = 1.0;
            }
            m
        }
    }
}

fn apply_step(model: PoseModel, pose: &RigidPose, step: &DVector<f64>) -> RigidPose {
    match model {
        PoseModel::Full => {
            let omega = Vector3::new(step[0], step[1], step[2]);
            let dt = Vector3::new(step[3], step[4], step[5]);
            let mut rotation = Rotation3::new(omega) * pose.rotation;
            rotation.renormalize();
            RigidPose::new(rotation, pose.translation + dt)
        }
        PoseModel::Upright => {
            let t = pose.translation + Vector3::new(step[0], step[1], step[2]);
            RigidPose::new(upright_rotation(&t), t)
        }
    }
}

/// Damped Gauss-Newton (Levenberg-Marquardt) refinement of the pose.
pub fn pnp_solve_with(
    kps: &KeypointSet,
    subset: &[usize],
    lm: &LandmarkModel,
    cam: &CameraConfig,
    init: Option<RigidPose>,
    opts: &PnpOptions,
) -> Result<PnpSolution> {
    validate_subset(subset, lm)?;
    let mut pose = match init {
        Some(p) => p,
        None => initial_pose(kps, subset, lm, cam)?,
    };
    if opts.model == PoseModel::Upright {
        pose = RigidPose::new(upright_rotation(&pose.translation), pose.translation);
    }
    let mut current = normal_equations(&pose, kps, subset, lm, cam)
        .ok_or_else(|| Error::domain("initial pose places keypoints behind the camera"))?;
    let mut lambda = opts.initial_damping;
    let n = subset.len() as f64;

    for iteration in 1..=opts.max_iterations {
        let m = parameter_map(opts.model, &pose);
        let jtj = m.transpose() * DMatrix::from_column_slice(6, 6, current.jtj.as_slice()) * &m;
        let jtr = m.transpose() * DVector::from_column_slice(current.jtr.as_slice());
        let mut damped = jtj.clone();
        for k in 0..jtj.nrows() {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            continue;
        };
        let step = -chol.solve(&jtr);
        let candidate = apply_step(opts.model, &pose, &step);
        let step_norm = step.norm();
        let mut stalled = false;
        match normal_equations(&candidate, kps, subset, lm, cam) {
            Some(next) if next.cost <= current.cost => {
                stalled = current.cost - next.cost <= opts.cost_tolerance * current.cost;
                pose = candidate;
                current = next;
                lambda = (lambda / 10.0).max(1e-12);
            }
            _ => lambda *= 10.0,
        }
        if step_norm < opts.step_tolerance || stalled || current.cost == 0.0 {
            return Ok(PnpSolution {
                pose,
                rms: (current.cost / n).sqrt(),
                iterations: iteration,
            });
        }
    }
    Err(Error::Optimization {
        iterations: opts.max_iterations,
        residual: (current.cost / n).sqrt(),
    })
}

/// Pose minimising reprojection error over `subset`, with default options.
pub fn pnp_solve(
    kps: &KeypointSet,
    subset: &[usize],
    lm: &LandmarkModel,
    cam: &CameraConfig,
    init: Option<RigidPose>,
) -> Result<RigidPose> {
    pnp_solve_with(kps, subset, lm, cam, init, &PnpOptions::default()).map(|s| s.pose)
}

/// Seven-point PnP, falling back to the best leave-one-out subset when the
/// full fit's RMS error exceeds `reproj_threshold` or the full fit does not
/// converge.
///
/// Never returns a solution with higher RMS than the seven-point solve.
/// Equal errors resolve to the subset that dropped the smallest index.
pub fn robust_pnp(
    kps: &KeypointSet,
    lm: &LandmarkModel,
    cam: &CameraConfig,
    reproj_threshold: f64,
) -> Result<RobustPnp> {
    robust_pnp_with(kps, lm, cam, reproj_threshold, &PnpOptions::default())
}

/// [`robust_pnp`] with explicit solver options.
pub fn robust_pnp_with(
    kps: &KeypointSet,
    lm: &LandmarkModel,
    cam: &CameraConfig,
    reproj_threshold: f64,
    opts: &PnpOptions,
) -> Result<RobustPnp> {
    let opts = *opts;
    // A seven-point fit that fails to converge is treated like one above the
    // threshold: an outlier is the usual cause.
    let full = match pnp_solve_with(kps, &ALL_KEYPOINTS, lm, cam, None, &opts) {
        Ok(sol) => Some(RobustPnp {
            pose: sol.pose,
            rms: sol.rms,
            subset: ALL_KEYPOINTS.to_vec(),
        }),
        Err(Error::Optimization { .. }) => None,
        Err(e) => return Err(e),
    };
    if let Some(full) = full.as_ref().filter(|f| f.rms <= reproj_threshold) {
        return Ok(full.clone());
    }

    let mut candidate: Option<RobustPnp> = None;
    let mut last_err = None;
    for removed in 0..NUM_KEYPOINTS {
        let subset: Vec<usize> = ALL_KEYPOINTS.iter().copied().filter(|&i| i != removed).collect();
        match pnp_solve_with(kps, &subset, lm, cam, None, &opts) {
            Ok(sol) => {
                if candidate.as_ref().is_none_or(|c| sol.rms < c.rms) {
                    candidate = Some(RobustPnp {
                        pose: sol.pose,
                        rms: sol.rms,
                        subset,
                    });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (full, candidate) {
        (Some(f), Some(c)) => Ok(if c.rms <= f.rms { c } else { f }),
        (Some(f), None) => Ok(f),
        (None, Some(c)) => Ok(c),
        (None, None) => Err(last_err.unwrap_or(Error::Optimization {
            iterations: opts.max_iterations,
            residual: f64::NAN,
        })),
    }
}

/// Camera-frame landmark position and its euclidean distance.
pub fn landmark_position(pose: &RigidPose) -> (Vector3<f64>, f64) {
    (pose.translation, pose.translation.norm())
}
