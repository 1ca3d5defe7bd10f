//! Geometric link model for a pair of vehicles.
//!
//! Two vehicles `A` and `B` start `d_t0` apart. Over one step `A` moves `d1`
//! at angle `alpha` measured from the directed line A->B, and `B` moves `d2`
//! at angle `beta` measured from B->A. Both displacements are taken on the
//! same side of the line AB. From this the separation at the end of the step
//! (`d_t1`), the residual range `r - d_t1`, and the link duration
//! `(r - d_t1) / v_r` follow.
//!
//! Two families of formulas are provided:
//!
//! * the cosine/sine-law construction through the cross distances
//!   `R1 = |A_t0 B_t1|` and `R2 = |B_t0 A_t1|` ([`displaced_distance_exact`]
//!   and [`displaced_distance_via_b`]), which is exact for any geometry;
//! * the per-case projection formulas ([`displaced_distance_case`]), which
//!   are evaluated verbatim and only kept for comparison.

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("angle {0}° outside the open interval (0°, 180°)")]
    AngleOutOfRange(f64),
    #[error("invalid step geometry: {0}")]
    InvalidGeometry(&'static str),
    #[error("sine-law argument {0} outside [-1, 1]")]
    GeometryInconsistent(f64),
    #[error("case {given:?} does not match angles (expected {expected:?})")]
    CaseMismatch { given: AngleCase, expected: AngleCase },
    #[error("link already broken: separation {d_t1} m exceeds range {range} m")]
    LinkAlreadyBroken { d_t1: f64, range: f64 },
    #[error("nodes start out of range: separation {separation} m exceeds range {range} m")]
    InitiallyOutOfRange { separation: f64, range: f64 },
    #[error("negative or non-finite input: {0}")]
    Domain(&'static str),
    #[error("path is empty")]
    EmptyPath,
    #[error("links {0} and {1} do not share an endpoint")]
    BrokenPath(usize, usize),
}

pub type Result<T> = std::result::Result<T, KinematicsError>;

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Velocity vector in meters per second.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity {
    pub vx: f64,
    pub vy: f64,
}

impl Velocity {
    pub const ZERO: Velocity = Velocity { vx: 0.0, vy: 0.0 };

    pub const fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

impl Sub for Velocity {
    type Output = Velocity;
    fn sub(self, rhs: Velocity) -> Velocity {
        Velocity::new(self.vx - rhs.vx, self.vy - rhs.vy)
    }
}

impl Mul<f64> for Velocity {
    type Output = Velocity;
    fn mul(self, k: f64) -> Velocity {
        Velocity::new(self.vx * k, self.vy * k)
    }
}

impl Add<Velocity> for Position {
    type Output = Position;
    fn add(self, v: Velocity) -> Position {
        Position::new(self.x + v.vx, self.y + v.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicState {
    pub position: Position,
    pub velocity: Velocity,
}

impl KinematicState {
    pub const fn new(position: Position, velocity: Velocity) -> Self {
        Self { position, velocity }
    }

    pub const fn stationary(position: Position) -> Self {
        Self::new(position, Velocity::ZERO)
    }

    /// Position after `t` seconds of constant-velocity motion.
    pub fn advance(&self, t: f64) -> Position {
        self.position + self.velocity * t
    }
}

/// One step of relative motion, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGeometry {
    pub d_t0: f64,
    pub d1: f64,
    pub d2: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl StepGeometry {
    pub fn new(d_t0: f64, d1: f64, alpha: f64, d2: f64, beta: f64) -> Result<Self> {
        if !(d_t0.is_finite() && d_t0 > 0.0) {
            return Err(KinematicsError::InvalidGeometry("d_t0 must be positive"));
        }
        if !(d1.is_finite() && d1 >= 0.0 && d2.is_finite() && d2 >= 0.0) {
            return Err(KinematicsError::InvalidGeometry(
                "displacements must be non-negative",
            ));
        }
        check_angle(alpha)?;
        check_angle(beta)?;
        Ok(Self {
            d_t0,
            d1,
            d2,
            alpha,
            beta,
        })
    }

    pub fn case(&self) -> AngleCase {
        // angles were validated on construction
        AngleCase::from_angles(self.alpha, self.beta)
    }

    /// `R1`, `R2` and the principal-value angles `Ψ_A`, `Ψ_B`.
    pub fn cross_distances(&self) -> Result<CrossDistances> {
        let r1 = cross_distance(self.d_t0, self.d2, self.beta)?;
        let r2 = cross_distance(self.d_t0, self.d1, self.alpha)?;
        let psi_a = cross_angle(self.d2, self.beta, r1)?;
        let psi_b = cross_angle(self.d1, self.alpha, r2)?;
        Ok(CrossDistances {
            r1,
            r2,
            psi_a,
            psi_b,
        })
    }
}

fn check_angle(angle: f64) -> Result<()> {
    if angle.is_finite() && angle > 0.0 && angle < 180.0 {
        Ok(())
    } else {
        Err(KinematicsError::AngleOutOfRange(angle))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngleCase {
    ObtuseObtuse,
    AcuteAcute,
    AcuteObtuse,
    ObtuseAcute,
}

impl AngleCase {
    /// A right angle counts as acute so the four cases tile the angle square.
    fn from_angles(alpha: f64, beta: f64) -> Self {
        match (alpha > 90.0, beta > 90.0) {
            (true, true) => AngleCase::ObtuseObtuse,
            (false, false) => AngleCase::AcuteAcute,
            (false, true) => AngleCase::AcuteObtuse,
            (true, false) => AngleCase::ObtuseAcute,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AngleCase::ObtuseObtuse => "obtuse-obtuse",
            AngleCase::AcuteAcute => "acute-acute",
            AngleCase::AcuteObtuse => "acute-obtuse",
            AngleCase::ObtuseAcute => "obtuse-acute",
        }
    }
}

pub fn classify_case(alpha: f64, beta: f64) -> Result<AngleCase> {
    check_angle(alpha)?;
    check_angle(beta)?;
    Ok(AngleCase::from_angles(alpha, beta))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossDistances {
    pub r1: f64,
    pub r2: f64,
    pub psi_a: f64,
    pub psi_b: f64,
}

/// Cosine law: distance from one vehicle's start to the other's end point.
pub fn cross_distance(d_t0: f64, disp: f64, angle: f64) -> Result<f64> {
    if !(d_t0 > 0.0 && disp >= 0.0) {
        return Err(KinematicsError::Domain("cross_distance needs d_t0 > 0, disp >= 0"));
    }
    let sq = d_t0 * d_t0 + disp * disp - 2.0 * d_t0 * disp * angle.to_radians().cos();
    Ok(sq.max(0.0).sqrt())
}

/// Sine law: angle subtended at the stationary start point, principal value.
pub fn cross_angle(disp: f64, angle: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && disp >= 0.0) {
        return Err(KinematicsError::Domain("cross_angle needs r > 0, disp >= 0"));
    }
    let arg = disp * angle.to_radians().sin() / r;
    if arg.abs() > 1.0 + 1e-12 {
        return Err(KinematicsError::GeometryInconsistent(arg));
    }
    Ok(arg.clamp(-1.0, 1.0).asin().to_degrees())
}

/// Angle at a start point between the line AB and the other vehicle's end
/// point. Same angle as [`cross_angle`] but resolved into `[0°, 180°)` and
/// free of the arcsine's loss of precision near 90°.
fn resolved_cross_angle(d_t0: f64, disp: f64, angle: f64) -> f64 {
    let a = angle.to_radians();
    (disp * a.sin()).atan2(d_t0 - disp * a.cos())
}

fn law_of_cosines(side_a: f64, side_b: f64, included: f64) -> f64 {
    (side_a * side_a + side_b * side_b - 2.0 * side_a * side_b * included.cos())
        .max(0.0)
        .sqrt()
}

/// Separation at the end of the step, solved through triangle A_t0 A_t1 B_t1.
pub fn displaced_distance_exact(g: &StepGeometry) -> Result<f64> {
    let r1 = cross_distance(g.d_t0, g.d2, g.beta)?;
    let psi_a = resolved_cross_angle(g.d_t0, g.d2, g.beta);
    Ok(law_of_cosines(g.d1, r1, g.alpha.to_radians() - psi_a))
}

/// Same separation solved through triangle B_t0 B_t1 A_t1.
pub fn displaced_distance_via_b(g: &StepGeometry) -> Result<f64> {
    let r2 = cross_distance(g.d_t0, g.d1, g.alpha)?;
    let psi_b = resolved_cross_angle(g.d_t0, g.d1, g.alpha);
    Ok(law_of_cosines(g.d2, r2, g.beta.to_radians() - psi_b))
}

fn cos_deg(deg: f64) -> f64 {
    deg.to_radians().cos()
}

/// Per-case projection formula, evaluated as written.
///
/// The acute-acute form goes through `R1`, `R2` and the principal-value
/// `Ψ` angles and does not reduce to `d_t0` for zero motion; the exact form
/// is the one the simulator relies on.
pub fn displaced_distance_case(
    case: AngleCase,
    g: &StepGeometry,
    cd: &CrossDistances,
) -> Result<f64> {
    let expected = g.case();
    if case != expected {
        return Err(KinematicsError::CaseMismatch {
            given: case,
            expected,
        });
    }
    let value = match case {
        AngleCase::ObtuseObtuse => {
            g.d_t0 + g.d1 * cos_deg(180.0 - g.alpha) + g.d2 * cos_deg(180.0 - g.beta)
        }
        AngleCase::AcuteAcute => {
            g.d_t0 + cd.r1 * cos_deg(180.0 - cd.psi_a) + cd.r2 * cos_deg(180.0 - cd.psi_b)
        }
        AngleCase::AcuteObtuse => {
            g.d_t0 - g.d1 * cos_deg(g.alpha) + g.d2 * cos_deg(180.0 - g.beta)
        }
        AngleCase::ObtuseAcute => {
            g.d_t0 + g.d1 * cos_deg(180.0 - g.alpha) - g.d2 * cos_deg(g.beta)
        }
    };
    Ok(value)
}

/// Distance budget left before the link breaks.
pub fn residual_range(range: f64, d_t1: f64) -> Result<f64> {
    if !(range > 0.0) || !(d_t1 >= 0.0) {
        return Err(KinematicsError::Domain("residual_range needs range > 0, d_t1 >= 0"));
    }
    if d_t1 > range {
        return Err(KinematicsError::LinkAlreadyBroken { d_t1, range });
    }
    Ok(range - d_t1)
}

/// Residual distance over relative speed, capped at `horizon` (which is
/// also the answer when the pair is not moving relative to each other).
pub fn link_duration(residual: f64, relative_speed: f64, horizon: f64) -> Result<f64> {
    if !(residual >= 0.0 && relative_speed >= 0.0) || !residual.is_finite() {
        return Err(KinematicsError::Domain("link_duration needs non-negative inputs"));
    }
    if relative_speed == 0.0 {
        Ok(horizon)
    } else {
        Ok((residual / relative_speed).min(horizon))
    }
}

/// Magnitude of the velocity difference.
pub fn relative_speed(a: &KinematicState, b: &KinematicState) -> f64 {
    (a.velocity - b.velocity).speed()
}

/// First instant at which two constant-velocity nodes are more than `range`
/// apart, capped at `horizon`.
pub fn exact_link_expiry(
    a: &KinematicState,
    b: &KinematicState,
    range: f64,
    horizon: f64,
) -> Result<f64> {
    let px = b.position.x - a.position.x;
    let py = b.position.y - a.position.y;
    let separation = px.hypot(py);
    if separation > range {
        return Err(KinematicsError::InitiallyOutOfRange { separation, range });
    }
    let w = b.velocity - a.velocity;
    let ww = w.vx * w.vx + w.vy * w.vy;
    if ww == 0.0 {
        return Ok(horizon);
    }
    // |p + t w|^2 = r^2, take the larger root
    let pw = px * w.vx + py * w.vy;
    let c = px * px + py * py - range * range;
    let disc = (pw * pw - ww * c).max(0.0);
    let root = if pw <= 0.0 {
        (-pw + disc.sqrt()) / ww
    } else {
        // c / (a * t_small) avoids cancellation when moving apart
        let small = -pw - disc.sqrt();
        if small == 0.0 {
            0.0
        } else {
            c / small
        }
    };
    Ok(root.max(0.0).min(horizon))
}

/// Bottleneck link duration of a path.
pub fn path_stability(links: &[LinkEpisode]) -> Result<f64> {
    if links.is_empty() {
        return Err(KinematicsError::EmptyPath);
    }
    for (i, pair) in links.windows(2).enumerate() {
        let (p, q) = (&pair[0], &pair[1]);
        let shares = [p.node_a, p.node_b]
            .iter()
            .any(|n| *n == q.node_a || *n == q.node_b);
        if !shares {
            return Err(KinematicsError::BrokenPath(i, i + 1));
        }
    }
    Ok(links
        .iter()
        .map(|l| l.predicted_duration)
        .fold(f64::INFINITY, f64::min))
}

/// Contiguous interval during which two nodes stay within radio range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEpisode {
    pub node_a: u32,
    pub node_b: u32,
    pub start: f64,
    pub end: f64,
    pub predicted_duration: f64,
    pub measured_duration: f64,
}

impl LinkEpisode {
    pub fn new(node_a: u32, node_b: u32, start: f64, end: f64, predicted_duration: f64) -> Self {
        let (node_a, node_b) = if node_a <= node_b {
            (node_a, node_b)
        } else {
            (node_b, node_a)
        };
        Self {
            node_a,
            node_b,
            start,
            end,
            predicted_duration,
            measured_duration: end - start,
        }
    }

    pub fn covers(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(d_t0: f64, d1: f64, alpha: f64, d2: f64, beta: f64) -> StepGeometry {
        StepGeometry::new(d_t0, d1, alpha, d2, beta).unwrap()
    }

    fn episode(a: u32, b: u32, predicted: f64) -> LinkEpisode {
        LinkEpisode::new(a, b, 0.0, predicted, predicted)
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_case(120.0, 150.0).unwrap(), AngleCase::ObtuseObtuse);
        assert_eq!(classify_case(45.0, 60.0).unwrap(), AngleCase::AcuteAcute);
        assert_eq!(classify_case(90.0, 90.0).unwrap(), AngleCase::AcuteAcute);
        assert_eq!(classify_case(30.0, 100.0).unwrap(), AngleCase::AcuteObtuse);
        assert_eq!(classify_case(100.0, 30.0).unwrap(), AngleCase::ObtuseAcute);
        assert!(classify_case(0.0, 45.0).is_err());
        assert!(classify_case(45.0, 180.0).is_err());
        assert!(classify_case(200.0, 45.0).is_err());
    }

    #[test]
    fn cross_distance_examples() {
        assert!((cross_distance(100.0, 0.0, 120.0).unwrap() - 100.0).abs() < 1e-12);
        assert!((cross_distance(3.0, 4.0, 90.0).unwrap() - 5.0).abs() < 1e-12);
        // sqrt(100^2 + 50^2 + 100*50)
        let expected = 17_500f64.sqrt();
        assert!((cross_distance(100.0, 50.0, 120.0).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 132.288).abs() < 1e-3);
    }

    #[test]
    fn cross_angle_examples() {
        assert_eq!(cross_angle(0.0, 150.0, 100.0).unwrap(), 0.0);
        assert!((cross_angle(100.0, 60.0, 100.0).unwrap() - 60.0).abs() < 1e-9);
        let r = 17_500f64.sqrt();
        let psi = cross_angle(50.0, 120.0, r).unwrap();
        assert!((psi - 19.107).abs() < 1e-3, "{psi}");
        assert!(matches!(
            cross_angle(200.0, 90.0, 100.0),
            Err(KinematicsError::GeometryInconsistent(_))
        ));
    }

    #[test]
    fn exact_distance_degenerate_motion() {
        let g = geom(150.0, 0.0, 100.0, 40.0, 30.0);
        let cd = g.cross_distances().unwrap();
        assert!((displaced_distance_exact(&g).unwrap() - cd.r1).abs() < 1e-9);
        let still = geom(150.0, 0.0, 100.0, 0.0, 30.0);
        assert!((displaced_distance_exact(&still).unwrap() - 150.0).abs() < 1e-9);
        assert!((displaced_distance_via_b(&still).unwrap() - 150.0).abs() < 1e-9);
    }

    #[test]
    fn exact_distance_matches_coordinates_for_worked_example() {
        let g = geom(200.0, 50.0, 120.0, 50.0, 150.0);
        let (a, b) = (120f64.to_radians(), 150f64.to_radians());
        let ax = 50.0 * a.cos();
        let ay = 50.0 * a.sin();
        let bx = 200.0 - 50.0 * b.cos();
        let by = 50.0 * b.sin();
        let oracle = (bx - ax).hypot(by - ay);
        let exact = displaced_distance_exact(&g).unwrap();
        assert!((exact - oracle).abs() < 1e-9 * oracle);
    }

    #[test]
    fn case_formulas() {
        let g = geom(200.0, 50.0, 120.0, 50.0, 150.0);
        let cd = g.cross_distances().unwrap();
        let v = displaced_distance_case(AngleCase::ObtuseObtuse, &g, &cd).unwrap();
        let expected = 200.0 + 50.0 * 60f64.to_radians().cos() + 50.0 * 30f64.to_radians().cos();
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 268.301).abs() < 1e-3);

        let g = geom(200.0, 50.0, 135.0, 50.0, 45.0);
        let cd = g.cross_distances().unwrap();
        let v = displaced_distance_case(AngleCase::ObtuseAcute, &g, &cd).unwrap();
        assert!((v - 200.0).abs() < 1e-9);

        assert!(matches!(
            displaced_distance_case(AngleCase::AcuteAcute, &g, &cd),
            Err(KinematicsError::CaseMismatch { .. })
        ));
    }

    #[test]
    fn acute_acute_formula_is_literal() {
        // both vehicles move towards each other; the literal form goes through R and Ψ
        let g = geom(100.0, 20.0, 80.0, 20.0, 80.0);
        let cd = g.cross_distances().unwrap();
        let literal = displaced_distance_case(AngleCase::AcuteAcute, &g, &cd).unwrap();
        let by_hand = 100.0 - cd.r1 * cd.psi_a.to_radians().cos() - cd.r2 * cd.psi_b.to_radians().cos();
        assert!((literal - by_hand).abs() < 1e-9);
        let exact = displaced_distance_exact(&g).unwrap();
        assert!((literal - exact).abs() > 1.0, "literal {literal} exact {exact}");

        // zero motion reduces to -d_t0
        let still = geom(100.0, 0.0, 80.0, 0.0, 80.0);
        let cd = still.cross_distances().unwrap();
        let v = displaced_distance_case(AngleCase::AcuteAcute, &still, &cd).unwrap();
        assert!((v + 100.0).abs() < 1e-9);
    }

    #[test]
    fn residual_range_examples() {
        assert_eq!(residual_range(300.0, 200.0).unwrap(), 100.0);
        assert_eq!(residual_range(300.0, 300.0).unwrap(), 0.0);
        assert!(matches!(
            residual_range(300.0, 350.0),
            Err(KinematicsError::LinkAlreadyBroken { .. })
        ));
    }

    #[test]
    fn link_duration_examples() {
        assert_eq!(link_duration(100.0, 10.0, 600.0).unwrap(), 10.0);
        assert_eq!(link_duration(0.0, 5.0, 600.0).unwrap(), 0.0);
        assert_eq!(link_duration(150.0, 0.0, 600.0).unwrap(), 600.0);
        assert_eq!(link_duration(150.0, 1e-15, 600.0).unwrap(), 600.0);
        assert!(link_duration(-1.0, 5.0, 600.0).is_err());
        assert!(link_duration(1.0, -5.0, 600.0).is_err());
    }

    #[test]
    fn relative_speed_examples() {
        let s = |vx, vy| KinematicState::new(Position::default(), Velocity::new(vx, vy));
        assert_eq!(relative_speed(&s(10.0, 0.0), &s(10.0, 0.0)), 0.0);
        assert_eq!(relative_speed(&s(10.0, 0.0), &s(-10.0, 0.0)), 20.0);
        assert!((relative_speed(&s(10.0, 0.0), &s(0.0, 10.0)) - 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn link_expiry_examples() {
        let a = KinematicState::stationary(Position::new(0.0, 0.0));
        let b = KinematicState::stationary(Position::new(100.0, 0.0));
        assert_eq!(exact_link_expiry(&a, &b, 300.0, 600.0).unwrap(), 600.0);

        let b = KinematicState::new(Position::new(100.0, 0.0), Velocity::new(10.0, 0.0));
        assert!((exact_link_expiry(&a, &b, 300.0, 600.0).unwrap() - 20.0).abs() < 1e-9);

        let far = KinematicState::stationary(Position::new(400.0, 0.0));
        assert!(matches!(
            exact_link_expiry(&a, &far, 300.0, 600.0),
            Err(KinematicsError::InitiallyOutOfRange { .. })
        ));

        // approaching from the range boundary: passes through and leaves on the far side
        let b = KinematicState::new(Position::new(300.0, 0.0), Velocity::new(-10.0, 0.0));
        assert!((exact_link_expiry(&a, &b, 300.0, 600.0).unwrap() - 60.0).abs() < 1e-9);
    }

    #[test]
    fn path_stability_examples() {
        let path = [episode(0, 1, 5.0), episode(1, 2, 12.0), episode(2, 3, 8.0)];
        assert_eq!(path_stability(&path).unwrap(), 5.0);
        assert_eq!(path_stability(&[episode(4, 5, 7.0)]).unwrap(), 7.0);
        assert_eq!(path_stability(&[]), Err(KinematicsError::EmptyPath));
        let disjoint = [episode(0, 1, 5.0), episode(2, 3, 8.0)];
        assert_eq!(path_stability(&disjoint), Err(KinematicsError::BrokenPath(0, 1)));
    }
}
