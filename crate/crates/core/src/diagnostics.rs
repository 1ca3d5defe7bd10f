//! Single-step link report: every intermediate quantity of the geometric
//! link model side by side with the exact separation.

use std::fmt;

use crate::kinematics::{
    displaced_distance_case, displaced_distance_exact, link_duration, residual_range, KinematicState,
    KinematicsError, Position, StepGeometry, Velocity, relative_speed, AngleCase, CrossDistances,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkQuery {
    pub geometry: StepGeometry,
    pub range: f64,
    /// Length of the step in seconds; converts displacements to velocities.
    pub step: f64,
    /// Duration reported when the pair does not move relative to each other.
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDiagnosis {
    pub query: LinkQuery,
    pub case: AngleCase,
    pub cross: CrossDistances,
    pub case_d_t1: f64,
    pub exact_d_t1: f64,
    pub relative_speed: f64,
    /// `None` when the exact separation already exceeds the range.
    pub residual: Option<f64>,
    pub link_duration: Option<f64>,
}

impl LinkDiagnosis {
    pub fn discrepancy(&self) -> f64 {
        self.case_d_t1 - self.exact_d_t1
    }
}

/// Velocities implied by one step, with A at the origin and B on the +x axis.
fn step_states(g: &StepGeometry, step: f64) -> (KinematicState, KinematicState) {
    let (a, b) = (g.alpha.to_radians(), g.beta.to_radians());
    let va = Velocity::new(g.d1 * a.cos() / step, g.d1 * a.sin() / step);
    let vb = Velocity::new(-g.d2 * b.cos() / step, g.d2 * b.sin() / step);
    (
        KinematicState::new(Position::new(0.0, 0.0), va),
        KinematicState::new(Position::new(g.d_t0, 0.0), vb),
    )
}

pub fn diagnose_link(query: LinkQuery) -> Result<LinkDiagnosis, KinematicsError> {
    if !(query.range > 0.0 && query.step > 0.0 && query.horizon >= 0.0) {
        return Err(KinematicsError::Domain("range and step must be positive, horizon non-negative"));
    }
    let g = &query.geometry;
    let case = g.case();
    let cross = g.cross_distances()?;
    let case_d_t1 = displaced_distance_case(case, g, &cross)?;
    let exact_d_t1 = displaced_distance_exact(g)?;
    let (sa, sb) = step_states(g, query.step);
    let v_r = relative_speed(&sa, &sb);
    let residual = match residual_range(query.range, exact_d_t1) {
        Ok(r) => Some(r),
        Err(KinematicsError::LinkAlreadyBroken { .. }) => None,
        Err(e) => return Err(e),
    };
    let link_duration = residual
        .map(|r| link_duration(r, v_r, query.horizon))
        .transpose()?;
    Ok(LinkDiagnosis {
        query,
        case,
        cross,
        case_d_t1,
        exact_d_t1,
        relative_speed: v_r,
        residual,
        link_duration,
    })
}

impl fmt::Display for LinkDiagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.query.geometry;
        writeln!(
            f,
            "input          d_t0={} d1={} alpha={} d2={} beta={} range={} step={}s",
            g.d_t0, g.d1, g.alpha, g.d2, g.beta, self.query.range, self.query.step
        )?;
        writeln!(f, "case           {}", self.case.label())?;
        writeln!(f, "R1             {:.6}", self.cross.r1)?;
        writeln!(f, "R2             {:.6}", self.cross.r2)?;
        writeln!(f, "psi_A          {:.6} deg", self.cross.psi_a)?;
        writeln!(f, "psi_B          {:.6} deg", self.cross.psi_b)?;
        writeln!(f, "d_t1 (case)    {:.6}", self.case_d_t1)?;
        writeln!(f, "d_t1 (exact)   {:.6}", self.exact_d_t1)?;
        let rel = if self.exact_d_t1 > 0.0 {
            format!(" ({:+.4}%)", 100.0 * self.discrepancy() / self.exact_d_t1)
        } else {
            String::new()
        };
        writeln!(f, "discrepancy    {:+.6}{rel}", self.discrepancy())?;
        writeln!(f, "v_r            {:.6} m/s", self.relative_speed)?;
        match (self.residual, self.link_duration) {
            (Some(r), Some(d)) => {
                writeln!(f, "residual range {r:.6}")?;
                write!(f, "link duration  {d:.6} s")
            }
            _ => {
                writeln!(f, "residual range n/a (exact separation exceeds range)")?;
                write!(f, "link duration  0 (link already broken)")
            }
        }
    }
}
