//! Collision regions, penalty functions, directional weighting factors,
//! and assembly of the stacked penalty gradient.
//!
//! Every ordered vehicle pair `(i, j)` is classified by its distance
//! against the summed avoidance radii `r_i + r_j` and reaction radii
//! `R_i + R_j`. Inside the reaction band the penalty
//!
//! ```text
//! v_ij = ( min{0, (|p_j - p_i|^2 - (R_i+R_j)^2) / (|p_j - p_i|^2 - (r_i+r_j)^2)} )^2
//! ```
//!
//! grows without bound toward the inner boundary and vanishes at the
//! outer one. Its gradient with respect to vehicle `i`'s own position is
//! validated against finite differences; the directional strategies scale
//! each pair's contribution by a clamped-cosine weight that is treated as
//! a constant during differentiation.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flat::{layout, FlatTeamState};

/// Distance band (relative to `r_i + r_j`) treated as exactly on the
/// singular inner boundary.
const SINGULAR_BAND: f64 = 1e-12;

/// Vanishing-norm guard for the directional weights.
const NORM_EPS: f64 = 1e-12;

/// How pair penalties are scaled before entering the control law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvoidanceStrategy {
    /// Penalty machinery disabled: the tracker flies the pure feedback law.
    None,
    /// Unweighted penalty.
    Basic,
    /// Weighted by the forward-path factor of the evading vehicle.
    Forward,
    /// Weighted by the mutual-approach factor.
    Approach,
    /// Weighted by the product of the forward-path and approach factors.
    Unified,
}

impl AvoidanceStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            AvoidanceStrategy::None => "none",
            AvoidanceStrategy::Basic => "basic",
            AvoidanceStrategy::Forward => "forward",
            AvoidanceStrategy::Approach => "approach",
            AvoidanceStrategy::Unified => "unified",
        }
    }
}

impl std::str::FromStr for AvoidanceStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "basic" => Ok(Self::Basic),
            "forward" => Ok(Self::Forward),
            "approach" => Ok(Self::Approach),
            "unified" => Ok(Self::Unified),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected none|basic|forward|approach|unified)"
            ))),
        }
    }
}

/// Per-vehicle avoidance and reaction radii plus the active strategy.
#[derive(Debug, Clone)]
pub struct SafetyConfig {
    avoidance_radius: Vec<f64>,
    reaction_radius: Vec<f64>,
    pub strategy: AvoidanceStrategy,
}

impl SafetyConfig {
    pub fn new(
        avoidance_radius: Vec<f64>,
        reaction_radius: Vec<f64>,
        strategy: AvoidanceStrategy,
    ) -> Result<Self> {
        if avoidance_radius.len() != reaction_radius.len() {
            return Err(Error::Config(format!(
                "{} avoidance radii vs {} reaction radii",
                avoidance_radius.len(),
                reaction_radius.len()
            )));
        }
        for (i, (&r, &big_r)) in avoidance_radius.iter().zip(&reaction_radius).enumerate() {
            if !(r > 0.0) {
                return Err(Error::Config(format!(
                    "avoidance radius r[{}] = {r} must be positive",
                    i + 1
                )));
            }
            if !(big_r > r) {
                return Err(Error::Config(format!(
                    "reaction radius R[{}] = {big_r} must exceed avoidance radius {r}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            avoidance_radius,
            reaction_radius,
            strategy,
        })
    }

    pub fn n_uavs(&self) -> usize {
        self.avoidance_radius.len()
    }

    pub fn avoidance_radius(&self, i: usize) -> f64 {
        self.avoidance_radius[i]
    }

    pub fn reaction_radius(&self, i: usize) -> f64 {
        self.reaction_radius[i]
    }

    /// `(r_i + r_j, R_i + R_j)` for a pair.
    pub fn pair_bounds(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.avoidance_radius[i] + self.avoidance_radius[j],
            self.reaction_radius[i] + self.reaction_radius[j],
        )
    }
}

/// Distance band of one vehicle pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRegion {
    /// At or beyond the summed reaction radii: penalty inactive.
    Safety,
    /// Strictly between the summed avoidance and reaction radii.
    Reaction,
    /// Strictly inside the summed avoidance radii.
    Collision,
    /// Exactly on the summed avoidance radii, where the penalty blows up.
    Singular,
}

impl PairRegion {
    pub fn as_str(&self) -> &'static str {
        match self {
            PairRegion::Safety => "safety",
            PairRegion::Reaction => "reaction",
            PairRegion::Collision => "collision",
            PairRegion::Singular => "singular",
        }
    }
}

/// Classify a pair distance against the summed radii.
pub fn classify_pair(dist: f64, inner: f64, outer: f64) -> PairRegion {
    if (dist - inner).abs() <= SINGULAR_BAND {
        PairRegion::Singular
    } else if dist < inner {
        PairRegion::Collision
    } else if dist < outer {
        PairRegion::Reaction
    } else {
        PairRegion::Safety
    }
}

/// Classification of one ordered pair.
#[derive(Debug, Clone, Copy)]
pub struct PairClass {
    pub i: usize,
    pub j: usize,
    pub dist: f64,
    pub region: PairRegion,
}

/// Classification of every ordered pair plus aggregate flags.
#[derive(Debug, Clone)]
pub struct RegionReport {
    pub pairs: Vec<PairClass>,
    pub any_reaction: bool,
    pub any_collision: bool,
    pub any_singular: bool,
    pub all_safety: bool,
}

/// Classify all ordered pairs of the team.
pub fn classify_regions(positions: &[Vector3<f64>], cfg: &SafetyConfig) -> RegionReport {
    let n = positions.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
    let (mut any_reaction, mut any_collision, mut any_singular) = (false, false, false);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dist = (positions[j] - positions[i]).norm();
            let (inner, outer) = cfg.pair_bounds(i, j);
            let region = classify_pair(dist, inner, outer);
            match region {
                PairRegion::Reaction => any_reaction = true,
                PairRegion::Collision => any_collision = true,
                PairRegion::Singular => any_singular = true,
                PairRegion::Safety => {}
            }
            pairs.push(PairClass {
                i,
                j,
                dist,
                region,
            });
        }
    }
    RegionReport {
        pairs,
        any_reaction,
        any_collision,
        any_singular,
        all_safety: !(any_reaction || any_collision || any_singular),
    }
}

/// Penalty value from squared distance `s` and squared bounds `b < a`.
/// The ratio clamps to zero outside the open reaction band.
fn penalty_value(s: f64, a: f64, b: f64) -> f64 {
    let ratio = (s - a) / (s - b);
    let clamped = ratio.min(0.0);
    clamped * clamped
}

/// Gradient prefactor: `4 (a - b) (s - a) / (s - b)^3`, negative in the
/// reaction band.
fn gradient_factor(s: f64, a: f64, b: f64) -> f64 {
    let denom = s - b;
    4.0 * (a - b) * (s - a) / (denom * denom * denom)
}

/// Collision penalty of the ordered pair `(i, j)` at the given team state.
///
/// Zero at and beyond the reaction boundary and inside the collision
/// region; an error exactly on the inner boundary.
pub fn penalty(z: &FlatTeamState, pair: (usize, usize), cfg: &SafetyConfig) -> Result<f64> {
    let (i, j) = pair;
    penalty_from_positions(&z.position(i), &z.position(j), i, j, cfg)
}

/// [`penalty`] on raw positions.
pub fn penalty_from_positions(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    i: usize,
    j: usize,
    cfg: &SafetyConfig,
) -> Result<f64> {
    let dist = (p_j - p_i).norm();
    let (inner, outer) = cfg.pair_bounds(i, j);
    if (dist - inner).abs() <= SINGULAR_BAND {
        return Err(Error::Singularity {
            i: i + 1,
            j: j + 1,
            dist,
        });
    }
    Ok(penalty_value(dist * dist, outer * outer, inner * inner))
}

/// Gradient of `v_ij` with respect to vehicle `i`'s position.
///
/// Piecewise by region: zero in the safety and collision regions, the
/// closed form in the reaction band, an error on the inner boundary. The
/// closed form is `phi_ij (p_i - p_j)^T`, which matches central finite
/// differences of [`penalty`]; it points toward vehicle `j`, so the
/// control law's negated gradient pushes away.
pub fn penalty_gradient_wrt_own_state(
    z: &FlatTeamState,
    pair: (usize, usize),
    cfg: &SafetyConfig,
) -> Result<Vector3<f64>> {
    let (i, j) = pair;
    penalty_gradient_from_positions(&z.position(i), &z.position(j), i, j, cfg)
}

/// [`penalty_gradient_wrt_own_state`] on raw positions.
pub fn penalty_gradient_from_positions(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    i: usize,
    j: usize,
    cfg: &SafetyConfig,
) -> Result<Vector3<f64>> {
    let diff = p_i - p_j;
    let dist = diff.norm();
    let (inner, outer) = cfg.pair_bounds(i, j);
    match classify_pair(dist, inner, outer) {
        PairRegion::Singular => Err(Error::Singularity {
            i: i + 1,
            j: j + 1,
            dist,
        }),
        PairRegion::Safety | PairRegion::Collision => Ok(Vector3::zeros()),
        PairRegion::Reaction => {
            let phi = gradient_factor(dist * dist, outer * outer, inner * inner);
            Ok(diff * phi)
        }
    }
}

/// Forward-path weight: clamped cosine between vehicle `i`'s velocity and
/// the line of sight to `j`. Zero for a stationary vehicle or coincident
/// positions.
pub fn forward_weight(p_i: &Vector3<f64>, p_j: &Vector3<f64>, v_i: &Vector3<f64>) -> f64 {
    let sight = p_j - p_i;
    let sight_norm = sight.norm();
    let v_norm = v_i.norm();
    if v_norm <= NORM_EPS || sight_norm <= NORM_EPS {
        return 0.0;
    }
    (sight.dot(v_i) / (sight_norm * v_norm)).max(0.0)
}

/// Approach weight: clamped negative cosine between the relative position
/// and relative velocity. Zero when the pair keeps constant separation
/// velocity or positions coincide.
pub fn approach_weight(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    v_i: &Vector3<f64>,
    v_j: &Vector3<f64>,
) -> f64 {
    let sight = p_j - p_i;
    let rel_v = v_j - v_i;
    let sight_norm = sight.norm();
    let rel_norm = rel_v.norm();
    if rel_norm <= NORM_EPS || sight_norm <= NORM_EPS {
        return 0.0;
    }
    (-sight.dot(&rel_v) / (sight_norm * rel_norm)).max(0.0)
}

/// Unified weight: product of the forward-path and approach weights.
pub fn unified_weight(
    p_i: &Vector3<f64>,
    p_j: &Vector3<f64>,
    v_i: &Vector3<f64>,
    v_j: &Vector3<f64>,
) -> f64 {
    forward_weight(p_i, p_j, v_i) * approach_weight(p_i, p_j, v_i, v_j)
}

/// Pair-level diagnostics emitted alongside the stacked gradient.
#[derive(Debug, Clone, Copy)]
pub struct PairDiagnostic {
    pub i: usize,
    pub j: usize,
    pub dist: f64,
    pub region: PairRegion,
    /// Directional weight applied to this pair under the active strategy.
    pub weight: f64,
    /// Raw penalty value.
    pub penalty: f64,
    /// Weighted penalty entering the control law.
    pub weighted_penalty: f64,
}

/// Stacked penalty gradient with the sparsity pattern
/// `[0_{8N} | g_1 .. g_N | 0_{N+1}]`: per-vehicle 3-vectors sit in the
/// acceleration-level position slots, where the input matrix picks them
/// up.
#[derive(Debug, Clone)]
pub struct PenaltyGradient {
    pub stacked: DVector<f64>,
    pub pairs: Vec<PairDiagnostic>,
}

impl PenaltyGradient {
    /// Total unweighted penalty over all ordered pairs.
    pub fn vhat(&self) -> f64 {
        self.pairs.iter().map(|p| p.penalty).sum()
    }

    /// Total weighted penalty over all ordered pairs.
    pub fn weighted_vhat(&self) -> f64 {
        self.pairs.iter().map(|p| p.weighted_penalty).sum()
    }
}

/// Assemble the stacked gradient over the complete communication graph.
///
/// The directional weights use the velocity block of the supplied state
/// and are held constant under differentiation: each pair contributes
/// `weight * grad v_ij`. With [`AvoidanceStrategy::None`] the result is
/// identically zero and penalties are not evaluated.
pub fn assemble_gradient(z: &FlatTeamState, cfg: &SafetyConfig) -> Result<PenaltyGradient> {
    let n = z.n_uavs();
    if cfg.n_uavs() != n {
        return Err(Error::Config(format!(
            "safety config covers {} vehicles, state has {}",
            cfg.n_uavs(),
            n
        )));
    }
    let positions = z.positions();
    let velocities = z.velocities();
    let mut stacked = DVector::zeros(layout::state_dim(n));
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));

    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dist = (positions[j] - positions[i]).norm();
            let (inner, outer) = cfg.pair_bounds(i, j);
            let region = classify_pair(dist, inner, outer);

            if cfg.strategy == AvoidanceStrategy::None {
                pairs.push(PairDiagnostic {
                    i,
                    j,
                    dist,
                    region,
                    weight: 0.0,
                    penalty: 0.0,
                    weighted_penalty: 0.0,
                });
                continue;
            }
            if region == PairRegion::Singular {
                return Err(Error::Singularity {
                    i: i + 1,
                    j: j + 1,
                    dist,
                });
            }

            let weight = match cfg.strategy {
                AvoidanceStrategy::None => unreachable!(),
                AvoidanceStrategy::Basic => 1.0,
                AvoidanceStrategy::Forward => {
                    forward_weight(&positions[i], &positions[j], &velocities[i])
                }
                AvoidanceStrategy::Approach => {
                    approach_weight(&positions[i], &positions[j], &velocities[i], &velocities[j])
                }
                AvoidanceStrategy::Unified => {
                    unified_weight(&positions[i], &positions[j], &velocities[i], &velocities[j])
                }
            };
            let v = penalty_value(dist * dist, outer * outer, inner * inner);
            if region == PairRegion::Reaction {
                let g = penalty_gradient_from_positions(&positions[i], &positions[j], i, j, cfg)?;
                let base = layout::acc(n, i);
                for axis in 0..3 {
                    stacked[base + axis] += weight * g[axis];
                }
            }
            pairs.push(PairDiagnostic {
                i,
                j,
                dist,
                region,
                weight,
                penalty: v,
                weighted_penalty: weight * v,
            });
        }
    }
    Ok(PenaltyGradient { stacked, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn uniform_cfg(n: usize, strategy: AvoidanceStrategy) -> SafetyConfig {
        SafetyConfig::new(vec![1.5; n], vec![3.0; n], strategy).unwrap()
    }

    #[test]
    fn config_rejects_bad_radii() {
        assert!(SafetyConfig::new(vec![1.5], vec![1.5], AvoidanceStrategy::Basic).is_err());
        assert!(SafetyConfig::new(vec![0.0], vec![1.0], AvoidanceStrategy::Basic).is_err());
        assert!(SafetyConfig::new(vec![1.0], vec![2.0, 3.0], AvoidanceStrategy::Basic).is_err());
    }

    #[test]
    fn classification_bands() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let place = |d: f64| {
            let p = [
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(d, 0.0, 0.0),
            ];
            classify_regions(&p, &cfg).pairs[0].region
        };
        assert_eq!(place(10.0), PairRegion::Safety);
        assert_eq!(place(6.0), PairRegion::Safety);
        assert_eq!(place(4.5), PairRegion::Reaction);
        assert_eq!(place(2.9), PairRegion::Collision);
        assert_eq!(place(3.0), PairRegion::Singular);
        assert_eq!(place(3.0 + 5e-13), PairRegion::Singular);
    }

    #[test]
    fn penalty_zero_at_and_beyond_reaction_boundary() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        for d in [6.0, 6.5, 100.0] {
            let v = penalty_from_positions(
                &Vector3::zeros(),
                &Vector3::new(d, 0.0, 0.0),
                0,
                1,
                &cfg,
            )
            .unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn penalty_value_at_known_point() {
        // d = 4.5, inner 3, outer 6: ((20.25 - 36) / (20.25 - 9))^2 = 1.96.
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let v = penalty_from_positions(
            &Vector3::zeros(),
            &Vector3::new(4.5, 0.0, 0.0),
            0,
            1,
            &cfg,
        )
        .unwrap();
        assert_relative_eq!(v, 1.96, epsilon = 1e-12);
    }

    #[test]
    fn penalty_symmetric_in_pair_order() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let a = Vector3::new(1.0, 2.0, 0.5);
        let b = Vector3::new(4.0, 0.0, 1.0);
        let v_ij = penalty_from_positions(&a, &b, 0, 1, &cfg).unwrap();
        let v_ji = penalty_from_positions(&b, &a, 1, 0, &cfg).unwrap();
        assert_eq!(v_ij, v_ji);
    }

    #[test]
    fn penalty_zero_inside_collision_region() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let v = penalty_from_positions(
            &Vector3::zeros(),
            &Vector3::new(2.0, 0.0, 0.0),
            0,
            1,
            &cfg,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn penalty_errors_on_singularity() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let r = penalty_from_positions(
            &Vector3::zeros(),
            &Vector3::new(3.0, 0.0, 0.0),
            0,
            1,
            &cfg,
        );
        assert!(matches!(r, Err(Error::Singularity { i: 1, j: 2, .. })));
    }

    #[test]
    fn penalty_blows_up_near_inner_boundary() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let v = penalty_from_positions(
            &Vector3::zeros(),
            &Vector3::new(3.001, 0.0, 0.0),
            0,
            1,
            &cfg,
        )
        .unwrap();
        assert!(v > 1e4, "penalty {v} too small near the boundary");
    }

    #[test]
    fn gradient_zero_in_safety_and_collision() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        for d in [7.0, 2.0] {
            let g = penalty_gradient_from_positions(
                &Vector3::zeros(),
                &Vector3::new(d, 0.0, 0.0),
                0,
                1,
                &cfg,
            )
            .unwrap();
            assert_eq!(g, Vector3::zeros());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            // Random reaction-band configuration.
            let dir = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalize();
            let d = rng.gen_range(3.2..5.8);
            let p_i = Vector3::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let p_j = p_i + dir * d;
            let g = penalty_gradient_from_positions(&p_i, &p_j, 0, 1, &cfg).unwrap();
            let h = 1e-6;
            for axis in 0..3 {
                let mut step = Vector3::zeros();
                step[axis] = h;
                let plus = penalty_from_positions(&(p_i + step), &p_j, 0, 1, &cfg).unwrap();
                let minus = penalty_from_positions(&(p_i - step), &p_j, 0, 1, &cfg).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                assert!(
                    (g[axis] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "axis {axis}: analytic {} vs fd {fd}",
                    g[axis]
                );
            }
        }
    }

    #[test]
    fn gradient_points_toward_neighbor_so_control_repels() {
        // Approaching the neighbor increases the penalty, so the raw
        // gradient projects positively on p_j - p_i; the negated gradient
        // used by the control law is the repulsive direction.
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let p_i = Vector3::new(0.0, 0.0, 0.0);
        let p_j = Vector3::new(4.0, 1.0, -0.5);
        let g = penalty_gradient_from_positions(&p_i, &p_j, 0, 1, &cfg).unwrap();
        let toward = (p_j - p_i).normalize();
        assert!(g.dot(&toward) > 0.0, "gradient projection {}", g.dot(&toward));
    }

    #[test]
    fn forward_weight_clamps_and_aligns() {
        let p_i = Vector3::zeros();
        let p_j = Vector3::new(5.0, 0.0, 0.0);
        // Stationary vehicle sees no forward threat.
        assert_eq!(forward_weight(&p_i, &p_j, &Vector3::zeros()), 0.0);
        // Neighbor dead ahead.
        assert_relative_eq!(
            forward_weight(&p_i, &p_j, &Vector3::new(2.0, 0.0, 0.0)),
            1.0,
            epsilon = 1e-14
        );
        // Neighbor behind.
        assert_eq!(forward_weight(&p_i, &p_j, &Vector3::new(-1.0, 0.0, 0.0)), 0.0);
        // Coincident positions fail soft.
        assert_eq!(forward_weight(&p_i, &p_i, &Vector3::new(1.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn forward_weight_demo_inputs() {
        // First two-vehicle demo scenario at t = 0.
        let p1: Vector3<f64> = Vector3::new(1.0, 1.0, 1.0);
        let p2 = Vector3::new(7.0, 0.0, 3.0);
        let v1 = Vector3::new(2.0, 1.0, 0.5);
        let sight = p2 - p1;
        let expected = (sight.dot(&v1) / (sight.norm() * v1.norm())).max(0.0);
        assert_relative_eq!(forward_weight(&p1, &p2, &v1), expected, epsilon = 1e-15);
        assert!(expected > 0.0 && expected < 1.0);
    }

    #[test]
    fn approach_weight_cases() {
        let p_i = Vector3::zeros();
        let p_j = Vector3::new(5.0, 0.0, 0.0);
        // Identical velocities keep separation constant.
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(approach_weight(&p_i, &p_j, &v, &v), 0.0);
        // Head-on closure along the line of sight.
        assert_relative_eq!(
            approach_weight(
                &p_i,
                &p_j,
                &Vector3::new(1.0, 0.0, 0.0),
                &Vector3::new(-1.0, 0.0, 0.0)
            ),
            1.0,
            epsilon = 1e-14
        );
        // Receding pair clamps to zero.
        assert_eq!(
            approach_weight(
                &p_i,
                &p_j,
                &Vector3::new(-1.0, 0.0, 0.0),
                &Vector3::new(1.0, 0.0, 0.0)
            ),
            0.0
        );
    }

    #[test]
    fn unified_weight_cases() {
        let p_i = Vector3::zeros();
        let p_j = Vector3::new(5.0, 0.0, 0.0);
        // Stationary vehicle i kills the product.
        assert_eq!(
            unified_weight(&p_i, &p_j, &Vector3::zeros(), &Vector3::new(-1.0, 0.0, 0.0)),
            0.0
        );
        // Both factors maximal: i flying at j, j flying at i.
        assert_relative_eq!(
            unified_weight(
                &p_i,
                &p_j,
                &Vector3::new(1.0, 0.0, 0.0),
                &Vector3::new(-1.0, 0.0, 0.0)
            ),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn unified_weight_traces_match_reevaluation() {
        // Second demo scenario: straight-line motion, five time steps.
        let p1_0 = Vector3::new(1.0, 1.0, 1.0);
        let p2_0 = Vector3::new(7.0, 3.0, 1.0);
        let v1 = Vector3::new(2.0, 1.0, 0.5);
        let v2 = Vector3::new(-2.0, 1.0, -0.5);
        for k in 0..5 {
            let t = 0.3 * k as f64;
            let p1 = p1_0 + v1 * t;
            let p2 = p2_0 + v2 * t;
            let xi = unified_weight(&p1, &p2, &v1, &v2);
            let alpha = forward_weight(&p1, &p2, &v1);
            let beta = approach_weight(&p1, &p2, &v1, &v2);
            assert_relative_eq!(xi, alpha * beta, epsilon = 1e-15);
            assert!(xi <= alpha.min(beta) + 1e-15);
        }
    }

    #[test]
    fn weight_bounds_hold_on_random_draws() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut rand_vec = |scale: f64| {
            Vector3::new(
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
            )
        };
        for _ in 0..100_000 {
            let p_i = rand_vec(20.0);
            let p_j = rand_vec(20.0);
            let v_i = rand_vec(5.0);
            let v_j = rand_vec(5.0);
            let a = forward_weight(&p_i, &p_j, &v_i);
            let b = approach_weight(&p_i, &p_j, &v_i, &v_j);
            let xi = unified_weight(&p_i, &p_j, &v_i, &v_j);
            for w in [a, b, xi] {
                assert!((0.0..=1.0).contains(&w), "weight {w} out of [0, 1]");
            }
        }
    }

    #[test]
    fn region_report_flags() {
        let cfg = uniform_cfg(3, AvoidanceStrategy::Basic);
        let all_safe = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(10.0, 0.0, 0.0),
            Vector3::new(0.0, 10.0, 0.0),
        ];
        let report = classify_regions(&all_safe, &cfg);
        assert!(report.all_safety);
        assert_eq!(report.pairs.len(), 6);

        let mixed = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(4.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
        ];
        let report = classify_regions(&mixed, &cfg);
        assert!(report.any_reaction);
        assert!(report.any_collision);
        assert!(!report.all_safety);
        assert!(!report.any_singular);
    }

    #[test]
    fn assemble_zero_in_all_safety() {
        let cfg = uniform_cfg(3, AvoidanceStrategy::Basic);
        let z = FlatTeamState::at_rest(
            &[
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(10.0, 0.0, 0.0),
                Vector3::new(0.0, 10.0, 0.0),
            ],
            &[0.0; 3],
        );
        let g = assemble_gradient(&z, &cfg).unwrap();
        assert_eq!(g.stacked.norm(), 0.0);
        assert_eq!(g.vhat(), 0.0);
    }

    #[test]
    fn assemble_none_strategy_is_zero_regardless() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::None);
        let z = FlatTeamState::at_rest(
            &[Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0)],
            &[0.0; 2],
        );
        let g = assemble_gradient(&z, &cfg).unwrap();
        assert_eq!(g.stacked.norm(), 0.0);
    }

    #[test]
    fn assemble_places_blocks_in_acceleration_slots() {
        let n = 2;
        let cfg = uniform_cfg(n, AvoidanceStrategy::Basic);
        let z = FlatTeamState::at_rest(
            &[Vector3::zeros(), Vector3::new(4.0, 0.5, 0.0)],
            &[0.0; 2],
        );
        let g = assemble_gradient(&z, &cfg).unwrap();
        // Hand-place the per-vehicle gradients.
        let g0 =
            penalty_gradient_from_positions(&z.position(0), &z.position(1), 0, 1, &cfg).unwrap();
        let g1 =
            penalty_gradient_from_positions(&z.position(1), &z.position(0), 1, 0, &cfg).unwrap();
        let mut expected = DVector::zeros(layout::state_dim(n));
        for axis in 0..3 {
            expected[layout::acc(n, 0) + axis] = g0[axis];
            expected[layout::acc(n, 1) + axis] = g1[axis];
        }
        assert_relative_eq!(g.stacked, expected, epsilon = 1e-14);
        // Sparsity pattern: nothing outside the acceleration band.
        for idx in 0..8 * n {
            assert_eq!(g.stacked[idx], 0.0);
        }
        for idx in 11 * n..layout::state_dim(n) {
            assert_eq!(g.stacked[idx], 0.0);
        }
    }

    #[test]
    fn assemble_names_singular_pair() {
        let cfg = uniform_cfg(2, AvoidanceStrategy::Basic);
        let z = FlatTeamState::at_rest(
            &[Vector3::zeros(), Vector3::new(3.0, 0.0, 0.0)],
            &[0.0; 2],
        );
        let r = assemble_gradient(&z, &cfg);
        assert!(matches!(r, Err(Error::Singularity { i: 1, j: 2, .. })));
    }

    #[test]
    fn assemble_matches_frozen_weight_finite_differences() {
        // Per vehicle, the stacked block must be the gradient of that
        // vehicle's weighted penalty sum with the weights frozen.
        let n = 3;
        let cfg = uniform_cfg(n, AvoidanceStrategy::Unified);
        let positions = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(4.0, 0.3, 0.2),
            Vector3::new(1.5, 3.9, -0.4),
        ];
        let velocities = [
            Vector3::new(1.0, 0.2, 0.0),
            Vector3::new(-0.8, 0.1, 0.1),
            Vector3::new(0.2, -1.0, 0.0),
        ];
        let z = FlatTeamState::from_parts(
            &positions,
            &[0.0; 3],
            &velocities,
            &[0.0; 3],
            &[Vector3::zeros(); 3],
            &[0.0; 3],
        );
        let g = assemble_gradient(&z, &cfg).unwrap();

        // Frozen weights from the base state.
        let frozen: Vec<((usize, usize), f64)> = g
            .pairs
            .iter()
            .map(|p| ((p.i, p.j), p.weight))
            .collect();
        let weight_of = |i: usize, j: usize| {
            frozen
                .iter()
                .find(|((a, b), _)| *a == i && *b == j)
                .unwrap()
                .1
        };

        let h = 1e-6;
        for i in 0..n {
            for axis in 0..3 {
                let eval = |shift: f64| {
                    let mut ps = positions;
                    ps[i][axis] += shift;
                    let mut total = 0.0;
                    for j in 0..n {
                        if j == i {
                            continue;
                        }
                        total += weight_of(i, j)
                            * penalty_from_positions(&ps[i], &ps[j], i, j, &cfg).unwrap();
                    }
                    total
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let got = g.stacked[layout::acc(n, i) + axis];
                assert!(
                    (got - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "vehicle {i} axis {axis}: stacked {got} vs fd {fd}"
                );
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn weights_stay_in_unit_interval(
            p_i in proptest::array::uniform3(-50.0f64..50.0),
            p_j in proptest::array::uniform3(-50.0f64..50.0),
            v_i in proptest::array::uniform3(-20.0f64..20.0),
            v_j in proptest::array::uniform3(-20.0f64..20.0),
        ) {
            let p_i = Vector3::from(p_i);
            let p_j = Vector3::from(p_j);
            let v_i = Vector3::from(v_i);
            let v_j = Vector3::from(v_j);
            for w in [
                forward_weight(&p_i, &p_j, &v_i),
                approach_weight(&p_i, &p_j, &v_i, &v_j),
                unified_weight(&p_i, &p_j, &v_i, &v_j),
            ] {
                proptest::prop_assert!((0.0..=1.0).contains(&w), "weight {} out of range", w);
            }
        }

        #[test]
        fn penalty_positive_exactly_in_reaction_band(
            dist in 0.1f64..12.0,
            dir in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            let dir = Vector3::from(dir);
            proptest::prop_assume!(dir.norm() > 1e-3);
            let cfg = SafetyConfig::new(vec![1.5; 2], vec![3.0; 2], AvoidanceStrategy::Basic)
                .unwrap();
            let p_i = Vector3::new(1.0, -2.0, 0.5);
            let p_j = p_i + dir.normalize() * dist;
            let (inner, outer) = cfg.pair_bounds(0, 1);
            match classify_pair(dist, inner, outer) {
                PairRegion::Singular => {
                    proptest::prop_assert!(penalty_from_positions(&p_i, &p_j, 0, 1, &cfg).is_err());
                }
                region => {
                    let v = penalty_from_positions(&p_i, &p_j, 0, 1, &cfg).unwrap();
                    proptest::prop_assert_eq!(v > 0.0, region == PairRegion::Reaction);
                }
            }
        }
    }

    #[test]
    fn forward_weight_derivative_bounds() {
        // Finite-difference norms of the forward weight against the
        // analytic bounds 2/|p_j - p_i| and 2/|v_i|, away from the clamp.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 2000 {
            let p_i = Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            );
            let p_j = p_i
                + Vector3::new(
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-8.0..8.0),
                    rng.gen_range(-8.0..8.0),
                );
            let v_i = Vector3::new(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-4.0..4.0),
            );
            let sight = p_j - p_i;
            if sight.norm() < 0.5 || v_i.norm() < 0.5 {
                continue;
            }
            let cos = sight.dot(&v_i) / (sight.norm() * v_i.norm());
            if cos < 0.05 {
                continue;
            }
            checked += 1;
            let h = 1e-6;
            let mut grad_p = Vector3::zeros();
            let mut grad_v = Vector3::zeros();
            for axis in 0..3 {
                let mut dp = Vector3::zeros();
                dp[axis] = h;
                grad_p[axis] = (forward_weight(&(p_i + dp), &p_j, &v_i)
                    - forward_weight(&(p_i - dp), &p_j, &v_i))
                    / (2.0 * h);
                grad_v[axis] = (forward_weight(&p_i, &p_j, &(v_i + dp))
                    - forward_weight(&p_i, &p_j, &(v_i - dp)))
                    / (2.0 * h);
            }
            assert!(
                grad_p.norm() <= 2.0 / sight.norm() + 1e-6,
                "position derivative {} exceeds bound {}",
                grad_p.norm(),
                2.0 / sight.norm()
            );
            assert!(
                grad_v.norm() <= 2.0 / v_i.norm() + 1e-6,
                "velocity derivative {} exceeds bound {}",
                grad_v.norm(),
                2.0 / v_i.norm()
            );
        }
    }
}
