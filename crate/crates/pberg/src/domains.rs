//! Bounded domains in ℂⁿ (n ≤ 3) and quadrature rules approximating
//! integration against the canonical volume form `dλ_n` (Lebesgue measure on
//! ℝ^{2n}).
//!
//! Disk, ball, ellipse and polydisk domains get smooth product rules:
//! Gauss–Legendre in the squared radial variables times equispaced angles, so
//! that monomial Gram matrices are integrated exactly up to a degree tied to
//! the resolution. Indicator domains get a deterministic masked midpoint rule
//! over their bounding box; no randomness anywhere, so every rule is
//! reproducible bit for bit. All weight sums are accumulated with compensated
//! summation.

use std::fmt;
use std::sync::Arc;

use crate::linalg::{gauss_legendre, par_sum, NeumaierSum};
use crate::{C64, Error, Result};

/// Axis-aligned box in ℂⁿ: per complex coordinate a rectangle
/// `[re_lo, re_hi] × [im_lo, im_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    /// One entry per complex dimension: `[re_lo, re_hi, im_lo, im_hi]`.
    pub intervals: Vec<[f64; 4]>,
}

impl BoundingBox {
    pub fn new(intervals: Vec<[f64; 4]>) -> Result<Self> {
        if intervals.is_empty() || intervals.len() > 3 {
            return Err(Error::Validation(format!(
                "bounding box must cover 1..=3 complex dimensions, got {}",
                intervals.len()
            )));
        }
        for iv in &intervals {
            if !(iv[1] > iv[0] && iv[3] > iv[2]) {
                return Err(Error::Validation(
                    "bounding box must have positive measure".into(),
                ));
            }
        }
        Ok(Self { intervals })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, point: &[C64]) -> bool {
        self.intervals.iter().zip(point).all(|(iv, z)| {
            z.re >= iv[0] && z.re <= iv[1] && z.im >= iv[2] && z.im <= iv[3]
        })
    }

    pub fn center(&self) -> Vec<C64> {
        self.intervals
            .iter()
            .map(|iv| C64::new(0.5 * (iv[0] + iv[1]), 0.5 * (iv[2] + iv[3])))
            .collect()
    }
}

/// Membership predicate for indicator domains.
pub type Membership = Arc<dyn Fn(&[C64]) -> bool + Send + Sync>;

/// The supported domain shapes.
#[derive(Clone)]
pub enum DomainKind {
    /// Disk of the given center and radius in ℂ.
    Disk { center: C64, radius: f64 },
    /// Euclidean ball `{ Σ|z_j|² < r² }` centered at the origin of ℂⁿ.
    Ball { radius: f64 },
    /// `{ (x/a)² + (y/b)² < 1 }` in ℂ, axes along the real/imaginary axes.
    Ellipse { semi_x: f64, semi_y: f64 },
    /// Product of disks centered at the origin, one radius per coordinate.
    Polydisk { radii: Vec<f64> },
    /// General region given by a bounding box and a membership test.
    Indicator {
        bounding_box: BoundingBox,
        membership: Membership,
    },
    /// Fiber of a Hartogs family: the disk `{ |z| < r }` in ℂ.
    HartogsFiber { radius: f64 },
}

impl fmt::Debug for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Disk { center, radius } => f
                .debug_struct("Disk")
                .field("center", center)
                .field("radius", radius)
                .finish(),
            DomainKind::Ball { radius } => {
                f.debug_struct("Ball").field("radius", radius).finish()
            }
            DomainKind::Ellipse { semi_x, semi_y } => f
                .debug_struct("Ellipse")
                .field("semi_x", semi_x)
                .field("semi_y", semi_y)
                .finish(),
            DomainKind::Polydisk { radii } => {
                f.debug_struct("Polydisk").field("radii", radii).finish()
            }
            DomainKind::Indicator { bounding_box, .. } => f
                .debug_struct("Indicator")
                .field("bounding_box", bounding_box)
                .finish_non_exhaustive(),
            DomainKind::HartogsFiber { radius } => f
                .debug_struct("HartogsFiber")
                .field("radius", radius)
                .finish(),
        }
    }
}

/// A bounded domain in ℂⁿ with a membership test and metadata consumed by the
/// isometry branch checks.
#[derive(Debug, Clone)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
    simply_connected: bool,
}

impl Domain {
    fn checked(kind: DomainKind, dim: usize, simply_connected: bool) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::Validation(format!(
                "complex dimension must be 1..=3, got {dim}"
            )));
        }
        Ok(Self {
            kind,
            dim,
            simply_connected,
        })
    }

    pub fn disk(center: C64, radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Self::checked(DomainKind::Disk { center, radius }, 1, true)
    }

    /// The unit disk 𝔻 ⊂ ℂ.
    pub fn unit_disk() -> Self {
        Self::disk(C64::new(0.0, 0.0), 1.0).expect("unit disk is valid")
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Self::checked(DomainKind::Ball { radius }, dim, true)
    }

    pub fn ellipse(semi_x: f64, semi_y: f64) -> Result<Self> {
        positive("semi-axis", semi_x)?;
        positive("semi-axis", semi_y)?;
        Self::checked(DomainKind::Ellipse { semi_x, semi_y }, 1, true)
    }

    pub fn polydisk(radii: Vec<f64>) -> Result<Self> {
        for &r in &radii {
            positive("radius", r)?;
        }
        let dim = radii.len();
        Self::checked(DomainKind::Polydisk { radii }, dim, true)
    }

    pub fn hartogs_fiber(radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Self::checked(DomainKind::HartogsFiber { radius }, 1, true)
    }

    pub fn indicator(
        bounding_box: BoundingBox,
        membership: Membership,
        simply_connected: bool,
    ) -> Result<Self> {
        let dim = bounding_box.dim();
        Self::checked(
            DomainKind::Indicator {
                bounding_box,
                membership,
            },
            dim,
            simply_connected,
        )
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    /// Complex dimension n.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn simply_connected(&self) -> bool {
        self.simply_connected
    }

    /// Membership test. Boundary points count as outside.
    pub fn contains(&self, point: &[C64]) -> bool {
        if point.len() != self.dim {
            return false;
        }
        match &self.kind {
            DomainKind::Disk { center, radius } => (point[0] - center).norm() < *radius,
            DomainKind::Ball { radius } => {
                point.iter().map(|z| z.norm_sqr()).sum::<f64>() < radius * radius
            }
            DomainKind::Ellipse { semi_x, semi_y } => {
                let z = point[0];
                (z.re / semi_x).powi(2) + (z.im / semi_y).powi(2) < 1.0
            }
            DomainKind::Polydisk { radii } => {
                point.iter().zip(radii).all(|(z, r)| z.norm() < *r)
            }
            DomainKind::Indicator {
                bounding_box,
                membership,
            } => bounding_box.contains(point) && membership(point),
            DomainKind::HartogsFiber { radius } => point[0].norm() < *radius,
        }
    }

    /// A representative interior point (used to anchor branch choices).
    pub fn center(&self) -> Vec<C64> {
        match &self.kind {
            DomainKind::Disk { center, .. } => vec![*center],
            DomainKind::Indicator { bounding_box, .. } => bounding_box.center(),
            _ => vec![C64::new(0.0, 0.0); self.dim],
        }
    }

    /// The domain scaled by `r` about the origin: `r·Ω`.
    pub fn scaled(&self, r: f64) -> Result<Self> {
        positive("scale factor", r)?;
        let kind = match &self.kind {
            DomainKind::Disk { center, radius } => DomainKind::Disk {
                center: center * r,
                radius: radius * r,
            },
            DomainKind::Ball { radius } => DomainKind::Ball { radius: radius * r },
            DomainKind::Ellipse { semi_x, semi_y } => DomainKind::Ellipse {
                semi_x: semi_x * r,
                semi_y: semi_y * r,
            },
            DomainKind::Polydisk { radii } => DomainKind::Polydisk {
                radii: radii.iter().map(|x| x * r).collect(),
            },
            DomainKind::HartogsFiber { radius } => {
                DomainKind::HartogsFiber { radius: radius * r }
            }
            DomainKind::Indicator {
                bounding_box,
                membership,
            } => {
                let inner = membership.clone();
                let intervals = bounding_box
                    .intervals
                    .iter()
                    .map(|iv| [iv[0] * r, iv[1] * r, iv[2] * r, iv[3] * r])
                    .collect();
                DomainKind::Indicator {
                    bounding_box: BoundingBox::new(intervals)?,
                    membership: Arc::new(move |p: &[C64]| {
                        let shrunk: Vec<C64> = p.iter().map(|z| z / r).collect();
                        inner(&shrunk)
                    }),
                }
            }
        };
        Ok(Self {
            kind,
            dim: self.dim,
            simply_connected: self.simply_connected,
        })
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} must be strictly positive and finite, got {value}"
        )))
    }
}

/// Nodes in ℂⁿ with positive weights approximating `∫_Ω · dλ_n`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    dim: usize,
    /// Flat node storage, `dim` entries per node.
    nodes: Vec<C64>,
    weights: Vec<f64>,
    est_error: f64,
    /// Ring structure of polar product rules (solvers exploit it).
    pub(crate) rings: Option<RingLayout>,
}

/// Layout marker for rules whose nodes come in concentric rings of
/// equispaced angles, ring-major.
#[derive(Debug, Clone)]
pub(crate) struct RingLayout {
    pub center: C64,
    pub n_theta: usize,
    pub radii: Vec<f64>,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[C64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Estimated relative integration error for smooth integrands, from a
    /// resolution-halving comparison.
    pub fn est_error(&self) -> f64 {
        self.est_error
    }

    /// Compensated, deterministic (thread-count independent) quadrature sum
    /// `Σ w_i f(x_i)`.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[C64]) -> f64 + Sync,
    {
        par_sum(self.len(), |i| self.weights[i] * f(self.node(i)))
    }

    pub fn weight_sum(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for &w in &self.weights {
            acc.add(w);
        }
        acc.total()
    }
}

/// Build a quadrature rule for `domain` at the given resolution.
///
/// Node counts grow polynomially in `resolution`. The returned `est_error` is
/// the relative discrepancy between this rule and the one at half resolution
/// on the integrands `1`, `|z|²`, `Re z₁`.
pub fn build_quadrature(domain: &Domain, resolution: usize) -> Result<QuadratureRule> {
    if resolution < 4 {
        return Err(Error::Validation(format!(
            "resolution must be at least 4, got {resolution}"
        )));
    }
    let fine = build_raw(domain, resolution)?;
    let coarse = build_raw(domain, (resolution / 2).max(4))?;
    let mut est: f64 = 0.0;
    for probe in [
        |_: &[C64]| 1.0,
        |p: &[C64]| p.iter().map(|z| z.norm_sqr()).sum::<f64>(),
        |p: &[C64]| p[0].re,
    ] {
        let a = fine.integrate(probe);
        let b = coarse.integrate(probe);
        let scale = a.abs().max(fine.weight_sum().abs()).max(f64::MIN_POSITIVE);
        est = est.max((a - b).abs() / scale);
    }
    Ok(QuadratureRule {
        est_error: est.max(32.0 * f64::EPSILON),
        ..fine
    })
}

fn build_raw(domain: &Domain, res: usize) -> Result<QuadratureRule> {
    match domain.kind() {
        DomainKind::Disk { center, radius } => Ok(disk_rule(*center, *radius, res)),
        DomainKind::HartogsFiber { radius } => Ok(disk_rule(C64::new(0.0, 0.0), *radius, res)),
        DomainKind::Ellipse { semi_x, semi_y } => Ok(ellipse_rule(*semi_x, *semi_y, res)),
        DomainKind::Ball { radius } => Ok(ball_rule(domain.dim(), *radius, res)),
        DomainKind::Polydisk { radii } => Ok(polydisk_rule(radii, res)),
        DomainKind::Indicator {
            bounding_box,
            membership,
        } => indicator_rule(bounding_box, membership, res),
    }
}

/// Angular node count per complex coordinate. In one dimension the rule stays
/// alias-free for monomial products up to degree `res`; in higher dimensions
/// the per-axis count is lowered to keep the tensor size manageable, which
/// still covers the default basis degrees.
fn angular_count(dim: usize, res: usize) -> usize {
    if dim == 1 {
        2 * res + 1
    } else {
        res + 1
    }
}

fn disk_rule(center: C64, radius: f64, res: usize) -> QuadratureRule {
    // u = r² substitution: ∫_disk f dλ = ∫₀^{2π}∫₀^{R²} f(c+√u e^{iθ}) du/2 dθ.
    let (us, wus) = gauss_legendre(res, 0.0, radius * radius);
    let ntheta = angular_count(1, res);
    let wtheta = std::f64::consts::TAU / ntheta as f64;
    let mut nodes = Vec::with_capacity(res * ntheta);
    let mut weights = Vec::with_capacity(res * ntheta);
    let mut radii = Vec::with_capacity(res);
    for (&u, &wu) in us.iter().zip(&wus) {
        let r = u.sqrt();
        radii.push(r);
        for k in 0..ntheta {
            let theta = std::f64::consts::TAU * k as f64 / ntheta as f64;
            nodes.push(center + C64::from_polar(r, theta));
            weights.push(0.5 * wu * wtheta);
        }
    }
    QuadratureRule {
        dim: 1,
        nodes,
        weights,
        est_error: 0.0,
        rings: Some(RingLayout {
            center,
            n_theta: ntheta,
            radii,
        }),
    }
}

fn ellipse_rule(semi_x: f64, semi_y: f64, res: usize) -> QuadratureRule {
    // Affine image of the unit disk; dλ picks up the factor a·b.
    let base = disk_rule(C64::new(0.0, 0.0), 1.0, res);
    let nodes = base
        .nodes
        .iter()
        .map(|z| C64::new(semi_x * z.re, semi_y * z.im))
        .collect();
    let weights = base
        .weights
        .iter()
        .map(|w| w * semi_x * semi_y)
        .collect();
    QuadratureRule {
        dim: 1,
        nodes,
        weights,
        est_error: 0.0,
        rings: None,
    }
}

fn ball_rule(dim: usize, radius: f64, res: usize) -> QuadratureRule {
    if dim == 1 {
        return disk_rule(C64::new(0.0, 0.0), radius, res);
    }
    // z_j = ρ √σ_j e^{iθ_j} with u = ρ² ∈ [0,1], σ on the simplex:
    // Π r_j dr_j = 2^{-n} u^{n-1} du dσ₁…dσ_{n-1}.
    let (us, wus) = gauss_legendre(res, 0.0, 1.0);
    let ntheta = angular_count(dim, res);
    let wtheta = std::f64::consts::TAU / ntheta as f64;
    let thetas: Vec<f64> = (0..ntheta)
        .map(|k| std::f64::consts::TAU * k as f64 / ntheta as f64)
        .collect();

    // Simplex factors (σ_1..σ_n, weight) including the simplex Jacobian.
    let simplex: Vec<(Vec<f64>, f64)> = match dim {
        2 => {
            let (ss, wss) = gauss_legendre(res, 0.0, 1.0);
            ss.iter()
                .zip(&wss)
                .map(|(&s, &ws)| (vec![1.0 - s, s], ws))
                .collect()
        }
        3 => {
            // Duffy map σ₁ = x₁, σ₂ = (1−x₁)x₂ with Jacobian (1−x₁).
            let (xs, wxs) = gauss_legendre(res, 0.0, 1.0);
            let mut v = Vec::with_capacity(res * res);
            for (&x1, &w1) in xs.iter().zip(&wxs) {
                for (&x2, &w2) in xs.iter().zip(&wxs) {
                    let s1 = x1;
                    let s2 = (1.0 - x1) * x2;
                    v.push((vec![s1, s2, 1.0 - s1 - s2], w1 * w2 * (1.0 - x1)));
                }
            }
            v
        }
        _ => unreachable!("ball dimension validated to 1..=3"),
    };

    let pow2n = (1u32 << dim) as f64;
    let scale_w = radius.powi(2 * dim as i32);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut angle_idx = vec![0usize; dim];
    for (&u, &wu) in us.iter().zip(&wus) {
        let rho = u.sqrt();
        let radial_w = wu * u.powi(dim as i32 - 1) / pow2n;
        for (sigmas, ws) in &simplex {
            let moduli: Vec<f64> = sigmas.iter().map(|s| rho * s.max(0.0).sqrt()).collect();
            // Tensor loop over the torus of angles.
            angle_idx.iter_mut().for_each(|a| *a = 0);
            loop {
                for j in 0..dim {
                    nodes.push(C64::from_polar(radius * moduli[j], thetas[angle_idx[j]]));
                }
                weights.push(scale_w * radial_w * ws * wtheta.powi(dim as i32));
                // Increment the multi-index of angles.
                let mut j = 0;
                loop {
                    angle_idx[j] += 1;
                    if angle_idx[j] < ntheta {
                        break;
                    }
                    angle_idx[j] = 0;
                    j += 1;
                    if j == dim {
                        break;
                    }
                }
                if j == dim {
                    break;
                }
            }
        }
    }
    QuadratureRule {
        dim,
        nodes,
        weights,
        est_error: 0.0,
        rings: None,
    }
}

fn polydisk_rule(radii: &[f64], res: usize) -> QuadratureRule {
    let dim = radii.len();
    if dim == 1 {
        return disk_rule(C64::new(0.0, 0.0), radii[0], res);
    }
    let ntheta = angular_count(dim, res);
    let wtheta = std::f64::consts::TAU / ntheta as f64;
    // Per-coordinate polar factors (modulus, weight).
    let factors: Vec<Vec<(f64, f64)>> = radii
        .iter()
        .map(|&r| {
            let (us, wus) = gauss_legendre(res, 0.0, r * r);
            us.iter()
                .zip(&wus)
                .map(|(&u, &wu)| (u.sqrt(), 0.5 * wu * wtheta))
                .collect::<Vec<_>>()
        })
        .collect();
    let thetas: Vec<f64> = (0..ntheta)
        .map(|k| std::f64::consts::TAU * k as f64 / ntheta as f64)
        .collect();

    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    // Tensor over (radial index, angle index) per coordinate.
    let per_dim: usize = factors[0].len() * ntheta;
    let total: usize = per_dim.pow(dim as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        for j in 0..dim {
            let local = rem % per_dim;
            rem /= per_dim;
            let (ri, ti) = (local / ntheta, local % ntheta);
            let (modulus, wf) = factors[j][ri];
            nodes.push(C64::from_polar(modulus, thetas[ti]));
            w *= wf;
        }
        weights.push(w);
    }
    QuadratureRule {
        dim,
        nodes,
        weights,
        est_error: 0.0,
        rings: None,
    }
}

fn indicator_rule(
    bbox: &BoundingBox,
    membership: &Membership,
    res: usize,
) -> Result<QuadratureRule> {
    let dim = bbox.dim();
    // res midpoint cells per real axis, 2n axes in total.
    let axes: Vec<(f64, f64)> = bbox
        .intervals
        .iter()
        .flat_map(|iv| [(iv[0], iv[1]), (iv[2], iv[3])])
        .collect();
    let steps: Vec<f64> = axes.iter().map(|&(lo, hi)| (hi - lo) / res as f64).collect();
    let cell_volume: f64 = steps.iter().product();
    let naxes = axes.len();
    let total = res.pow(naxes as u32);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut coords = vec![0.0f64; naxes];
    let mut point = vec![C64::new(0.0, 0.0); dim];
    for flat in 0..total {
        let mut rem = flat;
        for a in 0..naxes {
            let idx = rem % res;
            rem /= res;
            coords[a] = axes[a].0 + (idx as f64 + 0.5) * steps[a];
        }
        for j in 0..dim {
            point[j] = C64::new(coords[2 * j], coords[2 * j + 1]);
        }
        if membership(&point) {
            nodes.extend_from_slice(&point);
            weights.push(cell_volume);
        }
    }
    if weights.is_empty() {
        return Err(Error::Validation(
            "indicator domain has zero sampled measure at this resolution".into(),
        ));
    }
    Ok(QuadratureRule {
        dim,
        nodes,
        weights,
        est_error: 0.0,
        rings: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn unit_disk_weight_sum_is_pi() {
        let rule = build_quadrature(&Domain::unit_disk(), 32).unwrap();
        assert_relative_eq!(rule.weight_sum(), PI, max_relative = 1e-10);
    }

    #[test]
    fn ball_c2_weight_sum() {
        let rule = build_quadrature(&Domain::ball(2, 1.0).unwrap(), 24).unwrap();
        assert_relative_eq!(rule.weight_sum(), PI * PI / 2.0, max_relative = 1e-8);
    }

    #[test]
    fn ball_c3_weight_sum() {
        let rule = build_quadrature(&Domain::ball(3, 1.0).unwrap(), 8).unwrap();
        assert_relative_eq!(rule.weight_sum(), PI.powi(3) / 6.0, max_relative = 1e-8);
    }

    #[test]
    fn ellipse_weight_sum() {
        let rule = build_quadrature(&Domain::ellipse(1.0, 0.5).unwrap(), 32).unwrap();
        assert_relative_eq!(rule.weight_sum(), 0.5 * PI, max_relative = 1e-6);
    }

    #[test]
    fn polydisk_weight_sum() {
        let rule = build_quadrature(&Domain::polydisk(vec![1.0, 0.5]).unwrap(), 8).unwrap();
        assert_relative_eq!(rule.weight_sum(), PI * PI * 0.25, max_relative = 1e-8);
    }

    #[test]
    fn all_nodes_are_members() {
        for (domain, res) in [
            (Domain::unit_disk(), 16),
            (Domain::ball(2, 1.0).unwrap(), 8),
            (Domain::ellipse(1.0, 0.5).unwrap(), 16),
            (Domain::polydisk(vec![1.0, 0.5]).unwrap(), 6),
        ] {
            let rule = build_quadrature(&domain, res).unwrap();
            for i in 0..rule.len() {
                // Product-rule nodes sit strictly inside (Gauss nodes avoid
                // the boundary).
                assert!(domain.contains(rule.node(i)), "node {i} outside {domain:?}");
            }
            assert!(rule.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn indicator_midpoint_rule_square() {
        // Unit square [0,1]² in ℂ: area 1.
        let bbox = BoundingBox::new(vec![[0.0, 1.0, 0.0, 1.0]]).unwrap();
        let dom = Domain::indicator(bbox, Arc::new(|_: &[C64]| true), true).unwrap();
        let rule = build_quadrature(&dom, 16).unwrap();
        assert_relative_eq!(rule.weight_sum(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn indicator_zero_measure_rejected() {
        let bbox = BoundingBox::new(vec![[0.0, 1.0, 0.0, 1.0]]).unwrap();
        let dom = Domain::indicator(bbox, Arc::new(|_: &[C64]| false), true).unwrap();
        assert!(matches!(
            build_quadrature(&dom, 8),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn resolution_below_four_rejected() {
        assert!(matches!(
            build_quadrature(&Domain::unit_disk(), 3),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn refinement_differences_shrink() {
        // Smooth product rules: consecutive refinement differences must not
        // grow along a doubling ladder until they hit roundoff (hence the
        // epsilon guard on the plateau).
        for domain in [
            Domain::unit_disk(),
            Domain::ellipse(1.0, 0.5).unwrap(),
            Domain::ball(2, 1.0).unwrap(),
        ] {
            for probe in [
                |_: &[C64]| 1.0,
                |p: &[C64]| p.iter().map(|z| z.norm_sqr()).sum::<f64>(),
                |p: &[C64]| p[0].re,
            ] {
                let resolutions = [4usize, 8, 16, 32];
                let values: Vec<f64> = resolutions
                    .iter()
                    .map(|&r| build_raw(&domain, r).unwrap().integrate(probe))
                    .collect();
                let scale = values[0].abs().max(1.0);
                let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
                for pair in diffs.windows(2) {
                    assert!(
                        pair[1] <= pair[0] + 64.0 * f64::EPSILON * scale,
                        "refinement differences not decreasing: {diffs:?}"
                    );
                }
            }
        }
        // Masked midpoint rules converge too, but their O(h) boundary error
        // oscillates; assert overall decay across two doublings instead of
        // stepwise monotonicity. Off-center circle to avoid grid-symmetry
        // ties.
        let bbox = BoundingBox::new(vec![[-1.0, 1.0, -1.0, 1.0]]).unwrap();
        let disk = Domain::indicator(
            bbox,
            Arc::new(|p: &[C64]| (p[0] - C64::new(0.1, 0.05)).norm() < 0.8),
            true,
        )
        .unwrap();
        let areas: Vec<f64> = [8usize, 16, 64, 128]
            .iter()
            .map(|&r| build_raw(&disk, r).unwrap().weight_sum())
            .collect();
        let early = (areas[1] - areas[0]).abs();
        let late = (areas[3] - areas[2]).abs();
        assert!(late < early, "indicator refinement not converging: {areas:?}");
    }

    #[test]
    fn scaling_integrates_to_scaled_volume() {
        let base = Domain::unit_disk();
        let rule = build_quadrature(&base, 16).unwrap();
        for r in [0.5, 2.0] {
            let scaled = base.scaled(r).unwrap();
            let srule = build_quadrature(&scaled, 16).unwrap();
            let combined = rule.est_error() + srule.est_error();
            let expected = r.powi(2) * rule.weight_sum();
            assert!(
                (srule.weight_sum() - expected).abs() <= combined.max(1e-12) * expected,
                "scaled volume mismatch"
            );
        }
    }
}
