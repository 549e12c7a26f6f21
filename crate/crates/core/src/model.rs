//! Model constants, the band partition of `[d_depth, 1]`, and the fractal
//! lattices `{ β^i (1-β)^j x }` with exact coordinates.
//!
//! A rupture ratio `r` fixes `β = r/(1+r)` and the uniformization rate
//! `λ₀ = (β² + (1-β)²)/4`. Sizes are never stored as bare floats inside the
//! simulators: every particle carries a [`FractalCoord`] (root index plus an
//! exponent pair), so lattice membership is decided by coordinate identity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative distance below which a lattice point counts as tied with a threshold.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Largest `i + j` inspected by the boundary-tie guard.
const TIE_GUARD_ORDER: u32 = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("rupture ratio r = {0} must lie strictly inside (0, 1)")]
    RatioOutOfRange(f64),
    #[error("threshold violation: {0}")]
    ThresholdViolation(String),
    #[error("lattice point beta^{i} (1-beta)^{j} = {value} ties threshold d_{k} = {threshold}")]
    BoundaryTie {
        i: u32,
        j: u32,
        value: f64,
        k: usize,
        threshold: f64,
    },
    #[error("size {x} lies below the resolution d_depth = {floor}")]
    BelowResolution { x: f64, floor: f64 },
    #[error("size {0} exceeds 1")]
    AboveUnit(f64),
    #[error("size {0} lies outside [0, 1]")]
    OutOfUnit(f64),
    #[error("root index {index} out of range ({len} roots)")]
    BadRootIndex { index: usize, len: usize },
    #[error("band index {index} out of range (depth {depth})")]
    BadBand { index: usize, depth: usize },
}

/// Validated model constants.
///
/// `thresholds[k]` is `d_{k+1}`; band `k` is `[d_{k+1}, d_k)` with the top band
/// `[d_1, 1]` closed at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    r: f64,
    beta: f64,
    lambda0: f64,
    thresholds: Vec<f64>,
}

impl ModelParams {
    pub fn new(r: f64, thresholds: Vec<f64>) -> Result<Self, ModelError> {
        if !(r > 0.0 && r < 1.0) {
            return Err(ModelError::RatioOutOfRange(r));
        }
        let beta = r / (1.0 + r);
        let lambda0 = (beta * beta + (1.0 - beta) * (1.0 - beta)) / 4.0;

        if thresholds.is_empty() {
            return Err(ModelError::ThresholdViolation(
                "threshold list is empty".into(),
            ));
        }
        for (k, &d) in thresholds.iter().enumerate() {
            if !(d > 0.0 && d < 1.0) {
                return Err(ModelError::ThresholdViolation(format!(
                    "d_{} = {d} is not in (0, 1)",
                    k + 1
                )));
            }
        }
        if thresholds[0] >= beta {
            return Err(ModelError::ThresholdViolation(format!(
                "d_1 = {} must be below beta = {beta}",
                thresholds[0]
            )));
        }
        for (k, w) in thresholds.windows(2).enumerate() {
            if w[1] / w[0] >= beta {
                return Err(ModelError::ThresholdViolation(format!(
                    "d_{}/d_{} = {} must be below beta = {beta}",
                    k + 2,
                    k + 1,
                    w[1] / w[0]
                )));
            }
        }

        let params = Self {
            r,
            beta,
            lambda0,
            thresholds,
        };
        params.check_boundary_ties()?;
        Ok(params)
    }

    /// Thresholds `d_k = base^{-k}` for `k = 1..=depth`.
    pub fn with_geometric_thresholds(r: f64, base: f64, depth: usize) -> Result<Self, ModelError> {
        if !(base > 1.0) || depth == 0 {
            return Err(ModelError::ThresholdViolation(format!(
                "geometric rule needs base > 1 and depth >= 1 (got base {base}, depth {depth})"
            )));
        }
        let thresholds = (1..=depth).map(|k| base.powi(-(k as i32))).collect();
        Self::new(r, thresholds)
    }

    fn check_boundary_ties(&self) -> Result<(), ModelError> {
        for i in 0..=TIE_GUARD_ORDER {
            for j in 0..=(TIE_GUARD_ORDER - i) {
                let value = lattice_value(1.0, self.beta, i, j);
                for (k, &d) in self.thresholds.iter().enumerate() {
                    if (value - d).abs() <= TIE_TOLERANCE * d {
                        return Err(ModelError::BoundaryTie {
                            i,
                            j,
                            value,
                            k: k + 1,
                            threshold: d,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn depth(&self) -> usize {
        self.thresholds.len()
    }

    /// `d_depth`, the smallest representable size.
    pub fn floor(&self) -> f64 {
        self.thresholds[self.thresholds.len() - 1]
    }

    /// The same model cut down to the first `level` thresholds.
    pub fn truncated(&self, level: usize) -> Result<Self, ModelError> {
        if level == 0 || level > self.depth() {
            return Err(ModelError::BadBand {
                index: level,
                depth: self.depth(),
            });
        }
        Ok(Self {
            thresholds: self.thresholds[..level].to_vec(),
            ..self.clone()
        })
    }

    pub fn band_of(&self, x: f64) -> Result<BandIndex, ModelError> {
        band_of(x, self)
    }

    /// Lower edge `d_{k+1}` of band `k`.
    pub fn band_lower(&self, band: BandIndex) -> f64 {
        self.thresholds[band.0]
    }

    /// Upper end of band `k`: 1 for the top band, `d_k` otherwise.
    pub fn band_upper(&self, band: BandIndex) -> f64 {
        if band.0 == 0 {
            1.0
        } else {
            self.thresholds[band.0 - 1]
        }
    }
}

/// Band `k` is `E'_k = [d_{k+1}, d_k)`, with `E'_0 = [d_1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BandIndex(pub usize);

pub fn make_params(r: f64, thresholds: &[f64]) -> Result<ModelParams, ModelError> {
    ModelParams::new(r, thresholds.to_vec())
}

pub fn band_of(x: f64, params: &ModelParams) -> Result<BandIndex, ModelError> {
    if x > 1.0 {
        return Err(ModelError::AboveUnit(x));
    }
    let floor = params.floor();
    if !(x >= floor) {
        return Err(ModelError::BelowResolution { x, floor });
    }
    // thresholds are decreasing: the band is the first k with x >= d_{k+1}
    let k = params
        .thresholds
        .iter()
        .position(|&d| x >= d)
        .expect("x >= d_depth");
    Ok(BandIndex(k))
}

#[inline]
pub(crate) fn lattice_value(root: f64, beta: f64, i: u32, j: u32) -> f64 {
    root * beta.powi(i as i32) * (1.0 - beta).powi(j as i32)
}

/// Exact address of a particle size.
///
/// Unclipped: `β^i (1-β)^j · roots[root]`. Clipped: the lower edge of
/// `clipped_band`, with `(i, j)` keeping the exponents proposed before the clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FractalCoord {
    pub root: usize,
    pub i: u32,
    pub j: u32,
    pub clipped_band: Option<usize>,
}

/// The point a coordinate denotes, forgetting pre-clip history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Lattice { root: usize, i: u32, j: u32 },
    Edge { band: usize },
}

impl FractalCoord {
    pub const fn root(root: usize) -> Self {
        Self {
            root,
            i: 0,
            j: 0,
            clipped_band: None,
        }
    }

    pub const fn lattice(root: usize, i: u32, j: u32) -> Self {
        Self {
            root,
            i,
            j,
            clipped_band: None,
        }
    }

    pub fn is_clipped(&self) -> bool {
        self.clipped_band.is_some()
    }

    pub fn site(&self) -> Site {
        match self.clipped_band {
            Some(band) => Site::Edge { band },
            None => Site::Lattice {
                root: self.root,
                i: self.i,
                j: self.j,
            },
        }
    }

    /// The coordinate `β^di (1-β)^dj` below this one (lattice coordinates only).
    pub fn descend(&self, di: u32, dj: u32) -> Self {
        debug_assert!(!self.is_clipped());
        Self {
            root: self.root,
            i: self.i + di,
            j: self.j + dj,
            clipped_band: None,
        }
    }

    /// This proposal, placed at the lower edge of `band`.
    pub fn clipped_to(&self, band: BandIndex) -> Self {
        Self {
            clipped_band: Some(band.0),
            ..*self
        }
    }
}

pub fn coord_value(
    c: &FractalCoord,
    roots: &[f64],
    params: &ModelParams,
) -> Result<f64, ModelError> {
    if let Some(band) = c.clipped_band {
        if band >= params.depth() {
            return Err(ModelError::BadBand {
                index: band,
                depth: params.depth(),
            });
        }
        return Ok(params.thresholds[band]);
    }
    let root = roots.get(c.root).ok_or(ModelError::BadRootIndex {
        index: c.root,
        len: roots.len(),
    })?;
    Ok(lattice_value(*root, params.beta, c.i, c.j))
}

/// Model parameters together with the root sizes coordinates refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    params: ModelParams,
    roots: Vec<f64>,
}

impl Lattice {
    pub fn new(params: ModelParams, roots: Vec<f64>) -> Result<Self, ModelError> {
        for &x in &roots {
            if !(0.0..=1.0).contains(&x) {
                return Err(ModelError::OutOfUnit(x));
            }
        }
        Ok(Self { params, roots })
    }

    /// A lattice whose roots must all be resolvable (`≥ d_depth`).
    pub fn resolved(params: ModelParams, roots: Vec<f64>) -> Result<Self, ModelError> {
        for &x in &roots {
            band_of(x, &params)?;
        }
        Self::new(params, roots)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    pub fn value(&self, c: &FractalCoord) -> f64 {
        coord_value(c, &self.roots, &self.params).expect("coordinate belongs to this lattice")
    }

    pub fn try_value(&self, c: &FractalCoord) -> Result<f64, ModelError> {
        coord_value(c, &self.roots, &self.params)
    }

    pub fn band(&self, c: &FractalCoord) -> Result<BandIndex, ModelError> {
        match c.clipped_band {
            Some(band) => Ok(BandIndex(band)),
            None => band_of(self.try_value(c)?, &self.params),
        }
    }
}

/// Lattice points of one root at or above a floor, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FractalSupport {
    pub points: Vec<(FractalCoord, f64)>,
    pub floor: f64,
}

impl FractalSupport {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|(_, v)| *v)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, c: &FractalCoord) -> bool {
        self.points.iter().any(|(p, _)| p == c)
    }
}

/// Exponent pairs `(i, j)` with `β^i (1-β)^j · x ≥ floor`, with their values.
pub(crate) fn exponent_pairs_above(x: f64, floor: f64, beta: f64) -> Vec<(u32, u32, f64)> {
    let mut out = Vec::new();
    let mut i = 0u32;
    while lattice_value(x, beta, i, 0) >= floor {
        let mut j = 0u32;
        loop {
            let v = lattice_value(x, beta, i, j);
            if v < floor {
                break;
            }
            out.push((i, j, v));
            j += 1;
        }
        i += 1;
    }
    out
}

pub fn fractal_points(
    root: f64,
    floor: f64,
    params: &ModelParams,
) -> Result<FractalSupport, ModelError> {
    if !(root > 0.0 && root <= 1.0) {
        return Err(ModelError::OutOfUnit(root));
    }
    if !(floor > 0.0 && floor <= root) {
        return Err(ModelError::OutOfUnit(floor));
    }
    let mut points: Vec<(FractalCoord, f64)> = exponent_pairs_above(root, floor, params.beta)
        .into_iter()
        .map(|(i, j, v)| (FractalCoord::lattice(0, i, j), v))
        .collect();
    points.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(FractalSupport { points, floor })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_params() -> ModelParams {
        ModelParams::new(0.5, vec![0.25, 0.0625]).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = default_params();
        assert!((p.beta() - 1.0 / 3.0).abs() < 1e-16);
        assert!((p.lambda0() - 5.0 / 36.0).abs() < 1e-16);
        assert_eq!(p.depth(), 2);
    }

    #[test]
    fn rejects_bad_ratio() {
        assert_eq!(
            ModelParams::new(1.0, vec![0.25]),
            Err(ModelError::RatioOutOfRange(1.0))
        );
        assert!(matches!(
            ModelParams::new(0.0, vec![0.25]),
            Err(ModelError::RatioOutOfRange(_))
        ));
    }

    #[test]
    fn rejects_threshold_violations() {
        // 0.4 >= beta = 1/3
        assert!(matches!(
            ModelParams::new(0.5, vec![0.4]),
            Err(ModelError::ThresholdViolation(_))
        ));
        // ratio 0.5 >= beta
        assert!(matches!(
            ModelParams::new(0.5, vec![0.25, 0.125]),
            Err(ModelError::ThresholdViolation(_))
        ));
        assert!(matches!(
            ModelParams::new(0.5, vec![]),
            Err(ModelError::ThresholdViolation(_))
        ));
    }

    #[test]
    fn rejects_boundary_tie() {
        // 2/9 = beta (1-beta) sits exactly on the threshold
        let err = ModelParams::new(0.5, vec![2.0 / 9.0]).unwrap_err();
        assert!(matches!(err, ModelError::BoundaryTie { i: 1, j: 1, .. }));
    }

    #[test]
    fn geometric_rule() {
        let p = ModelParams::with_geometric_thresholds(0.5, 4.0, 3).unwrap();
        assert_eq!(p.thresholds(), &[0.25, 0.0625, 0.015625]);
    }

    #[test]
    fn band_lookup() {
        let p = default_params();
        assert_eq!(band_of(0.5, &p), Ok(BandIndex(0)));
        assert_eq!(band_of(1.0, &p), Ok(BandIndex(0)));
        assert_eq!(band_of(0.25, &p), Ok(BandIndex(0)));
        assert_eq!(band_of(0.2, &p), Ok(BandIndex(1)));
        assert_eq!(band_of(0.0625, &p), Ok(BandIndex(1)));
        assert!(matches!(
            band_of(0.03, &p),
            Err(ModelError::BelowResolution { .. })
        ));
        assert_eq!(band_of(1.5, &p), Err(ModelError::AboveUnit(1.5)));
    }

    #[test]
    fn fractal_points_default() {
        let p = default_params();
        let s = fractal_points(1.0, 0.25, &p).unwrap();
        let pairs: Vec<(u32, u32)> = s.points.iter().map(|(c, _)| (c.i, c.j)).collect();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (0, 2), (1, 0), (0, 3)]);
        let expected = [1.0, 2.0 / 3.0, 4.0 / 9.0, 1.0 / 3.0, 8.0 / 27.0];
        for (v, e) in s.values().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }

        let only_root = fractal_points(1.0, 1.0, &p).unwrap();
        assert_eq!(only_root.len(), 1);

        let third = fractal_points(1.0 / 3.0, 0.25, &p).unwrap();
        assert_eq!(third.len(), 1);
        assert!((third.points[0].1 - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn coord_values() {
        let p = default_params();
        let roots = [1.0];
        let v = coord_value(&FractalCoord::lattice(0, 1, 1), &roots, &p).unwrap();
        assert!((v - 2.0 / 9.0).abs() < 1e-16);
        assert_eq!(coord_value(&FractalCoord::root(0), &roots, &p), Ok(1.0));
        let clipped = FractalCoord::lattice(0, 3, 2).clipped_to(BandIndex(0));
        assert_eq!(coord_value(&clipped, &roots, &p), Ok(0.25));
        assert!(matches!(
            coord_value(&FractalCoord::root(3), &roots, &p),
            Err(ModelError::BadRootIndex { index: 3, len: 1 })
        ));
    }

    #[test]
    fn site_forgets_pre_clip_exponents() {
        let a = FractalCoord::lattice(0, 3, 2).clipped_to(BandIndex(1));
        let b = FractalCoord::lattice(0, 7, 0).clipped_to(BandIndex(1));
        assert_ne!(a, b);
        assert_eq!(a.site(), b.site());
    }
}
