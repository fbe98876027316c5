//! Spatial-domain mmWave channel generators: Saleh-Valenzuela (SV) and a
//! geometry-based stochastic channel model (GSCM), for uniform and
//! non-uniform linear arrays.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector, C64};
use crate::random::{complex_gaussian, seeded};

/// Nominal element spacing in wavelengths.
pub const HALF_WAVELENGTH: f64 = 0.5;

/// Spacing bounds for the non-uniform array, in wavelengths.
pub const NULA_SPACING_RANGE: (f64, f64) = (0.45, 0.55);

/// Linear array described by per-element spacings in wavelengths.
///
/// `spacings[i]` is the gap between element `i - 1` and element `i`; element
/// 0 is the phase reference, so `spacings[0]` does not move any element.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    spacings: Vec<f64>,
}

impl ArrayGeometry {
    pub fn uniform(n_antennas: usize) -> Self {
        Self {
            spacings: vec![HALF_WAVELENGTH; n_antennas],
        }
    }

    pub fn from_spacings(spacings: Vec<f64>) -> Result<Self> {
        if spacings.is_empty() {
            return Err(Error::InvalidParameter("array needs at least one element".into()));
        }
        if spacings.iter().any(|d| !d.is_finite() || *d <= 0.0) {
            return Err(Error::InvalidParameter("spacings must be positive and finite".into()));
        }
        Ok(Self { spacings })
    }

    pub fn n_antennas(&self) -> usize {
        self.spacings.len()
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn is_uniform(&self) -> bool {
        self.spacings.iter().all(|&d| d == HALF_WAVELENGTH)
    }

    /// Element positions in wavelengths, cumulative from element 0.
    pub fn positions(&self) -> Vec<f64> {
        let mut pos = Vec::with_capacity(self.spacings.len());
        let mut acc = 0.0;
        for (i, d) in self.spacings.iter().enumerate() {
            if i > 0 {
                acc += d;
            }
            pos.push(acc);
        }
        pos
    }
}

/// Draws a non-uniform array with spacings i.i.d. uniform on
/// [`NULA_SPACING_RANGE`].
pub fn gen_nula_geometry<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ArrayGeometry> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("NULA needs n >= 2, got {n}")));
    }
    let (lo, hi) = NULA_SPACING_RANGE;
    let spacings = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    ArrayGeometry::from_spacings(spacings)
}

/// Unit-norm array response `a(theta)` with entries
/// `exp(-j 2 pi p_n sin(theta)) / sqrt(N)` for element positions `p_n`.
pub fn steering_vector(geometry: &ArrayGeometry, theta: f64) -> ComplexVector {
    let n = geometry.n_antennas();
    let amp = 1.0 / (n as f64).sqrt();
    let sin = theta.sin();
    let positions = geometry.positions();
    ComplexVector::from_iterator(
        n,
        positions
            .iter()
            .map(|p| C64::from_polar(amp, -2.0 * PI * p * sin)),
    )
}

/// Spatial direction `psi = (d / lambda) sin(theta)` for the nominal spacing.
pub fn spatial_direction(theta: f64) -> f64 {
    HALF_WAVELENGTH * theta.sin()
}

/// Physical angle for a nominal-spacing spatial direction `psi`.
pub fn angle_from_direction(psi: f64) -> f64 {
    (psi / HALF_WAVELENGTH).clamp(-1.0, 1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent {
    pub gain: C64,
    /// Radians in `[-pi/2, pi/2]`.
    pub physical_angle: f64,
    pub spatial_direction: f64,
}

impl PathComponent {
    pub fn from_angle(gain: C64, theta: f64) -> Self {
        Self {
            gain,
            physical_angle: theta,
            spatial_direction: spatial_direction(theta),
        }
    }

    pub fn from_direction(gain: C64, psi: f64) -> Self {
        Self {
            gain,
            physical_angle: angle_from_direction(psi),
            spatial_direction: psi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelModelKind {
    Sv,
    Gscm,
}

/// Multiuser channel `H` (N antennas x K users) with the paths that
/// generated it.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
    pub per_user_paths: Vec<Vec<PathComponent>>,
    /// GSCM only: centroid angle of each cluster, per user. Subpaths of
    /// cluster `c` occupy `per_user_paths[k][c * n_s..(c + 1) * n_s]`.
    pub cluster_centroids: Vec<Vec<f64>>,
    pub model: ChannelModelKind,
    pub geometry: ArrayGeometry,
    /// Common amplitude factor in front of the path sum.
    pub path_scale: f64,
}

impl ChannelRealization {
    /// Builds a realization from explicit per-user paths.
    pub fn from_paths(
        model: ChannelModelKind,
        geometry: ArrayGeometry,
        per_user_paths: Vec<Vec<PathComponent>>,
        path_scale: f64,
    ) -> Result<Self> {
        if per_user_paths.is_empty() {
            return Err(Error::InvalidParameter("need at least one user".into()));
        }
        let n = geometry.n_antennas();
        let mut h = ComplexMatrix::zeros(n, per_user_paths.len());
        for (k, paths) in per_user_paths.iter().enumerate() {
            h.set_column(k, &synthesize(&geometry, paths, path_scale));
        }
        Ok(Self {
            h,
            per_user_paths,
            cluster_centroids: Vec::new(),
            model,
            geometry,
            path_scale,
        })
    }

    pub fn n_users(&self) -> usize {
        self.h.ncols()
    }

    /// Recomputes `H` from the stored path parameters.
    pub fn recompose(&self) -> ComplexMatrix {
        let mut h = ComplexMatrix::zeros(self.geometry.n_antennas(), self.per_user_paths.len());
        for (k, paths) in self.per_user_paths.iter().enumerate() {
            h.set_column(k, &synthesize(&self.geometry, paths, self.path_scale));
        }
        h
    }
}

fn synthesize(geometry: &ArrayGeometry, paths: &[PathComponent], scale: f64) -> ComplexVector {
    let mut h = ComplexVector::zeros(geometry.n_antennas());
    for p in paths {
        h.axpy(p.gain * scale, &steering_vector(geometry, p.physical_angle), C64::new(1.0, 0.0));
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvParams {
    pub n_antennas: usize,
    pub n_users: usize,
    /// Number of NLoS components `L`.
    pub n_nlos: usize,
    pub los_gain_variance: f64,
    pub nlos_gain_variance: f64,
}

impl SvParams {
    /// One LoS path with `CN(0, 1)` gain and two NLoS paths with
    /// `CN(0, 10^-0.5)` gains.
    pub fn standard(n_antennas: usize, n_users: usize) -> Self {
        Self {
            n_antennas,
            n_users,
            n_nlos: 2,
            los_gain_variance: 1.0,
            nlos_gain_variance: 10f64.powf(-0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 || self.n_users == 0 {
            return Err(Error::InvalidParameter("SV needs N >= 1 and K >= 1".into()));
        }
        if !(self.los_gain_variance > 0.0 && self.nlos_gain_variance > 0.0) {
            return Err(Error::InvalidParameter("SV gain variances must be positive".into()));
        }
        Ok(())
    }

    pub fn path_scale(&self) -> f64 {
        (self.n_antennas as f64 / (self.n_nlos + 1) as f64).sqrt()
    }

    /// `E ||h_k||^2 = N (var_los + L var_nlos) / (L + 1)`.
    pub fn mean_user_energy(&self) -> f64 {
        self.n_antennas as f64
            * (self.los_gain_variance + self.n_nlos as f64 * self.nlos_gain_variance)
            / (self.n_nlos + 1) as f64
    }
}

/// Draws one user's SV paths: spatial directions uniform on `[-0.5, 0.5]`.
pub fn sv_user_paths<R: Rng + ?Sized>(params: &SvParams, rng: &mut R) -> Vec<PathComponent> {
    (0..=params.n_nlos)
        .map(|i| {
            let var = if i == 0 {
                params.los_gain_variance
            } else {
                params.nlos_gain_variance
            };
            let gain = complex_gaussian(rng, var);
            let psi = rng.gen_range(-0.5..=0.5);
            PathComponent::from_direction(gain, psi)
        })
        .collect()
}

pub fn gen_sv_channel<R: Rng + ?Sized>(
    params: &SvParams,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> Result<ChannelRealization> {
    params.validate()?;
    check_geometry(params.n_antennas, geometry)?;
    let paths = (0..params.n_users).map(|_| sv_user_paths(params, rng)).collect();
    ChannelRealization::from_paths(ChannelModelKind::Sv, geometry.clone(), paths, params.path_scale())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GscmParams {
    pub n_users: usize,
    pub cell_radius_m: f64,
    /// Far scattering clusters fixed for the cell.
    pub n_fixed_clusters: usize,
    /// `N_c`: one UE-local cluster plus the `N_c - 1` nearest fixed clusters.
    pub n_clusters_used: usize,
    /// `N_s`.
    pub subpaths_per_cluster: usize,
    pub angular_spread_deg: f64,
    pub cluster_distance_range_m: (f64, f64),
    pub ue_distance_range_m: (f64, f64),
    /// Seed of the fixed cluster layout.
    pub layout_seed: u64,
}

impl GscmParams {
    /// Urban cell of radius 1200 m with seven fixed clusters at 300-800 m,
    /// UEs at 500-1200 m, four clusters per UE, 20 subpaths with a
    /// 4-degree spread.
    pub fn standard(n_users: usize, layout_seed: u64) -> Self {
        Self {
            n_users,
            cell_radius_m: 1200.0,
            n_fixed_clusters: 7,
            n_clusters_used: 4,
            subpaths_per_cluster: 20,
            angular_spread_deg: 4.0,
            cluster_distance_range_m: (300.0, 800.0),
            ue_distance_range_m: (500.0, 1200.0),
            layout_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("GSCM: {msg}")));
        if self.n_users == 0 {
            return bad("need at least one user");
        }
        if self.n_clusters_used == 0 || self.subpaths_per_cluster == 0 {
            return bad("N_c and N_s must be >= 1");
        }
        if self.n_clusters_used > self.n_fixed_clusters + 1 {
            return bad("more clusters used than available");
        }
        if !(self.angular_spread_deg > 0.0) {
            return bad("angular spread must be positive");
        }
        let ranges = [self.cluster_distance_range_m, self.ue_distance_range_m];
        if ranges.iter().any(|(lo, hi)| !(*lo >= 0.0 && lo <= hi)) {
            return bad("distance ranges must satisfy 0 <= lo <= hi");
        }
        if self.ue_distance_range_m.1 > self.cell_radius_m {
            return bad("UE range exceeds the cell radius");
        }
        Ok(())
    }

    pub fn subpath_gain_variance(&self) -> f64 {
        1.0 / (self.n_clusters_used * self.subpaths_per_cluster) as f64
    }

    /// `E ||h_k||^2` for unit-norm steering vectors.
    pub fn mean_user_energy(&self) -> f64 {
        1.0
    }

    /// Positions (x, y) of the fixed clusters; the BS sits at the origin
    /// with broadside along +x.
    pub fn cluster_layout(&self) -> Vec<(f64, f64)> {
        let mut rng = seeded(self.layout_seed);
        (0..self.n_fixed_clusters)
            .map(|_| polar_point(&mut rng, self.cluster_distance_range_m))
            .collect()
    }
}

fn polar_point<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> (f64, f64) {
    let r = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let a = rng.gen_range(-FRAC_PI_2..=FRAC_PI_2);
    (r * a.cos(), r * a.sin())
}

fn azimuth((x, y): (f64, f64)) -> f64 {
    y.atan2(x).clamp(-FRAC_PI_2, FRAC_PI_2)
}

pub fn gen_gscm_channel<R: Rng + ?Sized>(
    params: &GscmParams,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> Result<ChannelRealization> {
    params.validate()?;
    let layout = params.cluster_layout();
    let half_spread = params.angular_spread_deg.to_radians() / 2.0;
    let var = params.subpath_gain_variance();

    let mut per_user_paths = Vec::with_capacity(params.n_users);
    let mut centroids = Vec::with_capacity(params.n_users);
    for _ in 0..params.n_users {
        let ue = polar_point(rng, params.ue_distance_range_m);
        let mut by_distance: Vec<(f64, f64)> = layout.clone();
        by_distance.sort_by(|a, b| dist2(*a, ue).total_cmp(&dist2(*b, ue)));

        let mut user_centroids = vec![azimuth(ue)];
        user_centroids.extend(
            by_distance
                .iter()
                .take(params.n_clusters_used - 1)
                .map(|&c| azimuth(c)),
        );

        let mut paths = Vec::with_capacity(params.n_clusters_used * params.subpaths_per_cluster);
        for &centroid in &user_centroids {
            for _ in 0..params.subpaths_per_cluster {
                let offset = rng.gen_range(-half_spread..=half_spread);
                let theta = (centroid + offset).clamp(-FRAC_PI_2, FRAC_PI_2);
                paths.push(PathComponent::from_angle(complex_gaussian(rng, var), theta));
            }
        }
        per_user_paths.push(paths);
        centroids.push(user_centroids);
    }
    let mut real =
        ChannelRealization::from_paths(ChannelModelKind::Gscm, geometry.clone(), per_user_paths, 1.0)?;
    real.cluster_centroids = centroids;
    Ok(real)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn check_geometry(n: usize, geometry: &ArrayGeometry) -> Result<()> {
    if geometry.n_antennas() != n {
        return Err(Error::DimensionMismatch(format!(
            "parameters expect {n} antennas, geometry has {}",
            geometry.n_antennas()
        )));
    }
    Ok(())
}

/// Either channel model behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    Sv(SvParams),
    Gscm(GscmParams),
}

impl ChannelModel {
    pub fn kind(&self) -> ChannelModelKind {
        match self {
            Self::Sv(_) => ChannelModelKind::Sv,
            Self::Gscm(_) => ChannelModelKind::Gscm,
        }
    }

    pub fn n_users(&self) -> usize {
        match self {
            Self::Sv(p) => p.n_users,
            Self::Gscm(p) => p.n_users,
        }
    }

    pub fn mean_user_energy(&self) -> f64 {
        match self {
            Self::Sv(p) => p.mean_user_energy(),
            Self::Gscm(p) => p.mean_user_energy(),
        }
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        geometry: &ArrayGeometry,
        rng: &mut R,
    ) -> Result<ChannelRealization> {
        match self {
            Self::Sv(p) => gen_sv_channel(p, geometry, rng),
            Self::Gscm(p) => gen_gscm_channel(p, geometry, rng),
        }
    }
}
