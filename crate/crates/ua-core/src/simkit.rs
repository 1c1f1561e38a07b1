//! Monte-Carlo experiment harness: random scenario generation, the
//! estimation-error and throughput sweeps behind the CLI, and the
//! collocated-array baseline. Trials run in parallel but reduce in
//! index order, so results are bit-deterministic for a given seed.

use crate::channel::{
    synthesize_training, AntennaSamples, ArrayGeometry, ChannelModel, Scenario,
};
use crate::estimation::{
    assignment_cost, circular_matched_spectrum, combine_pilot_sequences, detect_peaks,
    matched_field_profile, observation_profile, spherical_mode_decompose, truncation_order,
    EstimationError, GridSpec, ModeSpectrum,
};
use crate::geometry::{self, Point3};
use crate::precoding::{
    conjugate_precoder, dof_limit, link_report, pm_precoder_samples, receive_aperture,
    solve_pm_precoder, Scheme, SchemePrecoders,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("failed to place {users} users with min separation {min_sep} m")]
    PlacementFailed { users: usize, min_sep: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("estimation failed: {0}")]
    Estimation(#[from] EstimationError),
    #[error("precoding failed: {0}")]
    Precoding(#[from] crate::precoding::PrecodingError),
    #[error("channel synthesis failed: {0}")]
    Channel(#[from] crate::channel::ChannelError),
}

/// Physical and run parameters shared by all sweeps. Everything is in SI
/// units; dBm conversion belongs to the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub lambda: f64,
    pub sigma2: f64,
    pub ptx: f64,
    pub r0: f64,
    pub r_d: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.lambda > 0.0
            && self.sigma2 >= 0.0
            && self.ptx > 0.0
            && self.r0 > 0.0
            && self.r_d > 0.0
            && self.trials >= 1;
        if ok {
            Ok(())
        } else {
            Err(SimError::Config("non-positive physical parameter".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArraySelect {
    Circular,
    Spherical,
    Collocated,
}

impl ArraySelect {
    pub fn label(self) -> &'static str {
        match self {
            ArraySelect::Circular => "circular",
            ArraySelect::Spherical => "spherical",
            ArraySelect::Collocated => "collocated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    SingleSymbol,
    Orthogonal(usize),
}

/// One round of splitmix64; used to derive independent sub-seeds.
fn mix(mut z: u64, salt: u64) -> u64 {
    z = z.wrapping_add(salt.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Users drawn i.i.d. area-uniform over the disk of radius 0.5 r0, with
/// rejection resampling until all pairs are at least lambda/2 apart.
/// Deterministic per (seed, trial, user count).
pub fn generate_users(
    params: &SimParams,
    u_count: usize,
    trial: u64,
) -> Result<Vec<Point3>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(mix(trial, u_count as u64));
    let min_sep = params.lambda / 2.0;
    let mut users: Vec<Point3> = Vec::with_capacity(u_count);
    let mut attempts = 0usize;
    while users.len() < u_count {
        if attempts >= 10_000 {
            return Err(SimError::PlacementFailed {
                users: u_count,
                min_sep,
            });
        }
        attempts += 1;
        let r = 0.5 * params.r0 * rng.random::<f64>().sqrt();
        let phi = TAU * rng.random::<f64>();
        let p = Point3::planar(r, phi);
        if users.iter().all(|&q| geometry::distance(p, q) >= min_sep) {
            users.push(p);
        }
    }
    Ok(users)
}

/// Collocated baseline: N sunflower-packed elements in a disk of
/// radius r_d hovering at height r0.
pub fn collocated_array(params: &SimParams, n: usize) -> ArrayGeometry {
    ArrayGeometry::collocated_disk(params.r_d, params.r0, n)
}

pub fn build_array(select: ArraySelect, params: &SimParams, n: usize) -> ArrayGeometry {
    match select {
        ArraySelect::Circular => ArrayGeometry::circular(params.r0, n),
        ArraySelect::Spherical => ArrayGeometry::spherical(params.r0, n),
        ArraySelect::Collocated => collocated_array(params, n),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub array: String,
    pub scheme: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub failures: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis_name: String,
    pub axis: Vec<f64>,
    pub series: Vec<SweepSeries>,
    pub trials: usize,
    pub seed: u64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimationAxis {
    Elements { users: usize },
    Users { elements: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationSweep {
    pub params: SimParams,
    pub arrays: Vec<ArraySelect>,
    pub axis: EstimationAxis,
    pub axis_values: Vec<usize>,
    pub pilot: PilotMode,
    /// search disk radius; default 0.6 r0
    pub grid_radius: Option<f64>,
    /// grid spacing; default lambda/8
    pub spacing: Option<f64>,
}

fn pilot_matrix(mode: PilotMode, u_count: usize, ptx: f64) -> Result<Vec<Vec<Complex64>>, SimError> {
    let amp = ptx.sqrt();
    match mode {
        PilotMode::SingleSymbol => Ok(vec![vec![Complex64::new(amp, 0.0)]; u_count]),
        PilotMode::Orthogonal(l) => {
            if l < u_count {
                return Err(SimError::Config(format!(
                    "orthogonal pilot length {l} shorter than user count {u_count}"
                )));
            }
            Ok((0..u_count)
                .map(|u| {
                    (0..l)
                        .map(|s| {
                            Complex64::from_polar(amp, -TAU * (u * s) as f64 / l as f64)
                        })
                        .collect()
                })
                .collect())
        }
    }
}

/// Mean per-user location error for one trial; users missing from the
/// detected peak set are charged the search-region diameter.
fn estimation_trial(
    select: ArraySelect,
    params: &SimParams,
    n: usize,
    u_count: usize,
    pilot: PilotMode,
    grid: GridSpec,
    trial: u64,
) -> Result<f64, SimError> {
    let users = generate_users(params, u_count, trial)?;
    let array = build_array(select, params, n);
    let scenario = Scenario::new(array, users.clone(), params.lambda, params.sigma2, params.ptx);
    let pilots = pilot_matrix(pilot, u_count, params.ptx)?;
    let noise_seed = mix(params.seed, mix(trial, 0xE57));
    let slots = synthesize_training(&scenario, &pilots, noise_seed)?;
    let penalty = 2.0 * grid.r_max;
    let k = truncation_order(grid.r_max, params.lambda);

    if select == ArraySelect::Collocated {
        // matched-field baseline straight in the element domain
        let norm: f64 = pilots[0].iter().map(|s| s.norm_sqr()).sum();
        let mut total = 0.0;
        for u in 0..u_count {
            let mut h_est = vec![Complex64::ZERO; scenario.array.len()];
            for (slot, s) in slots.iter().zip(&pilots[u]) {
                let w = s.conj() / norm;
                for (h, &q) in h_est.iter_mut().zip(&slot.values) {
                    *h += w * q;
                }
            }
            let profile = matched_field_profile(
                &scenario.array,
                &AntennaSamples { values: h_est },
                grid,
                params.lambda,
            )?;
            let expected = if pilot == PilotMode::SingleSymbol { u_count } else { 1 };
            let (found, missing) = match detect_peaks(&profile, expected, params.lambda) {
                Ok(p) => (p, 0),
                Err(EstimationError::InsufficientPeaks { found, .. }) => {
                    let missing = expected - found.len();
                    (found, missing)
                }
                Err(e) => return Err(e.into()),
            };
            if pilot == PilotMode::SingleSymbol {
                // one profile carries every user
                return Ok(
                    (assignment_cost(&found, &users) + missing as f64 * penalty)
                        / u_count as f64,
                );
            }
            total += found
                .first()
                .map_or(penalty, |&p| geometry::distance(p, users[u]));
        }
        return Ok(total / u_count as f64);
    }

    let spectra: Vec<ModeSpectrum> = slots
        .iter()
        .map(|slot| match select {
            ArraySelect::Circular => circular_matched_spectrum(slot, &scenario.array, k),
            _ => spherical_mode_decompose(slot, &scenario.array, k),
        })
        .collect::<Result<_, _>>()?;

    let score = |spectrum: &ModeSpectrum, expected: usize, targets: &[Point3]| -> Result<f64, SimError> {
        let profile = observation_profile(spectrum, grid, params.lambda, params.r0)?;
        let (found, missing) = match detect_peaks(&profile, expected, params.lambda) {
            Ok(p) => (p, 0),
            Err(EstimationError::InsufficientPeaks { found, .. }) => {
                let missing = expected - found.len();
                (found, missing)
            }
            Err(e) => return Err(e.into()),
        };
        Ok(assignment_cost(&found, targets) + missing as f64 * penalty)
    };

    match pilot {
        PilotMode::SingleSymbol => Ok(score(&spectra[0], u_count, &users)? / u_count as f64),
        PilotMode::Orthogonal(_) => {
            let mut total = 0.0;
            for u in 0..u_count {
                let q_u = combine_pilot_sequences(&spectra, &pilots, u)?;
                total += score(&q_u, 1, &users[u..=u])?;
            }
            Ok(total / u_count as f64)
        }
    }
}

pub fn run_estimation_sweep(cfg: &EstimationSweep) -> Result<SweepResult, SimError> {
    cfg.params.validate()?;
    if cfg.axis_values.is_empty() || cfg.arrays.is_empty() {
        return Err(SimError::Config("empty sweep".into()));
    }
    let grid = GridSpec {
        r_max: cfg.grid_radius.unwrap_or(0.6 * cfg.params.r0),
        spacing: cfg.spacing.unwrap_or(cfg.params.lambda / 8.0),
    };
    let pilot_label = match cfg.pilot {
        PilotMode::SingleSymbol => "single-pilot".to_string(),
        PilotMode::Orthogonal(l) => format!("orthogonal-{l}"),
    };
    let mut series = Vec::new();
    for &select in &cfg.arrays {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut failures = Vec::new();
        for &v in &cfg.axis_values {
            let (n, u_count) = match cfg.axis {
                EstimationAxis::Elements { users } => (v, users),
                EstimationAxis::Users { elements } => (elements, v),
            };
            let outcomes: Vec<Result<f64, SimError>> = (0..cfg.params.trials as u64)
                .into_par_iter()
                .map(|trial| {
                    estimation_trial(select, &cfg.params, n, u_count, cfg.pilot, grid, trial)
                })
                .collect();
            let ok: Vec<f64> = outcomes.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
            let (m, s) = mean_std(&ok);
            mean.push(m);
            std.push(s);
            failures.push(outcomes.len() - ok.len());
        }
        series.push(SweepSeries {
            array: select.label().to_string(),
            scheme: pilot_label.clone(),
            mean,
            std,
            failures,
        });
    }
    Ok(SweepResult {
        axis_name: match cfg.axis {
            EstimationAxis::Elements { .. } => "elements".into(),
            EstimationAxis::Users { .. } => "users".into(),
        },
        axis: cfg.axis_values.iter().map(|&v| v as f64).collect(),
        series,
        trials: cfg.params.trials,
        seed: cfg.params.seed,
    })
}

/// Conventional sampled-channel zero-forcing for the collocated baseline,
/// where phase modes have no meaning: W = H^H (H H^H)^(-1) columns,
/// rescaled to the conjugate beam's total power.
pub fn collocated_zf_precoders(scenario: &Scenario) -> Result<SchemePrecoders, SimError> {
    let u_count = scenario.users.len();
    let n = scenario.array.len();
    let mut h = DMatrix::<Complex64>::zeros(u_count, n);
    for (u, &xu) in scenario.users.iter().enumerate() {
        for (p, &a) in scenario.array.elements.iter().enumerate() {
            h[(u, p)] =
                crate::channel::channel_response(xu, a, scenario.lambda, ChannelModel::Exact)?;
        }
    }
    let gram = &h * h.adjoint();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| SimError::Config("singular collocated channel Gram matrix".into()))?;
    let w = h.adjoint() * inv;
    let mut samples = Vec::with_capacity(u_count);
    for u in 0..u_count {
        let col = w.column(u);
        let norm_sq: f64 = col.iter().map(|c| c.norm_sqr()).sum();
        let scale = (n as f64 / norm_sq).sqrt();
        samples.push(AntennaSamples {
            values: col.iter().map(|c| c * scale).collect(),
        });
    }
    Ok(SchemePrecoders {
        scheme: Scheme::PhaseModeZF,
        samples,
        loss: vec![1.0; u_count],
    })
}

/// ZF constraint matrix measured on the actual discrete array instead of
/// the continuous closed-form coupling: entry (k, m) is the field a pure
/// mode-m beam for user u produces at victim k, up to a constant scale.
/// Nulling these rows zeroes interference exactly for the array at hand,
/// which is what a finite-N sweep needs — the closed-form coefficients
/// only null the continuous near-center limit.
pub fn empirical_zf_matrix(
    scenario: &Scenario,
    u: usize,
    m_order: usize,
) -> Result<crate::precoding::ZFMatrix, SimError> {
    use crate::channel::ArrayKind;
    use crate::estimation::Truncation;
    let users = &scenario.users;
    if users.len() < 2 {
        return Err(SimError::Config("need at least two users".into()));
    }
    let constraints = users.len() - 1;
    let (trunc, cols) = match scenario.array.kind {
        ArrayKind::Circular { .. } => (Truncation::Circular(m_order), 2 * m_order + 1),
        ArrayKind::Spherical { .. } => {
            (Truncation::Spherical(m_order), (m_order + 1) * (m_order + 1))
        }
        ArrayKind::CollocatedDisk { .. } => {
            return Err(SimError::Config("phase modes need a circular or spherical array".into()))
        }
    };
    if cols <= constraints {
        return Err(SimError::Precoding(
            crate::precoding::PrecodingError::InsufficientModes {
                budget: cols,
                constraints,
            },
        ));
    }
    let conj = conjugate_precoder(scenario, u, ChannelModel::Exact)?;
    let victims: Vec<usize> = (0..users.len()).filter(|&k| k != u).collect();
    let mut entries = DMatrix::<Complex64>::zeros(constraints, cols);
    for (row, &k) in victims.iter().enumerate() {
        match scenario.array.kind {
            ArrayKind::Circular { .. } => {
                for ((&a, &w), &f) in scenario
                    .array
                    .elements
                    .iter()
                    .zip(&scenario.array.weights)
                    .zip(&conj.values)
                {
                    let h = crate::channel::channel_response(
                        users[k],
                        a,
                        scenario.lambda,
                        ChannelModel::Exact,
                    )?;
                    let t = w * h * f;
                    let step = Complex64::from_polar(1.0, a.phi);
                    let mut pos = Complex64::ONE;
                    entries[(row, m_order)] += t;
                    for n in 1..=m_order {
                        pos *= step;
                        entries[(row, m_order + n)] += t * pos;
                        entries[(row, m_order - n)] += t * pos.conj();
                    }
                }
            }
            _ => {
                let scale = (4.0 * PI).sqrt();
                for ((&a, &w), &f) in scenario
                    .array
                    .elements
                    .iter()
                    .zip(&scenario.array.weights)
                    .zip(&conj.values)
                {
                    let h = crate::channel::channel_response(
                        users[k],
                        a,
                        scenario.lambda,
                        ChannelModel::Exact,
                    )?;
                    let t = w * h * f * scale;
                    let yt = crate::specfun::ylm_table(m_order, a.phi, a.theta);
                    for (e, y) in entries.row_mut(row).iter_mut().zip(&yt) {
                        *e += t * y;
                    }
                }
            }
        }
    }
    Ok(crate::precoding::ZFMatrix { trunc, entries })
}

/// Mode-order cap for the spherical PM solve: the full DoF budget at wide
/// separations is enormous ((M+1)^2 modes) while everything past the first
/// few hundred columns contributes nothing measurable to either the null
/// space or the retained-signal factor.
pub const SPHERICAL_MODE_CAP: usize = 48;

fn pm_precoders(scenario: &Scenario, select: ArraySelect) -> Result<SchemePrecoders, SimError> {
    if scenario.users.len() == 1 {
        return Ok(SchemePrecoders {
            scheme: Scheme::PhaseModeZF,
            samples: vec![conjugate_precoder(scenario, 0, ChannelModel::Exact)?],
            loss: vec![1.0],
        });
    }
    let mut m = dof_limit(scenario)?;
    if select == ArraySelect::Spherical {
        m = m.min(SPHERICAL_MODE_CAP);
    }
    let mut samples = Vec::new();
    let mut loss = Vec::new();
    for u in 0..scenario.users.len() {
        let zf = empirical_zf_matrix(scenario, u, m)?;
        let c = solve_pm_precoder(&zf, u)?;
        samples.push(pm_precoder_samples(scenario, &c, ChannelModel::Exact)?);
        loss.push(c.snr_loss);
    }
    Ok(SchemePrecoders {
        scheme: Scheme::PhaseModeZF,
        samples,
        loss,
    })
}

fn conjugate_precoders(scenario: &Scenario) -> Result<SchemePrecoders, SimError> {
    let mut samples = Vec::new();
    for u in 0..scenario.users.len() {
        samples.push(conjugate_precoder(scenario, u, ChannelModel::Exact)?);
    }
    Ok(SchemePrecoders {
        scheme: Scheme::ConjugateOnly,
        samples,
        loss: vec![1.0; scenario.users.len()],
    })
}

/// Per-user signal and interference power gains at unit transmit power;
/// SINR at any power P is then s*P / (i*P + sigma^2).
fn unit_power_gains(
    select: ArraySelect,
    params: &SimParams,
    n: usize,
    u_count: usize,
    scheme: Scheme,
    trial: u64,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let users = generate_users(params, u_count, trial)?;
    let array = build_array(select, params, n);
    let scenario = Scenario::new(array, users, params.lambda, params.sigma2, 1.0);
    let pre = match (select, scheme) {
        (_, Scheme::ConjugateOnly) => conjugate_precoders(&scenario)?,
        (ArraySelect::Collocated, Scheme::PhaseModeZF) => collocated_zf_precoders(&scenario)?,
        (_, Scheme::PhaseModeZF) => pm_precoders(&scenario, select)?,
    };
    let aperture = receive_aperture(scenario.array.kind, scenario.lambda);
    let mut sig = Vec::with_capacity(u_count);
    let mut intf = Vec::with_capacity(u_count);
    for u in 0..u_count {
        let xu = scenario.users[u];
        let g = crate::channel::received_field(&scenario, &pre.samples[u], xu)?;
        sig.push(aperture * g.norm_sqr());
        let mut acc = 0.0;
        for (k, f) in pre.samples.iter().enumerate() {
            if k != u {
                acc += aperture
                    * crate::channel::received_field(&scenario, f, xu)?.norm_sqr();
            }
        }
        intf.push(acc);
    }
    Ok((sig, intf))
}

fn sum_throughput(sig: &[f64], intf: &[f64], ptx: f64, sigma2: f64) -> f64 {
    sig.iter()
        .zip(intf)
        .map(|(&s, &i)| (1.0 + s * ptx / (i * ptx + sigma2)).log2())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThroughputAxis {
    /// transmit power sweep in watts at fixed user count
    PowerW { values: Vec<f64>, users: usize },
    /// user-count sweep at the configured transmit power
    Users { values: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputSweep {
    pub params: SimParams,
    pub combos: Vec<(ArraySelect, Scheme)>,
    pub axis: ThroughputAxis,
    pub elements: usize,
}

pub fn scheme_label(scheme: Scheme, select: ArraySelect) -> &'static str {
    match (scheme, select) {
        (Scheme::ConjugateOnly, _) => "conjugate",
        (Scheme::PhaseModeZF, ArraySelect::Collocated) => "sampled-zf",
        (Scheme::PhaseModeZF, _) => "pm-zf",
    }
}

pub fn run_throughput_sweep(cfg: &ThroughputSweep) -> Result<SweepResult, SimError> {
    cfg.params.validate()?;
    if cfg.combos.is_empty() {
        return Err(SimError::Config("no (array, scheme) combinations".into()));
    }
    let (axis, axis_name): (Vec<f64>, String) = match &cfg.axis {
        ThroughputAxis::PowerW { values, .. } => (values.clone(), "ptx_w".into()),
        ThroughputAxis::Users { values } => {
            (values.iter().map(|&v| v as f64).collect(), "users".into())
        }
    };
    if axis.is_empty() {
        return Err(SimError::Config("empty sweep axis".into()));
    }
    let mut series = Vec::new();
    for &(select, scheme) in &cfg.combos {
        let mut mean = Vec::new();
        let mut std = Vec::new();
        let mut failures = Vec::new();
        match &cfg.axis {
            ThroughputAxis::PowerW { values, users } => {
                // gains are power-independent: one field evaluation per trial
                let gains: Vec<Result<(Vec<f64>, Vec<f64>), SimError>> =
                    (0..cfg.params.trials as u64)
                        .into_par_iter()
                        .map(|t| {
                            unit_power_gains(select, &cfg.params, cfg.elements, *users, scheme, t)
                        })
                        .collect();
                let ok: Vec<&(Vec<f64>, Vec<f64>)> =
                    gains.iter().filter_map(|g| g.as_ref().ok()).collect();
                let failed = gains.len() - ok.len();
                for &p in values {
                    let tp: Vec<f64> = ok
                        .iter()
                        .map(|(s, i)| sum_throughput(s, i, p, cfg.params.sigma2))
                        .collect();
                    let (m, s) = mean_std(&tp);
                    mean.push(m);
                    std.push(s);
                    failures.push(failed);
                }
            }
            ThroughputAxis::Users { values } => {
                for &u_count in values {
                    let tp: Vec<Result<f64, SimError>> = (0..cfg.params.trials as u64)
                        .into_par_iter()
                        .map(|t| {
                            unit_power_gains(
                                select,
                                &cfg.params,
                                cfg.elements,
                                u_count,
                                scheme,
                                t,
                            )
                            .map(|(s, i)| {
                                sum_throughput(&s, &i, cfg.params.ptx, cfg.params.sigma2)
                            })
                        })
                        .collect();
                    let ok: Vec<f64> = tp.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
                    let (m, s) = mean_std(&ok);
                    mean.push(m);
                    std.push(s);
                    failures.push(tp.len() - ok.len());
                }
            }
        }
        series.push(SweepSeries {
            array: select.label().to_string(),
            scheme: scheme_label(scheme, select).to_string(),
            mean,
            std,
            failures,
        });
    }
    Ok(SweepResult {
        axis_name,
        axis,
        series,
        trials: cfg.params.trials,
        seed: cfg.params.seed,
    })
}

/// Scenario assembled from generated users, for callers (e.g. the
/// verification suite) that need link reports on random drops.
pub fn random_scenario(
    select: ArraySelect,
    params: &SimParams,
    n: usize,
    u_count: usize,
    trial: u64,
) -> Result<Scenario, SimError> {
    let users = generate_users(params, u_count, trial)?;
    Ok(Scenario::new(
        build_array(select, params, n),
        users,
        params.lambda,
        params.sigma2,
        params.ptx,
    ))
}

/// Convenience wrapper tying `make`-style precoders to a report.
pub fn scheme_report(
    scenario: &Scenario,
    select: ArraySelect,
    scheme: Scheme,
) -> Result<crate::precoding::LinkReport, SimError> {
    let pre = match (select, scheme) {
        (_, Scheme::ConjugateOnly) => conjugate_precoders(scenario)?,
        (ArraySelect::Collocated, Scheme::PhaseModeZF) => collocated_zf_precoders(scenario)?,
        (_, Scheme::PhaseModeZF) => pm_precoders(scenario, select)?,
    };
    Ok(link_report(scenario, &pre)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMBDA: f64 = 0.12;

    fn params() -> SimParams {
        SimParams {
            lambda: LAMBDA,
            sigma2: 1e-13,
            ptx: 1e-6,
            r0: 20.0,
            r_d: 1.0,
            trials: 4,
            seed: 7,
        }
    }

    #[test]
    fn users_are_deterministic_and_separated() {
        let p = params();
        let a = generate_users(&p, 10, 3).unwrap();
        let b = generate_users(&p, 10, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_users(&p, 10, 4).unwrap();
        assert_ne!(a, c);
        for (i, &x) in a.iter().enumerate() {
            assert!(x.r <= 0.5 * p.r0);
            for &y in &a[i + 1..] {
                assert!(geometry::distance(x, y) >= LAMBDA / 2.0);
            }
        }
    }

    #[test]
    fn user_radius_is_area_uniform() {
        // Kolmogorov-Smirnov distance against F(r) = (r / 0.5 r0)^2
        let p = params();
        let mut radii: Vec<f64> = (0..4000u64)
            .map(|t| generate_users(&p, 1, t).unwrap()[0].r)
            .collect();
        radii.sort_by(f64::total_cmp);
        let n = radii.len() as f64;
        let ks = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let f = (r / (0.5 * p.r0)).powi(2);
                let emp_hi = (i + 1) as f64 / n;
                let emp_lo = i as f64 / n;
                (f - emp_lo).abs().max((emp_hi - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS distance {ks}");
    }

    #[test]
    fn placement_failure_is_reported() {
        let mut p = params();
        p.r0 = 4.0 * LAMBDA; // disk of radius 2 lambda cannot hold 300 users
        assert!(matches!(
            generate_users(&p, 300, 0),
            Err(SimError::PlacementFailed { .. })
        ));
    }

    #[test]
    fn collocated_geometry() {
        let p = params();
        let g = collocated_array(&p, 128);
        for e in &g.elements {
            let [x, y, z] = e.to_cartesian();
            assert!((z - p.r0).abs() < 1e-9);
            assert!((x * x + y * y).sqrt() <= p.r_d + 1e-12);
        }
    }

    #[test]
    fn estimation_sweep_runs_and_is_deterministic() {
        let cfg = EstimationSweep {
            params: params(),
            arrays: vec![ArraySelect::Circular],
            axis: EstimationAxis::Elements { users: 3 },
            axis_values: vec![64, 128],
            pilot: PilotMode::SingleSymbol,
            grid_radius: Some(1.5),
            spacing: None,
        };
        let a = run_estimation_sweep(&cfg).unwrap();
        let b = run_estimation_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.series.len(), 1);
        assert_eq!(a.series[0].mean.len(), 2);
        for (m, f) in a.series[0].mean.iter().zip(&a.series[0].failures) {
            assert!(m.is_finite() && *f == 0);
        }
    }

    #[test]
    fn throughput_sweep_shapes_and_determinism() {
        let cfg = ThroughputSweep {
            params: params(),
            combos: vec![
                (ArraySelect::Circular, Scheme::ConjugateOnly),
                (ArraySelect::Circular, Scheme::PhaseModeZF),
            ],
            axis: ThroughputAxis::PowerW {
                values: vec![1e-8, 1e-6],
                users: 3,
            },
            elements: 128,
        };
        let a = run_throughput_sweep(&cfg).unwrap();
        let b = run_throughput_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        for s in &a.series {
            assert_eq!(s.mean.len(), 2);
            // throughput grows with power
            assert!(s.mean[1] > s.mean[0]);
        }
    }

    #[test]
    fn empirical_zf_nulls_discrete_interference() {
        // nulls are placed on the measured coupling, so they hold exactly
        // on the finite array even with users far from the center
        let p = params();
        let users = vec![
            Point3::planar(5.0, 0.4),
            Point3::planar(7.0, 2.1),
            Point3::planar(3.5, 4.4),
        ];
        let sc = Scenario::new(
            ArrayGeometry::circular(p.r0, 512),
            users,
            LAMBDA,
            p.sigma2,
            1e-6,
        );
        let rep = scheme_report(&sc, ArraySelect::Circular, Scheme::PhaseModeZF).unwrap();
        for u in &rep.users {
            assert!(u.sinr / u.snr > 0.999, "sinr {} snr {}", u.sinr, u.snr);
        }
    }

    #[test]
    fn empirical_zf_agrees_with_closed_form_near_center() {
        let p = params();
        let users = vec![
            Point3::planar(0.25, 0.3),
            Point3::planar(0.20, 2.0),
            Point3::planar(0.15, 4.0),
        ];
        let sc = Scenario::new(
            ArrayGeometry::circular(p.r0, 4096),
            users,
            LAMBDA,
            p.sigma2,
            1.0,
        );
        let emp = empirical_zf_matrix(&sc, 0, 12).unwrap();
        let ana = crate::precoding::build_zf_matrix(&sc, 0, 12).unwrap();
        // the two differ by one complex constant plus the o-term of the
        // near-center expansion
        let num: Complex64 = emp
            .entries
            .iter()
            .zip(ana.entries.iter())
            .map(|(e, a)| a.conj() * e)
            .sum();
        let den: f64 = ana.entries.iter().map(|a| a.norm_sqr()).sum();
        let c = num / den;
        let scale = ana.entries.iter().map(|a| a.norm()).fold(0.0, f64::max) * c.norm();
        for (e, a) in emp.entries.iter().zip(ana.entries.iter()) {
            assert!((e - c * a).norm() < 0.1 * scale, "{e} vs {}", c * a);
        }
    }

    #[test]
    fn collocated_zf_nulls_interference() {
        let p = params();
        let users = generate_users(&p, 4, 0).unwrap();
        let sc = Scenario::new(collocated_array(&p, 64), users, LAMBDA, p.sigma2, 1.0);
        let pre = collocated_zf_precoders(&sc).unwrap();
        let rep = link_report(&sc, &pre).unwrap();
        for u in &rep.users {
            // sampled ZF is exact on the sampled channel
            assert!(u.sinr / u.snr > 0.999, "sinr {} snr {}", u.sinr, u.snr);
        }
    }

    #[test]
    fn trial_independence_shrinks_sem() {
        let mut p = params();
        p.trials = 32;
        let mk = |trials: usize| {
            let mut p2 = p.clone();
            p2.trials = trials;
            let cfg = ThroughputSweep {
                params: p2,
                combos: vec![(ArraySelect::Circular, Scheme::ConjugateOnly)],
                axis: ThroughputAxis::Users { values: vec![4] },
                elements: 64,
            };
            let r = run_throughput_sweep(&cfg).unwrap();
            r.series[0].std[0] / (trials as f64).sqrt()
        };
        let (s32, s128) = (mk(32), mk(128));
        let ratio = s32 / s128;
        assert!(
            (1.0..4.0).contains(&ratio),
            "SEM ratio across 4x trials: {ratio}"
        );
    }
}
