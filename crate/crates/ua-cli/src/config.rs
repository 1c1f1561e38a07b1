//! TOML experiment configuration.
//!
//! All keys carry explicit units in their names (`ptx_dbm`, `freq_hz`,
//! `r0_m`). Powers cross the CLI boundary in dBm and are converted to watts
//! exactly once, here; the core library never sees dBm.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use ua_core::precoding::Scheme;
use ua_core::simkit::{
    ArraySelect, EstimationAxis, EstimationSweep, PilotMode, SimParams, ThroughputAxis,
    ThroughputSweep,
};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn default_rd_m() -> f64 {
    1.0
}

/// Physical scenario shared by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioCfg {
    /// carrier frequency in hertz
    pub freq_hz: f64,
    /// noise power in dBm
    pub noise_dbm: f64,
    /// per-user transmit power in dBm
    pub ptx_dbm: f64,
    /// array radius in meters
    pub r0_m: f64,
    /// collocated-baseline antenna spacing radius in meters
    #[serde(default = "default_rd_m")]
    pub rd_m: f64,
    /// Monte-Carlo trials per sweep point
    pub trials: usize,
    /// RNG seed
    pub seed: u64,
}

/// `estimate` command section: localization-error sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateCfg {
    /// array geometries to sweep: "circular", "spherical", "collocated"
    pub arrays: Vec<String>,
    /// sweep axis: "elements" or "users"
    pub axis: String,
    /// element counts (the axis when `axis = "elements"`, otherwise one fixed value)
    pub elements: Vec<usize>,
    /// user counts (the axis when `axis = "users"`, otherwise one fixed value)
    pub users: Vec<usize>,
    /// pilot scheme: "single" or "orthogonal"
    #[serde(default = "default_pilot")]
    pub pilot: String,
    /// training length for orthogonal pilots (defaults to the user count)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_len: Option<usize>,
    /// search-disk radius in meters (default 0.6 r0)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_radius_m: Option<f64>,
    /// search-grid spacing in meters (default lambda/8)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_spacing_m: Option<f64>,
}

fn default_pilot() -> String {
    "single".into()
}

/// `transmit` command section: sum-throughput sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitCfg {
    /// (array, scheme) pairs, e.g. [["circular", "conjugate"], ["spherical", "pm-zf"]]
    pub combos: Vec<(String, String)>,
    /// sweep axis: "power" or "users"
    pub axis: String,
    /// transmit-power axis in dBm (required when `axis = "power"`)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ptx_dbm_values: Option<Vec<f64>>,
    /// user counts (the axis when `axis = "users"`, otherwise one fixed value)
    pub users: Vec<usize>,
    /// antenna elements per array
    pub elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmit: Option<TransmitCfg>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        toml::from_str(text).context("config parse error")
    }

    /// Canonical TOML echo of the resolved configuration; re-parses to an
    /// identical structure and feeds the manifest hash.
    pub fn echo(&self) -> Result<String> {
        toml::to_string(self).context("config echo serialization failed")
    }

    pub fn sim_params(&self, seed: Option<u64>, trials: Option<usize>) -> SimParams {
        let s = &self.scenario;
        SimParams {
            lambda: SPEED_OF_LIGHT / s.freq_hz,
            sigma2: dbm_to_w(s.noise_dbm),
            ptx: dbm_to_w(s.ptx_dbm),
            r0: s.r0_m,
            r_d: s.rd_m,
            trials: trials.unwrap_or(s.trials),
            seed: seed.unwrap_or(s.seed),
        }
    }
}

fn parse_array(name: &str) -> Result<ArraySelect> {
    match name {
        "circular" => Ok(ArraySelect::Circular),
        "spherical" => Ok(ArraySelect::Spherical),
        "collocated" => Ok(ArraySelect::Collocated),
        other => bail!("unknown array \"{other}\" (expected circular, spherical or collocated)"),
    }
}

fn parse_scheme(name: &str) -> Result<Scheme> {
    match name {
        "conjugate" => Ok(Scheme::ConjugateOnly),
        "pm-zf" | "zf" => Ok(Scheme::PhaseModeZF),
        other => bail!("unknown scheme \"{other}\" (expected conjugate or pm-zf)"),
    }
}

fn single(values: &[usize], what: &str) -> Result<usize> {
    match values {
        [v] => Ok(*v),
        _ => bail!("\"{what}\" must hold exactly one value when it is not the sweep axis"),
    }
}

/// Sweep plan plus the axis values as they should appear in the CSV
/// (dBm for power sweeps, counts otherwise).
#[derive(Debug)]
pub struct Plan<S> {
    pub sweep: S,
    pub axis_display: Vec<f64>,
}

pub fn estimation_plan(
    cfg: &Config,
    seed: Option<u64>,
    trials: Option<usize>,
) -> Result<Plan<EstimationSweep>> {
    let est = cfg
        .estimate
        .as_ref()
        .context("config is missing the [estimate] section")?;
    let params = cfg.sim_params(seed, trials);
    let arrays = est
        .arrays
        .iter()
        .map(|s| parse_array(s))
        .collect::<Result<Vec<_>>>()?;
    let (axis, axis_values) = match est.axis.as_str() {
        "elements" => (
            EstimationAxis::Elements {
                users: single(&est.users, "users")?,
            },
            est.elements.clone(),
        ),
        "users" => (
            EstimationAxis::Users {
                elements: single(&est.elements, "elements")?,
            },
            est.users.clone(),
        ),
        other => bail!("unknown estimate axis \"{other}\" (expected elements or users)"),
    };
    let pilot = match est.pilot.as_str() {
        "single" => PilotMode::SingleSymbol,
        "orthogonal" => PilotMode::Orthogonal(est.pilot_len.unwrap_or(0)),
        other => bail!("unknown pilot mode \"{other}\" (expected single or orthogonal)"),
    };
    let axis_display = axis_values.iter().map(|&v| v as f64).collect();
    Ok(Plan {
        sweep: EstimationSweep {
            params,
            arrays,
            axis,
            axis_values,
            pilot,
            grid_radius: est.grid_radius_m,
            spacing: est.grid_spacing_m,
        },
        axis_display,
    })
}

pub fn throughput_plan(
    cfg: &Config,
    seed: Option<u64>,
    trials: Option<usize>,
) -> Result<Plan<ThroughputSweep>> {
    let tx = cfg
        .transmit
        .as_ref()
        .context("config is missing the [transmit] section")?;
    let params = cfg.sim_params(seed, trials);
    let combos = tx
        .combos
        .iter()
        .map(|(a, s)| Ok((parse_array(a)?, parse_scheme(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let (axis, axis_display) = match tx.axis.as_str() {
        "power" => {
            let dbm = tx
                .ptx_dbm_values
                .clone()
                .context("power sweep requires \"ptx_dbm_values\"")?;
            let watts = dbm.iter().map(|&p| dbm_to_w(p)).collect();
            (
                ThroughputAxis::PowerW {
                    values: watts,
                    users: single(&tx.users, "users")?,
                },
                dbm,
            )
        }
        "users" => (
            ThroughputAxis::Users {
                values: tx.users.clone(),
            },
            tx.users.iter().map(|&v| v as f64).collect(),
        ),
        other => bail!("unknown transmit axis \"{other}\" (expected power or users)"),
    };
    Ok(Plan {
        sweep: ThroughputSweep {
            params,
            combos,
            axis,
            elements: tx.elements,
        },
        axis_display,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        [scenario]
        freq_hz = 2.5e9
        noise_dbm = -100.0
        ptx_dbm = -60.0
        r0_m = 20.0
        trials = 4
        seed = 7

        [estimate]
        arrays = ["circular", "collocated"]
        axis = "elements"
        elements = [50, 100]
        users = [10]

        [transmit]
        combos = [["circular", "conjugate"], ["spherical", "pm-zf"]]
        axis = "power"
        ptx_dbm_values = [-70.0, -60.0, -50.0]
        users = [10]
        elements = 200
    "#;

    #[test]
    fn round_trips_through_echo() {
        let cfg = Config::parse(SAMPLE).unwrap();
        let echo = cfg.echo().unwrap();
        assert_eq!(Config::parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn converts_units_at_the_boundary() {
        let cfg = Config::parse(SAMPLE).unwrap();
        let p = cfg.sim_params(None, None);
        assert!((p.lambda - 0.119917).abs() < 1e-5);
        assert!((p.sigma2 - 1e-13).abs() < 1e-25);
        assert!((p.ptx - 1e-9).abs() < 1e-21);
        assert_eq!((p.trials, p.seed), (4, 7));
        let p = cfg.sim_params(Some(99), Some(2));
        assert_eq!((p.trials, p.seed), (2, 99));
    }

    #[test]
    fn power_axis_is_reported_in_dbm() {
        let cfg = Config::parse(SAMPLE).unwrap();
        let plan = throughput_plan(&cfg, None, None).unwrap();
        assert_eq!(plan.axis_display, vec![-70.0, -60.0, -50.0]);
        match plan.sweep.axis {
            ThroughputAxis::PowerW { ref values, users } => {
                assert_eq!(users, 10);
                assert!((values[0] - 1e-10).abs() < 1e-22);
            }
            _ => panic!("expected power axis"),
        }
    }

    #[test]
    fn rejects_unknown_names() {
        let cfg = Config::parse(&SAMPLE.replace("pm-zf", "dirty-paper")).unwrap();
        assert!(throughput_plan(&cfg, None, None)
            .unwrap_err()
            .to_string()
            .contains("dirty-paper"));
        let cfg = Config::parse(&SAMPLE.replace("\"collocated\"", "\"linear\"")).unwrap();
        assert!(estimation_plan(&cfg, None, None).is_err());
    }

    #[test]
    fn missing_field_names_the_field() {
        let err = format!(
            "{:#}",
            Config::parse("[scenario]\nfreq_hz = 2.5e9\n").unwrap_err()
        );
        assert!(err.contains("noise_dbm"), "diagnostic should name the field: {err}");
    }
}
