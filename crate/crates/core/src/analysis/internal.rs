use super::{estimate_cf, AnalysisError};
use crate::park::{ComplexFrequency, ParkVector};
use crate::sim::TimeSeries;

/// A control configuration with a closed-form internal frequency.
///
/// Rates carrying time units (`κ_PI`, `K_i^o`, `K_i^v`) are given in 1/s
/// and divided by `ω_n` so that every row is in pu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableRow {
    /// `η_v − jδ̇ − κ_PI`
    CurrentControlPll { kappa: f64 },
    /// `−(η_v* + jδ̇)/K_p`
    VoltageFeedForward { kp: f64 },
    /// `−v²·Ȳ_v*·((η_v')* + κ_PI)`
    VirtualAdmittance { kappa: f64, gv: f64, bv: f64 },
    /// `K_p^o·ρ̄ + K_i^o`, with `ρ̄ = ρ_dc + jρ_v`
    GflOuterLoops { kp_o: f64, ki_o: f64 },
    /// `−(K_p^v·(η_v')* + K_i^v)`
    GfmVoltageControl { kp_v: f64, ki_v: f64 },
    /// `η_v − jδ̇`
    PfDroop,
    /// `η_v − jδ̇`
    VsmAngle,
}

impl TableRow {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::CurrentControlPll { .. } => "current_control_pll",
            Self::VoltageFeedForward { .. } => "voltage_feed_forward",
            Self::VirtualAdmittance { .. } => "virtual_admittance",
            Self::GflOuterLoops { .. } => "gfl_outer_loops",
            Self::GfmVoltageControl { .. } => "gfm_voltage_control",
            Self::PfDroop => "pf_droop",
            Self::VsmAngle => "vsm_angle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InternalFrequencyReport {
    pub device: String,
    pub configuration: &'static str,
    pub internal: Vec<ComplexFrequency<f64>>,
    /// Constituent terms, each as a named real series.
    pub terms: Vec<(String, Vec<f64>)>,
}

fn channel<'a>(ts: &'a TimeSeries, name: &str) -> Result<&'a [f64], AnalysisError> {
    ts.channel(name).ok_or_else(|| AnalysisError::MissingChannel(name.to_string()))
}

fn park_channels(ts: &TimeSeries, d: &str, q: &str) -> Result<Vec<ParkVector<f64>>, AnalysisError> {
    let (d, q) = (channel(ts, d)?, channel(ts, q)?);
    Ok(d.iter().zip(q).map(|(&d, &q)| ParkVector::new(d, q)).collect())
}

/// Evaluates a row of the internal-frequency table along a trajectory of
/// `device` connected at bus `bus`.
pub fn internal_frequency(
    ts: &TimeSeries,
    device: &str,
    bus: usize,
    row: TableRow,
    omega_n: f64,
) -> Result<InternalFrequencyReport, AnalysisError> {
    let v = park_channels(ts, &format!("bus{bus}.vd"), &format!("bus{bus}.vq"))?;
    let eta_v = estimate_cf(&ts.time, &v, omega_n)?.eta;
    let n = eta_v.len();
    let dev = |s: &str| format!("{device}.{s}");
    let zeros = vec![0.0; n];
    let delta_dot = match row {
        TableRow::GflOuterLoops { .. } | TableRow::GfmVoltageControl { .. } | TableRow::VirtualAdmittance { .. } => {
            ts.channel(&dev("delta_dot")).unwrap_or(&zeros)
        }
        _ => channel(ts, &dev("delta_dot"))?,
    };
    let eta_local: Vec<ComplexFrequency<f64>> =
        eta_v.iter().zip(delta_dot).map(|(e, &dd)| ComplexFrequency::new(e.rho, e.omega - dd)).collect();

    let mut terms = vec![
        ("rho_v".to_string(), eta_v.iter().map(|e| e.rho).collect::<Vec<_>>()),
        ("omega_v".to_string(), eta_v.iter().map(|e| e.omega).collect()),
        ("delta_dot".to_string(), delta_dot.to_vec()),
    ];
    let internal: Vec<ComplexFrequency<f64>> = match row {
        TableRow::CurrentControlPll { kappa } => {
            let k = kappa / omega_n;
            terms.push(("kappa".into(), vec![k; n]));
            eta_local.iter().map(|e| ComplexFrequency::new(e.rho - k, e.omega)).collect()
        }
        TableRow::VoltageFeedForward { kp } => {
            if !(kp > 0.0) {
                return Err(AnalysisError::Invalid(format!("K_p must be positive, got {kp}")));
            }
            // −(η_v* + jδ̇)/K_p
            eta_v
                .iter()
                .zip(delta_dot)
                .map(|(e, &dd)| ComplexFrequency::new(-e.rho / kp, -(-e.omega + dd) / kp))
                .collect()
        }
        TableRow::VirtualAdmittance { kappa, gv, bv } => {
            let k = kappa / omega_n;
            let vh = park_channels(ts, &dev("vpd"), &dev("vpq"))?;
            let y_conj = ParkVector::new(gv, -bv);
            terms.push(("kappa".into(), vec![k; n]));
            terms.push(("v_h".into(), vh.iter().map(|u| u.magnitude()).collect()));
            eta_local
                .iter()
                .zip(&vh)
                .map(|(e, u)| {
                    let inner = ParkVector::new(e.rho + k, -e.omega);
                    ComplexFrequency::from_park(-(y_conj * inner) * u.magnitude_sqr())
                })
                .collect()
        }
        TableRow::GflOuterLoops { kp_o, ki_o } => {
            let rho_dc = channel(ts, &dev("rho_dc"))?;
            terms.push(("rho_dc".into(), rho_dc.to_vec()));
            let ki = ki_o / omega_n;
            eta_v
                .iter()
                .zip(rho_dc)
                .map(|(e, &r)| ComplexFrequency::new(kp_o * r / omega_n + ki, kp_o * e.rho + ki))
                .collect()
        }
        TableRow::GfmVoltageControl { kp_v, ki_v } => {
            let ki = ki_v / omega_n;
            eta_local.iter().map(|e| ComplexFrequency::new(-(kp_v * e.rho + ki), kp_v * e.omega)).collect()
        }
        TableRow::PfDroop | TableRow::VsmAngle => eta_local.clone(),
    };
    terms.push(("rho_v_local".into(), eta_local.iter().map(|e| e.rho).collect()));
    terms.push(("omega_v_local".into(), eta_local.iter().map(|e| e.omega).collect()));
    Ok(InternalFrequencyReport { device: device.to_string(), configuration: row.tag(), internal, terms })
}

/// Synchronous-machine analogue of the internal frequency: the bus
/// frequency seen from a frame rotating with the rotor relative to the
/// centre of inertia, `ω' = ω_v − (ω_r − ω_COI)`.
pub fn machine_internal_frequency(omega_v: f64, omega_r: f64, omega_coi: f64) -> f64 {
    omega_v - (omega_r - omega_coi)
}
