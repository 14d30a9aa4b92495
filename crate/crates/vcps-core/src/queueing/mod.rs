//! Multi-class M/G/1 priority-queue analytics for per-information queuing
//! delay, workload, stability, and arrival/update moments, plus a
//! discrete-event simulation oracle in [`des`].

pub mod des;

pub use des::{des_oracle, DesClass, DesResult, Discipline, ServiceModel};

use thiserror::Error;

use crate::domain::{InformationType, Vehicle};

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("sensing frequency must be > 0 (got {0})")]
    NonPositiveLambda(f64),
    #[error("unstable queue: denominator {which} = {value} is not positive")]
    Unstable { which: &'static str, value: f64 },
    #[error("info type {0} is not in the plan")]
    UnknownClass(usize),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// One sensed information class inside a vehicle's per-slot plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedClass {
    pub info_type: usize,
    /// Sensing frequency lambda in Hz.
    pub lambda: f64,
    /// Uploading priority; larger means served first. Distinct per vehicle.
    pub priority: i64,
}

/// The sensing decision of one vehicle at one slot: which information is
/// sensed (c = 1), at what frequency, with what uploading priority.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensingPlan {
    pub sensed: Vec<SensedClass>,
}

impl SensingPlan {
    /// Checks frequency bounds against the vehicle's sensable set and
    /// pairwise-distinct priorities.
    pub fn validate(&self, vehicle: &Vehicle) -> Result<(), QueueError> {
        for (i, a) in self.sensed.iter().enumerate() {
            let entry = vehicle.sensable_entry(a.info_type).ok_or_else(|| {
                QueueError::InvalidPlan(format!(
                    "vehicle {} cannot sense type {}",
                    vehicle.id, a.info_type
                ))
            })?;
            if a.lambda < entry.lambda_min || a.lambda > entry.lambda_max {
                return Err(QueueError::InvalidPlan(format!(
                    "lambda {} outside [{}, {}] for type {}",
                    a.lambda, entry.lambda_min, entry.lambda_max, a.info_type
                )));
            }
            for b in &self.sensed[i + 1..] {
                if a.priority == b.priority {
                    return Err(QueueError::InvalidPlan(format!(
                        "duplicate priority {} (types {} and {})",
                        a.priority, a.info_type, b.info_type
                    )));
                }
            }
        }
        Ok(())
    }

    fn class(&self, info_type: usize) -> Result<&SensedClass, QueueError> {
        self.sensed
            .iter()
            .find(|c| c.info_type == info_type)
            .ok_or(QueueError::UnknownClass(info_type))
    }
}

/// Total uploading workload rho = sum of lambda * alpha over the sensed set.
pub fn workload(plan: &SensingPlan, info_types: &[InformationType]) -> f64 {
    plan.sensed
        .iter()
        .map(|c| c.lambda * info_types[c.info_type].mean_service)
        .sum()
}

/// Steady state exists iff rho < 1 (strict).
pub fn check_stability(plan: &SensingPlan, info_types: &[InformationType]) -> bool {
    workload(plan, info_types) < 1.0
}

/// Arrival and update moments of the freshest copy of an information class
/// sensed at frequency `lambda` before time `t` (seconds):
/// a = floor(t * lambda) / lambda, u = floor(a / u_d) * u_d.
pub fn moments(t: f64, lambda: f64, update_interval: f64) -> Result<(f64, f64), QueueError> {
    if lambda <= 0.0 {
        return Err(QueueError::NonPositiveLambda(lambda));
    }
    let arrival = (t * lambda).floor() / lambda;
    let update = (arrival / update_interval).floor() * update_interval;
    Ok((arrival, update))
}

/// How the per-class second-moment terms of the priority waiting-time formula
/// are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PkMode {
    /// The formula exactly as modeled: second-moment terms use the service
    /// variance beta alone.
    #[default]
    PaperLiteral,
    /// Each beta replaced by the full second moment E[S^2] = beta + alpha^2;
    /// this variant is what the DES oracle reproduces.
    Textbook,
}

/// Mean queuing time of class `info_type` under the priority waiting-time
/// formula:
///
/// q = 1/(1 - rho_h) * [alpha + (sum of lambda*m2 over own + higher classes)
///     / (2 (1 - rho_h - lambda*alpha))] - alpha
///
/// where rho_h is the workload of strictly-higher-priority classes and m2 is
/// beta ([`PkMode::PaperLiteral`]) or beta + alpha^2 ([`PkMode::Textbook`]).
pub fn queuing_time(
    plan: &SensingPlan,
    info_types: &[InformationType],
    info_type: usize,
    mode: PkMode,
) -> Result<f64, QueueError> {
    let own = plan.class(info_type)?;
    let alpha = info_types[info_type].mean_service;
    let m2 = |d: &InformationType| match mode {
        PkMode::PaperLiteral => d.service_variance,
        PkMode::Textbook => d.service_variance + d.mean_service * d.mean_service,
    };

    let mut rho_higher = 0.0;
    let mut second_moment_sum = own.lambda * m2(&info_types[info_type]);
    for c in &plan.sensed {
        if c.priority > own.priority {
            let d = &info_types[c.info_type];
            rho_higher += c.lambda * d.mean_service;
            second_moment_sum += c.lambda * m2(d);
        }
    }

    let outer = 1.0 - rho_higher;
    if outer <= 0.0 {
        return Err(QueueError::Unstable {
            which: "1 - rho_higher",
            value: outer,
        });
    }
    let inner = 1.0 - rho_higher - own.lambda * alpha;
    if inner <= 0.0 {
        return Err(QueueError::Unstable {
            which: "1 - rho_higher - lambda*alpha",
            value: inner,
        });
    }
    Ok((alpha + second_moment_sum / (2.0 * inner)) / outer - alpha)
}
