//! Discrete-event simulation oracle for the multi-class M/G/1 priority queue.
//!
//! Classes are indexed by position in the input slice; index 0 has the
//! highest priority. Arrivals are Poisson per class, service times come from
//! the configured [`ServiceModel`], and the queue discipline is either
//! non-preemptive or preemptive-resume. Reported waiting time is
//! (departure - arrival - total service), i.e. sojourn minus service.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};

use super::QueueError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceModel {
    /// Gamma with the given mean and variance (shape = m^2/v, scale = v/m).
    GammaMatched { mean: f64, variance: f64 },
    Exponential { mean: f64 },
    Deterministic { mean: f64 },
}

impl ServiceModel {
    pub fn mean(&self) -> f64 {
        match *self {
            ServiceModel::GammaMatched { mean, .. } => mean,
            ServiceModel::Exponential { mean } => mean,
            ServiceModel::Deterministic { mean } => mean,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DesClass {
    pub lambda: f64,
    pub service: ServiceModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discipline {
    NonPreemptive,
    PreemptiveResume,
}

#[derive(Debug, Clone)]
pub struct ClassWait {
    pub class_id: usize,
    pub mean_wait: f64,
    pub stderr: f64,
    pub n_jobs: usize,
}

#[derive(Debug, Clone)]
pub struct DesResult {
    pub per_class: Vec<ClassWait>,
}

impl DesResult {
    /// CSV dump `class_id,mean_wait,stderr,n_jobs` for test audits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class_id,mean_wait,stderr,n_jobs\n");
        for c in &self.per_class {
            s.push_str(&format!(
                "{},{},{},{}\n",
                c.class_id, c.mean_wait, c.stderr, c.n_jobs
            ));
        }
        s
    }
}

struct Job {
    arrival: f64,
    total_service: f64,
    remaining: f64,
}

enum Sampler {
    Gamma(Gamma<f64>),
    Exp(Exp<f64>),
    Fixed(f64),
}

impl Sampler {
    fn new(model: ServiceModel) -> Result<Self, QueueError> {
        Ok(match model {
            ServiceModel::GammaMatched { mean, variance } => {
                if variance <= 0.0 {
                    Sampler::Fixed(mean)
                } else {
                    let shape = mean * mean / variance;
                    let scale = variance / mean;
                    Sampler::Gamma(Gamma::new(shape, scale).map_err(|e| {
                        QueueError::InvalidPlan(format!("gamma service: {e}"))
                    })?)
                }
            }
            ServiceModel::Exponential { mean } => Sampler::Exp(
                Exp::new(1.0 / mean)
                    .map_err(|e| QueueError::InvalidPlan(format!("exp service: {e}")))?,
            ),
            ServiceModel::Deterministic { mean } => Sampler::Fixed(mean),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::Exp(e) => e.sample(rng),
            Sampler::Fixed(v) => *v,
        }
    }
}

/// Running mean/variance accumulator (Welford).
#[derive(Default)]
struct Stats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Stats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Runs the oracle until `total_jobs` completions (plus a 1% warmup that is
/// discarded) and returns per-class empirical mean waits with standard
/// errors.
pub fn des_oracle(
    classes: &[DesClass],
    discipline: Discipline,
    total_jobs: usize,
    seed: u64,
) -> Result<DesResult, QueueError> {
    let rho: f64 = classes.iter().map(|c| c.lambda * c.service.mean()).sum();
    if rho >= 1.0 {
        return Err(QueueError::Unstable {
            which: "1 - rho",
            value: 1.0 - rho,
        });
    }
    let total_lambda: f64 = classes.iter().map(|c| c.lambda).sum();
    if total_lambda == 0.0 || total_jobs == 0 {
        return Ok(DesResult {
            per_class: classes
                .iter()
                .enumerate()
                .map(|(k, _)| ClassWait {
                    class_id: k,
                    mean_wait: 0.0,
                    stderr: 0.0,
                    n_jobs: 0,
                })
                .collect(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samplers: Vec<Sampler> = classes
        .iter()
        .map(|c| Sampler::new(c.service))
        .collect::<Result<_, _>>()?;
    let arrivals: Vec<Option<Exp<f64>>> = classes
        .iter()
        .map(|c| {
            if c.lambda > 0.0 {
                Some(Exp::new(c.lambda).expect("positive rate"))
            } else {
                None
            }
        })
        .collect();

    let k_classes = classes.len();
    let mut next_arrival: Vec<f64> = (0..k_classes)
        .map(|k| arrivals[k].map_or(f64::INFINITY, |d| d.sample(&mut rng)))
        .collect();
    let mut queues: Vec<VecDeque<Job>> = (0..k_classes).map(|_| VecDeque::new()).collect();
    let mut serving: Option<(usize, Job)> = None;
    let mut stats: Vec<Stats> = (0..k_classes).map(|_| Stats::default()).collect();

    let warmup = total_jobs / 100;
    let mut completed = 0usize;
    let mut now = 0.0f64;

    while completed < warmup + total_jobs {
        let arrival_class = (0..k_classes)
            .min_by(|&a, &b| next_arrival[a].total_cmp(&next_arrival[b]))
            .unwrap();
        let t_arrival = next_arrival[arrival_class];
        let t_completion = serving
            .as_ref()
            .map_or(f64::INFINITY, |(_, job)| now + job.remaining);

        if t_arrival <= t_completion {
            // advance the in-service job to the arrival instant
            if let Some((_, job)) = serving.as_mut() {
                job.remaining -= t_arrival - now;
            }
            now = t_arrival;
            next_arrival[arrival_class] = now + arrivals[arrival_class].unwrap().sample(&mut rng);
            let service = samplers[arrival_class].sample(&mut rng);
            queues[arrival_class].push_back(Job {
                arrival: now,
                total_service: service,
                remaining: service,
            });
            match serving {
                None => {
                    serving = take_next(&mut queues);
                }
                Some((k, _)) if discipline == Discipline::PreemptiveResume && arrival_class < k => {
                    let (k, job) = serving.take().unwrap();
                    queues[k].push_front(job);
                    serving = take_next(&mut queues);
                }
                _ => {}
            }
        } else {
            now = t_completion;
            let (k, job) = serving.take().unwrap();
            completed += 1;
            if completed > warmup {
                stats[k].push(now - job.arrival - job.total_service);
            }
            serving = take_next(&mut queues);
        }
    }

    Ok(DesResult {
        per_class: stats
            .iter()
            .enumerate()
            .map(|(k, s)| ClassWait {
                class_id: k,
                mean_wait: s.mean,
                stderr: s.stderr(),
                n_jobs: s.n,
            })
            .collect(),
    })
}

fn take_next(queues: &mut [VecDeque<Job>]) -> Option<(usize, Job)> {
    for (k, q) in queues.iter_mut().enumerate() {
        if let Some(job) = q.pop_front() {
            return Some((k, job));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queueing::{queuing_time, PkMode, SensedClass, SensingPlan};
    use crate::domain::InformationType;

    #[test]
    fn mm1_matches_closed_form() {
        // mean wait = rho * alpha / (1 - rho) = 1.0 at lambda = 0.5, alpha = 1
        let classes = [DesClass {
            lambda: 0.5,
            service: ServiceModel::Exponential { mean: 1.0 },
        }];
        let r = des_oracle(&classes, Discipline::NonPreemptive, 200_000, 1).unwrap();
        let w = r.per_class[0].mean_wait;
        assert!((w - 1.0).abs() / 1.0 < 0.02, "mm1 wait {w}");
    }

    #[test]
    fn md1_matches_closed_form() {
        // mean wait = lambda E[S^2] / (2 (1 - rho)) = 0.5 at lambda=0.5, S=1
        let classes = [DesClass {
            lambda: 0.5,
            service: ServiceModel::Deterministic { mean: 1.0 },
        }];
        let r = des_oracle(&classes, Discipline::NonPreemptive, 200_000, 2).unwrap();
        let w = r.per_class[0].mean_wait;
        assert!((w - 0.5).abs() / 0.5 < 0.02, "md1 wait {w}");
    }

    #[test]
    fn zero_arrivals_zero_wait() {
        let classes = [DesClass {
            lambda: 0.0,
            service: ServiceModel::Exponential { mean: 1.0 },
        }];
        let r = des_oracle(&classes, Discipline::NonPreemptive, 1000, 3).unwrap();
        assert_eq!(r.per_class[0].mean_wait, 0.0);
        assert_eq!(r.per_class[0].n_jobs, 0);
    }

    #[test]
    fn unstable_plan_rejected() {
        let classes = [DesClass {
            lambda: 2.0,
            service: ServiceModel::Exponential { mean: 1.0 },
        }];
        assert!(des_oracle(&classes, Discipline::NonPreemptive, 100, 4).is_err());
    }

    #[test]
    fn two_class_preemptive_matches_textbook_formula() {
        let types = [
            InformationType {
                id: 0,
                update_interval: 1.0,
                size_bits: 1.0,
                mean_service: 0.12,
                service_variance: 0.004,
            },
            InformationType {
                id: 1,
                update_interval: 1.0,
                size_bits: 1.0,
                mean_service: 0.3,
                service_variance: 0.02,
            },
        ];
        // priority: type 0 higher
        let plan = SensingPlan {
            sensed: vec![
                SensedClass { info_type: 0, lambda: 2.0, priority: 2 },
                SensedClass { info_type: 1, lambda: 1.2, priority: 1 },
            ],
        };
        let classes = [
            DesClass {
                lambda: 2.0,
                service: ServiceModel::GammaMatched { mean: 0.12, variance: 0.004 },
            },
            DesClass {
                lambda: 1.2,
                service: ServiceModel::GammaMatched { mean: 0.3, variance: 0.02 },
            },
        ];
        let r = des_oracle(&classes, Discipline::PreemptiveResume, 400_000, 5).unwrap();
        for (class_idx, ty) in [(0usize, 0usize), (1, 1)] {
            let analytic = queuing_time(&plan, &types, ty, PkMode::Textbook).unwrap();
            let sim = r.per_class[class_idx].mean_wait;
            let rel = (sim - analytic).abs() / analytic;
            assert!(rel < 0.02, "class {class_idx}: sim {sim} vs analytic {analytic}");
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let classes = [DesClass {
            lambda: 0.3,
            service: ServiceModel::Exponential { mean: 1.0 },
        }];
        let r = des_oracle(&classes, Discipline::NonPreemptive, 1000, 6).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("class_id,mean_wait,stderr,n_jobs\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
