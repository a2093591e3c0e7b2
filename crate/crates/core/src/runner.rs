//! Executes the checks of a scenario in declaration order.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expected::SelectionFunction;
use crate::leibniz::{
    self, sequential_witness_search, verify_coderivative_inclusion, verify_composite_rule,
    verify_eim_lipschitz_certificate, verify_second_order, verify_subdifferential_leibniz,
    Instance, RuleId, SubdiffMode, VerifyOptions, WitnessFamily, WitnessSchedule,
};
use crate::linalg::Vector;
use crate::lipschitz::{
    check_integrable_local_lipschitz, check_lipschitz_like_deterministic, check_quasi_lipschitz,
    DeterministicMap, LipschitzProperty,
};
use crate::report::{round12, Record, Report};
use crate::scenario::{CheckSpec, Scenario};
use crate::verdict::Verdict;

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    /// Record ids to keep; empty keeps everything.
    pub only: Vec<String>,
}

/// Canonical record id for a `--rule` filter value.
pub fn canonical_check_id(s: &str) -> Result<&'static str> {
    if let Ok(r) = RuleId::from_str(s) {
        return Ok(r.as_str());
    }
    let key: String = s
        .chars()
        .filter(|c| *c != '_' && *c != '-')
        .collect::<String>()
        .to_lowercase();
    [
        LipschitzProperty::LocalLipschitz,
        LipschitzProperty::QuasiLipschitz,
        LipschitzProperty::LipschitzLike,
    ]
    .into_iter()
    .map(|p| p.as_str())
    .find(|p| p.replace('_', "") == key)
    .ok_or_else(|| Error::InvalidInput(format!("unknown rule or check id '{s}'")))
}

pub fn run_path(path: &Path, overrides: &Overrides) -> Result<Report> {
    run_scenario(&Scenario::from_path(path)?, overrides)
}

pub fn run_scenario(sc: &Scenario, overrides: &Overrides) -> Result<Report> {
    let only: Vec<&str> = overrides
        .only
        .iter()
        .map(|s| canonical_check_id(s))
        .collect::<Result<_>>()?;
    let seed = overrides.seed.or(sc.settings.seed).unwrap_or(0);
    let opts = VerifyOptions {
        tol: overrides.tol.or(sc.settings.tol),
        eta: sc.settings.eta,
        seed,
        ystar: sc.points.ystar_grid.clone(),
        lhs: sc.settings.lhs,
        hypothesis_grid: sc.settings.hypothesis_grid.clone(),
        second_order_quasi: sc.settings.second_order_quasi,
    };
    let selection = match &sc.points.selection {
        Some(per_node) => Some(SelectionFunction::new(per_node.clone(), &sc.space)?),
        None => None,
    };
    let ybar: Option<Vector> = sc
        .points
        .y
        .clone()
        .or_else(|| selection.as_ref().map(|s| s.aggregate.clone()));
    let mut records = Vec::new();
    for check in &sc.checks {
        let id = check.id();
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let zero = Vector::zeros(sc.map.m);
        let inst = Instance {
            map: &sc.map,
            space: &sc.space,
            xbar: &sc.points.x,
            ybar: ybar.as_ref().unwrap_or(&zero),
            selection: selection.as_ref(),
        };
        let outcome = run_check(sc, check, &inst, &opts);
        let mut record = match outcome {
            Ok(r) => r,
            // Malformed requests abort the run; numerical failures are
            // recorded and keep the remaining checks going.
            Err(
                e @ (Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::DomainMismatch(_)),
            ) => return Err(Error::InvalidInput(format!("{id}: {e}"))),
            Err(e) => Record {
                note: Some(format!("error: {e}")),
                ..Record::new(id, Verdict::Inconclusive)
            },
        };
        record.id = id.to_string();
        if let Some(tol) = opts.tol {
            if record.tolerance.is_none() && matches!(check, CheckSpec::Rule { .. }) {
                record.tolerance = Some(round12(tol));
            }
        }
        record.expected = sc.expectations.get(id).cloned();
        records.push(record);
    }
    Ok(Report {
        scenario: sc.name.clone(),
        seed,
        records,
    })
}

fn first_selection(inst: &Instance<'_>) -> Result<SelectionFunction> {
    Ok(leibniz::selections(inst, false)?.remove(0))
}

fn run_check(
    sc: &Scenario,
    check: &CheckSpec,
    inst: &Instance<'_>,
    opts: &VerifyOptions,
) -> Result<Record> {
    let grid = &sc.settings.grid;
    match check {
        CheckSpec::Lipschitz(p) => {
            let r = match p {
                LipschitzProperty::LocalLipschitz => {
                    check_integrable_local_lipschitz(&sc.map, &sc.space, inst.xbar, opts.eta, grid)?
                }
                LipschitzProperty::QuasiLipschitz => {
                    let sel = match inst.selection {
                        Some(s) => s.clone(),
                        None => first_selection(inst)?,
                    };
                    check_quasi_lipschitz(
                        &sc.map, &sc.space, inst.xbar, &sel, opts.eta, grid, opts.seed,
                    )?
                }
                LipschitzProperty::LipschitzLike => check_lipschitz_like_deterministic(
                    DeterministicMap::Expected {
                        map: &sc.map,
                        space: &sc.space,
                    },
                    inst.xbar,
                    inst.ybar,
                    opts.seed,
                )?,
                LipschitzProperty::SubLipschitz => {
                    return Err(Error::InvalidInput(
                        "sub-Lipschitz checks are not available".into(),
                    ))
                }
            };
            Ok(Record::from_lipschitz(p.as_str(), &r))
        }
        CheckSpec::Rule { rule, family } => match rule {
            RuleId::RegularPointwise
            | RuleId::LimitingUnion
            | RuleId::LimitingLipschitzVariant
            | RuleId::SingleValued
            | RuleId::EqualityCase => Ok(Record::from_inclusion(&verify_coderivative_inclusion(
                *rule, inst, opts,
            )?)),
            RuleId::FirstOrderSubdiff | RuleId::FirstOrderEquality => {
                let phi = sc.scalar.as_ref().ok_or_else(|| {
                    Error::InvalidInput(
                        "subdifferential rules need scalar integrands at every node".into(),
                    )
                })?;
                let mode = if *rule == RuleId::FirstOrderSubdiff {
                    SubdiffMode::Inclusion
                } else {
                    SubdiffMode::Equality
                };
                Ok(Record::from_inclusion(&verify_subdifferential_leibniz(
                    phi, &sc.space, inst.xbar, mode, opts,
                )?))
            }
            RuleId::CompositeAmenable | RuleId::ConstraintSpecialized => {
                Ok(Record::from_inclusion(&verify_composite_rule(
                    inst,
                    opts,
                    *rule == RuleId::ConstraintSpecialized,
                )?))
            }
            RuleId::EimLipschitzCertificate => Ok(Record::from_lipschitz(
                rule.as_str(),
                &verify_eim_lipschitz_certificate(inst, opts)?,
            )),
            RuleId::SecondOrderCombined | RuleId::SecondOrderBasic | RuleId::SecondOrderMax => Ok(
                Record::from_inclusion(&verify_second_order(*rule, inst, opts)?),
            ),
            RuleId::SequentialWitness => {
                let family = family.unwrap_or(if sc.map.is_max_affine() {
                    WitnessFamily::Subdifferential
                } else {
                    WitnessFamily::Coderivative
                });
                let schedule = WitnessSchedule {
                    eps: sc.settings.witness_eps.clone(),
                    budget: sc.settings.witness_budget,
                };
                let target = sc.points.xstar.as_ref().expect("checked at parse time");
                let s = sequential_witness_search(
                    family,
                    &sc.map,
                    &sc.space,
                    inst.xbar,
                    inst.selection,
                    target,
                    sc.points.ystar.as_ref(),
                    &schedule,
                )?;
                let last = s.steps.last();
                Ok(Record {
                    max_violation: last.map(|st| round12(st.residual)),
                    witness: last.filter(|st| st.found).map(|st| {
                        st.tuples
                            .iter()
                            .map(|t| format!("xstar={:.6e}", t.xstar.norm()))
                            .collect::<Vec<_>>()
                            .join(",")
                    }),
                    grid: Some(
                        format!(
                            "{:?} family; eps {}; budget {}",
                            family,
                            schedule
                                .eps
                                .iter()
                                .map(|e| format!("{e:e}"))
                                .collect::<Vec<_>>()
                                .join(","),
                            schedule.budget
                        )
                        .to_lowercase(),
                    ),
                    note: Some(s.note),
                    ..Record::new(rule.as_str(), s.verdict)
                })
            }
        },
    }
}
