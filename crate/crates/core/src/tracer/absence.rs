//! Presence/absence tallies for all facts and for predictable facts.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::FactUid;

use super::scan::TraceResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsenceCounts {
    pub all_present: usize,
    pub all_absent: usize,
    pub predicted_present: usize,
    pub predicted_absent: usize,
    pub all_absent_rate: f64,
    /// 0 when nothing was predicted; see `predicted_empty`.
    pub predicted_absent_rate: f64,
    pub predicted_empty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsenceReport {
    pub counts: AbsenceCounts,
    /// Predictable facts without corpus evidence.
    pub predicted_absent: BTreeSet<FactUid>,
}

/// Facts of `all_facts` lacking a trace count as absent.
pub fn absence_report(
    traces: &[TraceResult],
    predicted: &BTreeSet<FactUid>,
    all_facts: &BTreeSet<FactUid>,
) -> Result<AbsenceReport> {
    if let Some(u) = predicted.iter().find(|u| !all_facts.contains(u)) {
        return Err(Error::contract(format!("predicted fact {u} is not in the fact set")));
    }
    let present: HashMap<FactUid, bool> = traces.iter().map(|t| (t.uid, t.present)).collect();
    let is_present = |u: &FactUid| present.get(u).copied().unwrap_or(false);

    let all_present = all_facts.iter().filter(|u| is_present(u)).count();
    let predicted_absent: BTreeSet<FactUid> = predicted.iter().filter(|u| !is_present(u)).copied().collect();
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let counts = AbsenceCounts {
        all_present,
        all_absent: all_facts.len() - all_present,
        predicted_present: predicted.len() - predicted_absent.len(),
        predicted_absent: predicted_absent.len(),
        all_absent_rate: rate(all_facts.len() - all_present, all_facts.len()),
        predicted_absent_rate: rate(predicted_absent.len(), predicted.len()),
        predicted_empty: predicted.is_empty(),
    };
    Ok(AbsenceReport {
        counts,
        predicted_absent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LanguageCode;

    fn trace(uid: u64, present: bool) -> TraceResult {
        TraceResult {
            uid: FactUid(uid),
            language: LanguageCode::new("en").unwrap(),
            present,
            evidence: present.then(|| super::super::corpus::passage_id("d", 0)),
        }
    }

    fn set(xs: &[u64]) -> BTreeSet<FactUid> {
        xs.iter().map(|&x| FactUid(x)).collect()
    }

    #[test]
    fn half_of_predicted_absent() {
        let traces = vec![trace(1, true), trace(2, false), trace(3, false)];
        let r = absence_report(&traces, &set(&[1, 2]), &set(&[1, 2, 3])).unwrap();
        assert_eq!(r.predicted_absent, set(&[2]));
        assert_eq!(r.counts.predicted_absent_rate, 0.5);
        assert_eq!(r.counts.all_present, 1);
        assert_eq!(r.counts.all_absent, 2);
    }

    #[test]
    fn all_present() {
        let traces = vec![trace(1, true), trace(2, true)];
        let r = absence_report(&traces, &set(&[1, 2]), &set(&[1, 2])).unwrap();
        assert!(r.predicted_absent.is_empty());
        assert_eq!(r.counts.all_absent, 0);
    }

    #[test]
    fn nothing_predicted() {
        let traces = vec![trace(1, false)];
        let r = absence_report(&traces, &set(&[]), &set(&[1])).unwrap();
        assert!(r.counts.predicted_empty);
        assert_eq!(r.counts.predicted_absent_rate, 0.0);
    }

    #[test]
    fn predicted_must_be_known() {
        assert!(absence_report(&[], &set(&[9]), &set(&[1])).is_err());
    }
}
