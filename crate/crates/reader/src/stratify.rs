use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Condition, Stratum, StudyConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StratifyError {
    #[error("stratum {stratum} is short: needs {needed} cases, pool has {available}")]
    Short {
        stratum: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("overlap of {overlap} exceeds the per-reader total of {total}")]
    OverlapTooLarge { overlap: usize, total: usize },
    #[error("fixed overlap puts {count} {stratum} cases in, above the quota of {quota}")]
    OverlapOverQuota {
        stratum: &'static str,
        count: usize,
        quota: usize,
    },
    #[error("no readers")]
    NoReaders,
}

/// Cases per reader in each stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quota {
    pub true_positive: usize,
    pub false_positive: usize,
    pub anomaly_free: usize,
}

impl Default for Quota {
    fn default() -> Self {
        Self {
            true_positive: 16,
            false_positive: 6,
            anomaly_free: 8,
        }
    }
}

impl Quota {
    pub fn get(&self, s: Stratum) -> usize {
        match s {
            Stratum::TruePositive => self.true_positive,
            Stratum::FalsePositive => self.false_positive,
            Stratum::AnomalyFree => self.anomaly_free,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.anomaly_free
    }

    /// Splits `overlap` across strata in proportion to the quota by largest
    /// remainder; remainder ties go to the earlier stratum.
    pub fn overlap_shares(&self, overlap: usize) -> [usize; 3] {
        let total = self.total();
        if total == 0 {
            return [0; 3];
        }
        let exact: Vec<(usize, usize)> = Stratum::ALL
            .iter()
            .map(|&s| (overlap * self.get(s) / total, overlap * self.get(s) % total))
            .collect();
        let mut shares = [exact[0].0, exact[1].0, exact[2].0];
        let mut left = overlap - shares.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| exact[b].1.cmp(&exact[a].1));
        for i in order {
            if left == 0 {
                break;
            }
            shares[i] += 1;
            left -= 1;
        }
        shares
    }
}

/// One case in a reader's plan with the order its conditions are read in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasePlan {
    pub case_id: String,
    pub conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub readers: BTreeMap<String, Vec<CasePlan>>,
    /// Cases every reader grades.
    pub overlap: Vec<String>,
}

impl Assignment {
    pub fn plan(&self, reader: &str, case: &str) -> Option<&CasePlan> {
        self.readers.get(reader)?.iter().find(|p| p.case_id == case)
    }

    pub fn cases_of(&self, reader: &str) -> Option<Vec<&str>> {
        Some(self.readers.get(reader)?.iter().map(|p| p.case_id.as_str()).collect())
    }
}

/// Seeded draw that gives every reader exactly the quota per stratum. The
/// overlap cases are shared by all readers; the rest are disjoint between
/// readers. Case and condition order are shuffled per reader.
pub fn stratify_assignment(
    pool: &[(String, Stratum)],
    readers: &[String],
    quota: &Quota,
    overlap: usize,
    fixed_overlap: &[String],
    conditions: &[Condition],
    seed: u64,
) -> Result<Assignment, StratifyError> {
    if readers.is_empty() {
        return Err(StratifyError::NoReaders);
    }
    if overlap > quota.total() {
        return Err(StratifyError::OverlapTooLarge {
            overlap,
            total: quota.total(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed: BTreeSet<&str> = fixed_overlap.iter().map(String::as_str).collect();
    let shares = quota.overlap_shares(overlap);
    let mut shared = Vec::new();
    let mut own: Vec<Vec<String>> = vec![Vec::new(); readers.len()];
    let mut shortages = Vec::new();
    for (si, &s) in Stratum::ALL.iter().enumerate() {
        let mut ids: Vec<&String> = pool.iter().filter(|(_, st)| *st == s).map(|(id, _)| id).collect();
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut rng);
        let (mut ov, mut rest): (Vec<&String>, Vec<&String>) = if fixed.is_empty() {
            let k = shares[si].min(ids.len());
            (ids[..k].to_vec(), ids[k..].to_vec())
        } else {
            ids.into_iter().partition(|id| fixed.contains(id.as_str()))
        };
        let q = quota.get(s);
        if ov.len() > q {
            return Err(StratifyError::OverlapOverQuota {
                stratum: s.key(),
                count: ov.len(),
                quota: q,
            });
        }
        let want_overlap = if fixed.is_empty() { shares[si] } else { ov.len() };
        let needed = want_overlap + readers.len() * (q - want_overlap);
        let available = ov.len() + rest.len();
        if available < needed {
            shortages.push(StratifyError::Short {
                stratum: s.key(),
                needed,
                available,
            });
            continue;
        }
        shared.append(&mut ov);
        for list in own.iter_mut() {
            list.extend(rest.drain(..q - want_overlap).cloned());
        }
    }
    if let Some(e) = shortages.into_iter().next() {
        return Err(e);
    }
    let mut out = BTreeMap::new();
    for (reader, mine) in readers.iter().zip(own) {
        let mut cases: Vec<String> = shared.iter().map(|s| (*s).clone()).chain(mine).collect();
        cases.shuffle(&mut rng);
        let plans = cases
            .into_iter()
            .map(|case_id| {
                let mut conditions = conditions.to_vec();
                conditions.shuffle(&mut rng);
                CasePlan { case_id, conditions }
            })
            .collect();
        out.insert(reader.clone(), plans);
    }
    let mut overlap_ids: Vec<String> = shared.into_iter().cloned().collect();
    overlap_ids.sort();
    Ok(Assignment {
        readers: out,
        overlap: overlap_ids,
    })
}

/// [`stratify_assignment`] with everything taken from the config.
pub fn assign_from_config(cfg: &StudyConfig) -> Result<Assignment, StratifyError> {
    let pool: Vec<(String, Stratum)> = cfg.cases.iter().map(|c| (c.id.clone(), c.stratum)).collect();
    stratify_assignment(
        &pool,
        &cfg.readers,
        &cfg.quota,
        cfg.overlap,
        &cfg.overlap_case_ids,
        &cfg.conditions,
        cfg.seed,
    )
}
