//! Speaker-independent fold planning.
//!
//! Two schemes: one test fold per recording session, or `k` disjoint groups
//! of speakers. Under the speaker scheme the validation set is 20% of the
//! remaining speakers, drawn with the plan seed. Speaker draws are stratified
//! by gender so each group's gender mix follows the corpus.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Gender, Manifest};
use crate::rng::{self, streams};

/// Share of non-test speakers held out for validation under [`ValPolicy::Fraction`].
pub const VAL_SPEAKER_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldScheme {
    SessionFold,
    SpeakerFractionFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValPolicy {
    /// The session after the test session, cyclically.
    OneSession,
    Fraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Checks the plan against `manifest`: known ids, disjoint sets within a
    /// fold, no speaker shared between train and test, and test sets that
    /// partition the manifest.
    pub fn validate(&self, manifest: &Manifest) -> Result<(), DataError> {
        let index = manifest.index();
        let mut tested: HashMap<&str, usize> = HashMap::new();
        for (f, fold) in self.folds.iter().enumerate() {
            let mut seen: HashSet<&str> = HashSet::new();
            for id in fold.train.iter().chain(&fold.val).chain(&fold.test) {
                if !index.contains_key(id.as_str()) {
                    return Err(DataError::Folds(format!("fold {f} references unknown id {id:?}")));
                }
                if !seen.insert(id) {
                    return Err(DataError::Folds(format!("fold {f} lists {id:?} in more than one set")));
                }
            }
            let speaker = |id: &String| manifest.records[index[id.as_str()]].speaker_id.as_str();
            let test_speakers: HashSet<&str> = fold.test.iter().map(speaker).collect();
            if let Some(id) = fold.train.iter().find(|id| test_speakers.contains(speaker(id))) {
                return Err(DataError::Folds(format!(
                    "fold {f}: speaker {:?} appears in both train and test",
                    speaker(id)
                )));
            }
            for id in &fold.test {
                if let Some(prev) = tested.insert(id, f) {
                    return Err(DataError::Folds(format!("{id:?} is tested in folds {prev} and {f}")));
                }
            }
        }
        if tested.len() != manifest.len() {
            return Err(DataError::Folds(format!(
                "test sets cover {} of {} utterances",
                tested.len(),
                manifest.len()
            )));
        }
        Ok(())
    }
}

/// Shuffles each gender's speakers and spreads every gender evenly through
/// the result, so any contiguous run has close to the overall gender mix.
fn stratified_order<'a>(speakers: &[&'a str], gender_of: &HashMap<&str, Gender>, rng: &mut ChaCha8Rng) -> Vec<&'a str> {
    let mut keyed: Vec<(f64, usize, &str)> = Vec::with_capacity(speakers.len());
    for g in Gender::ALL {
        let mut group: Vec<&str> = speakers.iter().copied().filter(|s| gender_of[s] == g).collect();
        group.sort_unstable();
        group.shuffle(rng);
        let n = group.len() as f64;
        keyed.extend(group.into_iter().enumerate().map(|(i, s)| ((i as f64 + 0.5) / n, g.index(), s)));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|k| k.2).collect()
}

pub fn make_folds(
    manifest: &Manifest,
    scheme: FoldScheme,
    k: usize,
    val_policy: ValPolicy,
    seed: u64,
) -> Result<FoldPlan, DataError> {
    if k == 0 {
        return Err(DataError::Folds("k must be at least 1".into()));
    }
    let gender_of: HashMap<&str, Gender> = manifest.records.iter().map(|r| (r.speaker_id.as_str(), r.gender)).collect();
    // Each fold's test group, as a set of speakers or sessions.
    let groups: Vec<BTreeSet<String>> = match scheme {
        FoldScheme::SessionFold => {
            let mut sessions = BTreeSet::new();
            for r in &manifest.records {
                match &r.session_id {
                    Some(s) => {
                        sessions.insert(s.clone());
                    }
                    None => return Err(DataError::Folds(format!("record {:?} has no session_id", r.id))),
                }
            }
            if sessions.len() != k {
                return Err(DataError::Folds(format!(
                    "session-fold with k={k} needs exactly {k} sessions, found {}",
                    sessions.len()
                )));
            }
            sessions.into_iter().map(|s| BTreeSet::from([s])).collect()
        }
        FoldScheme::SpeakerFractionFold => {
            let speakers = manifest.speakers();
            if speakers.len() < k {
                return Err(DataError::Folds(format!(
                    "{k} folds need at least {k} speakers, found {}",
                    speakers.len()
                )));
            }
            let speakers = stratified_order(&speakers, &gender_of, &mut rng::stream(seed, streams::FOLDS));
            let n = speakers.len();
            (0..k)
                .map(|f| speakers[f * n / k..(f + 1) * n / k].iter().map(|s| s.to_string()).collect())
                .collect()
        }
    };
    let key = |r: &super::UtteranceRecord| -> String {
        match scheme {
            FoldScheme::SessionFold => r.session_id.clone().unwrap_or_default(),
            FoldScheme::SpeakerFractionFold => r.speaker_id.clone(),
        }
    };

    let mut folds = Vec::with_capacity(k);
    for (f, test_group) in groups.iter().enumerate() {
        let test: Vec<&super::UtteranceRecord> =
            manifest.records.iter().filter(|r| test_group.contains(&key(r))).collect();
        let test_speakers: HashSet<&str> = test.iter().map(|r| r.speaker_id.as_str()).collect();
        let rest: Vec<&super::UtteranceRecord> = manifest
            .records
            .iter()
            .filter(|r| !test_group.contains(&key(r)) && !test_speakers.contains(r.speaker_id.as_str()))
            .collect();

        let val_ids: HashSet<&str> = match val_policy {
            ValPolicy::OneSession => {
                if scheme != FoldScheme::SessionFold {
                    return Err(DataError::Folds("one-session validation requires session-fold".into()));
                }
                let val_session = groups[(f + 1) % k].iter().next().cloned().unwrap_or_default();
                rest.iter()
                    .filter(|r| r.session_id.as_deref() == Some(val_session.as_str()))
                    .map(|r| r.id.as_str())
                    .collect()
            }
            ValPolicy::Fraction => {
                let mut speakers: Vec<&str> = rest.iter().map(|r| r.speaker_id.as_str()).collect();
                speakers.sort_unstable();
                speakers.dedup();
                if speakers.len() < 2 {
                    return Err(DataError::Folds(format!(
                        "fold {f} leaves {} training speaker(s); need 2 to hold out validation",
                        speakers.len()
                    )));
                }
                let speakers = stratified_order(&speakers, &gender_of, &mut rng::stream(seed.wrapping_add(1 + f as u64), streams::FOLDS));
                let n_val = ((speakers.len() as f64 * VAL_SPEAKER_FRACTION).round() as usize).clamp(1, speakers.len() - 1);
                let chosen: HashSet<&str> = speakers[..n_val].iter().copied().collect();
                rest.iter()
                    .filter(|r| chosen.contains(r.speaker_id.as_str()))
                    .map(|r| r.id.as_str())
                    .collect()
            }
        };
        let val: Vec<String> = rest
            .iter()
            .filter(|r| val_ids.contains(r.id.as_str()))
            .map(|r| r.id.clone())
            .collect();
        let train: Vec<String> = rest
            .iter()
            .filter(|r| !val_ids.contains(r.id.as_str()))
            .map(|r| r.id.clone())
            .collect();
        if train.is_empty() || val.is_empty() {
            return Err(DataError::Folds(format!(
                "fold {f} would have {} training and {} validation utterances",
                train.len(),
                val.len()
            )));
        }
        folds.push(Fold {
            train,
            val,
            test: test.iter().map(|r| r.id.clone()).collect(),
        });
    }
    let plan = FoldPlan { folds };
    plan.validate(manifest)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Emotion, Gender, UtteranceRecord};
    use proptest::prelude::*;

    fn record(i: usize, speaker: &str, session: Option<&str>) -> UtteranceRecord {
        UtteranceRecord {
            id: format!("u{i:03}"),
            tensor_path: format!("u{i:03}.tsrb"),
            emotion: Emotion::ALL[i % 4],
            speaker_id: speaker.to_string(),
            gender: if i.is_multiple_of(2) { Gender::Female } else { Gender::Male },
            session_id: session.map(String::from),
            duration_s: 1.0,
        }
    }

    fn sessions_manifest(sessions: usize, per_session: usize) -> Manifest {
        let mut records = Vec::new();
        for s in 0..sessions {
            for j in 0..per_session {
                let speaker = format!("S{s}{}", if j % 2 == 0 { "F" } else { "M" });
                records.push(record(records.len(), &speaker, Some(&format!("Ses{s}"))));
            }
        }
        Manifest::new("m", records, ".")
    }

    fn speakers_manifest(speakers: usize, per_speaker: usize) -> Manifest {
        let mut records = Vec::new();
        for s in 0..speakers {
            for _ in 0..per_speaker {
                records.push(record(records.len(), &format!("spk{s}"), None));
            }
        }
        Manifest::new("m", records, ".")
    }

    #[test]
    fn speaker_folds_balance_gender() {
        let mut records = Vec::new();
        for s in 0..20 {
            for _ in 0..3 {
                let mut r = record(records.len(), &format!("spk{s:02}"), None);
                r.gender = if s < 10 { Gender::Female } else { Gender::Male };
                records.push(r);
            }
        }
        let m = Manifest::new("m", records, ".");
        for seed in 0..5 {
            let plan = make_folds(&m, FoldScheme::SpeakerFractionFold, 5, ValPolicy::Fraction, seed).unwrap();
            for fold in &plan.folds {
                let female: BTreeSet<&str> = fold
                    .test
                    .iter()
                    .map(|id| m.get(id).unwrap())
                    .filter(|r| r.gender == Gender::Female)
                    .map(|r| r.speaker_id.as_str())
                    .collect();
                assert_eq!(female.len(), 2);
                assert_eq!(fold.test.len(), 12);
            }
        }
    }

    #[test]
    fn five_session_folds() {
        let m = sessions_manifest(5, 6);
        let plan = make_folds(&m, FoldScheme::SessionFold, 5, ValPolicy::OneSession, 0).unwrap();
        assert_eq!(plan.folds.len(), 5);
        let session_of = |id: &String| m.get(id).unwrap().session_id.clone().unwrap();
        for (f, fold) in plan.folds.iter().enumerate() {
            let test: BTreeSet<_> = fold.test.iter().map(session_of).collect();
            let val: BTreeSet<_> = fold.val.iter().map(session_of).collect();
            assert_eq!(test.len(), 1);
            assert_eq!(val.len(), 1);
            assert_ne!(test, val);
            assert_eq!(fold.test.len(), 6);
            assert_eq!(fold.train.len(), 18, "fold {f}");
        }
    }

    #[test]
    fn ten_speakers_five_folds() {
        let m = speakers_manifest(10, 3);
        let plan = make_folds(&m, FoldScheme::SpeakerFractionFold, 5, ValPolicy::Fraction, 3).unwrap();
        let mut all = BTreeSet::new();
        for fold in &plan.folds {
            let speakers: BTreeSet<_> = fold.test.iter().map(|id| m.get(id).unwrap().speaker_id.clone()).collect();
            assert_eq!(speakers.len(), 2);
            for s in speakers {
                assert!(all.insert(s));
            }
            // 8 remaining speakers, 20% rounded to 2 for validation.
            assert_eq!(fold.val.len(), 6);
        }
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn single_session_is_impossible() {
        let m = sessions_manifest(1, 4);
        assert!(make_folds(&m, FoldScheme::SessionFold, 1, ValPolicy::OneSession, 0).is_err());
        let m = sessions_manifest(2, 4);
        assert!(make_folds(&m, FoldScheme::SessionFold, 2, ValPolicy::OneSession, 0).is_err());
    }

    #[test]
    fn rejects_missing_sessions_and_too_many_folds() {
        let m = speakers_manifest(3, 2);
        assert!(make_folds(&m, FoldScheme::SessionFold, 3, ValPolicy::OneSession, 0).is_err());
        assert!(make_folds(&m, FoldScheme::SpeakerFractionFold, 4, ValPolicy::Fraction, 0).is_err());
        let m = sessions_manifest(5, 2);
        assert!(make_folds(&m, FoldScheme::SessionFold, 4, ValPolicy::OneSession, 0).is_err());
        assert!(make_folds(&m, FoldScheme::SpeakerFractionFold, 5, ValPolicy::OneSession, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let m = speakers_manifest(12, 2);
        let a = make_folds(&m, FoldScheme::SpeakerFractionFold, 4, ValPolicy::Fraction, 9).unwrap();
        let b = make_folds(&m, FoldScheme::SpeakerFractionFold, 4, ValPolicy::Fraction, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validate_rejects_overlap_and_unknown_ids() {
        let m = speakers_manifest(6, 2);
        let mut plan = make_folds(&m, FoldScheme::SpeakerFractionFold, 3, ValPolicy::Fraction, 1).unwrap();
        let stolen = plan.folds[0].test[0].clone();
        plan.folds[1].test.push(stolen);
        assert!(plan.validate(&m).is_err());
        let mut plan = make_folds(&m, FoldScheme::SpeakerFractionFold, 3, ValPolicy::Fraction, 1).unwrap();
        plan.folds[0].train.push("ghost".into());
        assert!(plan.validate(&m).unwrap_err().to_string().contains("unknown id"));
    }

    #[test]
    fn sessions_sharing_a_speaker_keep_train_disjoint() {
        let mut m = sessions_manifest(4, 4);
        // The same speaker records in sessions 0 and 1.
        m.records[0].speaker_id = "shared".into();
        m.records[4].speaker_id = "shared".into();
        let plan = make_folds(&m, FoldScheme::SessionFold, 4, ValPolicy::OneSession, 0).unwrap();
        plan.validate(&m).unwrap();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn generated_plans_are_speaker_disjoint(
            speaker_of in proptest::collection::vec(0usize..15, 20..80),
            session_noise in proptest::collection::vec(0usize..8, 80),
            k in 2usize..5,
            use_sessions in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let records: Vec<UtteranceRecord> = speaker_of
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    // Mostly one session per speaker, occasionally a second.
                    let session = (s + usize::from(session_noise[i] == 0)) % k;
                    record(i, &format!("spk{s}"), Some(&format!("S{session}")))
                })
                .collect();
            let m = Manifest::new("p", records, ".");
            let plan = if use_sessions {
                make_folds(&m, FoldScheme::SessionFold, k, ValPolicy::Fraction, seed)
            } else {
                make_folds(&m, FoldScheme::SpeakerFractionFold, k, ValPolicy::Fraction, seed)
            };
            if let Ok(plan) = plan {
                let speaker = |id: &String| m.get(id).unwrap().speaker_id.clone();
                for fold in &plan.folds {
                    let test: HashSet<String> = fold.test.iter().map(speaker).collect();
                    prop_assert!(fold.train.iter().all(|id| !test.contains(&speaker(id))));
                }
                let mut covered: Vec<&String> = plan.folds.iter().flat_map(|f| &f.test).collect();
                covered.sort();
                covered.dedup();
                prop_assert_eq!(covered.len(), m.len());
            }
        }
    }
}
