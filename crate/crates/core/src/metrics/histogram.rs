//! Distribution similarities: histogram intersection over pitches and
//! durations, scaled to a percentage.

use super::MetricError;
use crate::score::{SongRecord, MAX_DURATION_TICKS};

/// Count-normalized pitch histogram over MIDI 0–127.
pub fn pitch_histogram(song: &SongRecord) -> Result<Vec<f64>, MetricError> {
    histogram(song, 128, |pitch, _| pitch as usize)
}

/// Count-normalized duration histogram over 1–128 ticks (index = ticks − 1).
/// Durations beyond the representable maximum share the last bin.
pub fn duration_histogram(song: &SongRecord) -> Result<Vec<f64>, MetricError> {
    histogram(song, MAX_DURATION_TICKS as usize, |_, duration| {
        (duration as usize).clamp(1, MAX_DURATION_TICKS as usize) - 1
    })
}

fn histogram(
    song: &SongRecord,
    bins: usize,
    bin_of: impl Fn(u8, u32) -> usize,
) -> Result<Vec<f64>, MetricError> {
    let mut counts = vec![0u64; bins];
    let mut total = 0u64;
    for sentence in &song.sentences {
        for note in &sentence.notes {
            counts[bin_of(note.pitch, note.duration)] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(MetricError::EmptySong(song.id.clone()));
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

fn intersection_percent(a: &[f64], b: &[f64]) -> f64 {
    100.0 * a.iter().zip(b).map(|(x, y)| x.min(*y)).sum::<f64>()
}

/// Histogram intersection of the two songs' pitch distributions, in percent.
/// 100 means identical distributions, 0 means disjoint pitch sets.
pub fn pitch_distribution_similarity(a: &SongRecord, b: &SongRecord) -> Result<f64, MetricError> {
    Ok(intersection_percent(&pitch_histogram(a)?, &pitch_histogram(b)?))
}

/// Histogram intersection of the two songs' duration distributions, in percent.
pub fn duration_distribution_similarity(a: &SongRecord, b: &SongRecord) -> Result<f64, MetricError> {
    Ok(intersection_percent(&duration_histogram(a)?, &duration_histogram(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{Note, SentenceRecord, SongRecord, Syllable, WordSpan};

    /// One-sentence song with the given (pitch, duration) notes at 1-tick spacing.
    fn song(id: &str, notes: &[(u8, u32)]) -> SongRecord {
        let mut onset = 0;
        let placed: Vec<Note> = notes
            .iter()
            .map(|&(p, d)| {
                let n = Note::new(onset, d, p);
                onset += d;
                n
            })
            .collect();
        let syllables = (0..notes.len())
            .map(|i| Syllable { text: "la".into(), tone: 0, note_indices: vec![i] })
            .collect();
        SongRecord {
            id: id.into(),
            key: 0,
            emotion: 0,
            bpm: 120.0,
            sentences: vec![SentenceRecord {
                structure: 0,
                syllables,
                words: vec![WordSpan { start: 0, end: notes.len() - 1, pos: 0 }],
                notes: placed,
            }],
        }
    }

    #[test]
    fn identical_songs_score_one_hundred() {
        let a = song("a", &[(60, 4), (62, 8), (64, 2)]);
        assert_eq!(pitch_distribution_similarity(&a, &a).unwrap(), 100.0);
        assert_eq!(duration_distribution_similarity(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn disjoint_songs_score_zero() {
        let a = song("a", &[(60, 4), (62, 4)]);
        let b = song("b", &[(70, 8), (72, 16)]);
        assert_eq!(pitch_distribution_similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(duration_distribution_similarity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn mixed_overlap_matches_the_hand_computation() {
        // a: half the mass on 60, half on 61 → [.5, .5, 0]
        // b: quarter on 60, quarter on 61, half on 62 → [.25, .25, .5]
        // intersection = .25 + .25 + 0 = .5 → 50%
        let a = song("a", &[(60, 1), (60, 1), (61, 1), (61, 1)]);
        let b = song("b", &[(60, 1), (61, 1), (62, 1), (62, 1)]);
        assert!((pitch_distribution_similarity(&a, &b).unwrap() - 50.0).abs() < 1e-12);

        // same shape on durations: a = {1,1,2,2}, b = {1,2,4,4}
        let a = song("a", &[(60, 1), (60, 1), (60, 2), (60, 2)]);
        let b = song("b", &[(60, 1), (60, 2), (60, 4), (60, 4)]);
        assert!((duration_distribution_similarity(&a, &b).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_symmetric() {
        let a = song("a", &[(60, 1), (64, 2), (67, 4), (60, 1)]);
        let b = song("b", &[(60, 2), (62, 2), (67, 1)]);
        assert_eq!(
            pitch_distribution_similarity(&a, &b).unwrap(),
            pitch_distribution_similarity(&b, &a).unwrap()
        );
        assert_eq!(
            duration_distribution_similarity(&a, &b).unwrap(),
            duration_distribution_similarity(&b, &a).unwrap()
        );
    }

    #[test]
    fn empty_song_is_reported_by_id() {
        let mut a = song("hollow", &[(60, 1)]);
        a.sentences[0].notes.clear();
        match pitch_distribution_similarity(&a, &a) {
            Err(MetricError::EmptySong(id)) => assert_eq!(id, "hollow"),
            other => panic!("expected EmptySong, got {other:?}"),
        }
    }
}
