//! Melody distance: dynamic time warping over mean-centered per-tick pitch
//! series, normalized by the alignment path length.

use super::MetricError;
use crate::score::SongRecord;

/// Expands a song to one pitch value per tick across its sounding span
/// (first onset to last offset). During a gap between notes the previous
/// pitch is held, so rests do not read as pitch jumps.
pub fn pitch_series(song: &SongRecord) -> Result<Vec<f64>, MetricError> {
    let mut notes: Vec<(u32, u32, u8)> = song
        .sentences
        .iter()
        .flat_map(|s| s.notes.iter().map(|n| (n.onset, n.duration, n.pitch)))
        .collect();
    if notes.is_empty() {
        return Err(MetricError::EmptySong(song.id.clone()));
    }
    notes.sort_unstable();
    let start = notes[0].0;
    let end = notes.iter().map(|&(o, d, _)| o + d).max().unwrap();
    let mut series = Vec::with_capacity((end - start) as usize);
    let mut idx = 0;
    for t in start..end {
        while idx + 1 < notes.len() && notes[idx + 1].0 <= t {
            idx += 1;
        }
        series.push(notes[idx].2 as f64);
    }
    Ok(series)
}

fn mean_center(series: &mut [f64]) {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    for x in series.iter_mut() {
        *x -= mean;
    }
}

/// DTW with absolute-difference local cost, total cost divided by the number
/// of cells on the optimal alignment path. Ties during backtracking prefer
/// the diagonal, then the `a`-advance, then the `b`-advance predecessor.
pub fn dtw_mean_cost(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "dtw: empty series");
    let (n, m) = (a.len(), b.len());
    let mut d = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let cost = (a[i] - b[j]).abs();
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => d[at(0, j - 1)],
                (_, 0) => d[at(i - 1, 0)],
                _ => d[at(i - 1, j - 1)].min(d[at(i - 1, j)]).min(d[at(i, j - 1)]),
            };
            d[at(i, j)] = cost + best;
        }
    }

    let (mut i, mut j) = (n - 1, m - 1);
    let mut path_len = 1usize;
    while i > 0 || j > 0 {
        let (pi, pj) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = d[at(i - 1, j - 1)];
            let up = d[at(i - 1, j)];
            let left = d[at(i, j - 1)];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        i = pi;
        j = pj;
        path_len += 1;
    }
    d[at(n - 1, m - 1)] / path_len as f64
}

/// Melody distance between two songs: per-tick pitch series, each centered on
/// its own mean pitch (so a global transposition costs nothing), aligned by
/// DTW and averaged over the alignment path.
pub fn melody_distance(a: &SongRecord, b: &SongRecord) -> Result<f64, MetricError> {
    let mut sa = pitch_series(a)?;
    let mut sb = pitch_series(b)?;
    mean_center(&mut sa);
    mean_center(&mut sb);
    Ok(dtw_mean_cost(&sa, &sb))
}
