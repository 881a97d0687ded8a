#pragma once

#include <vector>

#include "remi/tokens.hpp"

namespace remi::metrics {

/// Rhythm-consistency statistics of a REMI sequence, measured on the exact
/// symbolic timeline (not an audio beat tracker, so magnitudes are not
/// comparable with tracker-based numbers).
struct RhythmReport {
    double beat_std = 0.0;     // population std of per-beat durations, seconds
    double downbeat_std = 0.0; // population std of per-bar durations, seconds
    int n_beats = 0;
    int n_bars = 0;
    double grammar_violation_rate = 0.0; // fraction of tokens in a violation
    bool too_short = false;              // fewer than 3 beats: stds forced to 0
};

/// Start time of every beat, in seconds. Each beat lasts 60/bpm seconds
/// where bpm is the tempo in effect for that beat (class lower bound +
/// value; 120 before any tempo pair). Throws std::invalid_argument on an
/// ungrammatical sequence.
std::vector<double> beat_times(const tok::TokenSequence& seq);

/// Downbeat (bar start) times in seconds.
std::vector<double> downbeat_times(const tok::TokenSequence& seq);

/// Tolerates grammar violations: the violation rate is reported and the
/// timeline is walked leniently over whatever Bar/Position/Tempo structure
/// is present.
RhythmReport rhythm_report(const tok::TokenSequence& seq);

} // namespace remi::metrics
