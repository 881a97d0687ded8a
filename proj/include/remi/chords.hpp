#pragma once

#include <array>
#include <optional>
#include <vector>

#include "remi/chord_types.hpp"
#include "remi/timegrid.hpp"

namespace remi::chords {

/// Binary pitch-class activations, index 0 = C.
using Chroma = std::array<bool, 12>;

/// Interval scoring rule for one chord quality (intervals in semitones mod
/// 12 above the candidate root).
struct QualityRule {
    std::vector<int> required;
    std::vector<int> gain1;
    std::vector<int> deduct1;
    std::vector<int> deduct2;
};

const QualityRule& rule_for(Quality q);

struct ChordSegment {
    int start_beat = 0;
    int length_beats = 0;
    std::optional<ChordLabel> label; // nullopt = no chord
    int score = 0;                   // raw score of the winning candidate

    bool operator==(const ChordSegment&) const = default;
};

/// Pitch classes sounding anywhere in the beat range
/// [start_beat, start_beat + length_beats); a note counts if its
/// onset-to-offset span intersects the segment. Throws std::out_of_range for
/// segments outside the piece.
Chroma segment_chroma(const grid::QuantizedScore& qs, int start_beat, int length_beats);

/// Interval score of (root, quality) against a chroma: rejected (nullopt)
/// unless the root is active and the required intervals are all present;
/// otherwise +1 per gain interval, -1 / -2 per deduct interval present.
std::optional<int> score_candidate(const Chroma& chroma, int root, Quality quality);

/// Best (root, quality) for one chroma, scanning active roots and qualities
/// in table row order; ties go to the lower root, then the earlier row.
struct Candidate {
    ChordLabel label{};
    int score = 0;
};
std::optional<Candidate> best_candidate(const Chroma& chroma);

/// Slide 2- and 4-beat windows over the piece, compare windows by score per
/// beat, recursively fix the globally best window and recurse on the
/// uncovered regions. Uncovered beats get a label of none; adjacent segments
/// with equal labels merge. The result tiles [0, beat count) exactly.
std::vector<ChordSegment> recognize_chords(const grid::QuantizedScore& qs);

} // namespace remi::chords
