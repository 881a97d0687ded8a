#include "remi/chords.hpp"

#include <algorithm>
#include <stdexcept>

namespace remi::chords {

const QualityRule& rule_for(Quality q) {
    // One row per chord quality; intervals in semitones above the root.
    static const std::array<QualityRule, 5> rules = {{
        {{0, 4}, {7}, {2, 5, 9}, {1, 3, 6, 8, 10}},          // major
        {{0, 3}, {7}, {2, 5, 8}, {1, 4, 6, 9, 11}},          // minor
        {{0, 3, 6}, {9}, {2, 5, 10}, {1, 4, 7, 8, 11}},      // diminished
        {{0, 4, 8}, {}, {2, 5, 9}, {1, 3, 6, 7, 10}},        // augmented
        {{0, 4, 7, 10}, {}, {2, 5, 9}, {1, 3, 6, 8, 11}},    // dominant
    }};
    return rules[static_cast<int>(q)];
}

Chroma segment_chroma(const grid::QuantizedScore& qs, int start_beat, int length_beats) {
    const int n_beats = qs.bar_count() * qs.grid.beats_per_bar;
    if (start_beat < 0 || length_beats <= 0 || start_beat + length_beats > n_beats)
        throw std::out_of_range("chord segment outside the piece");

    // Work in 32nd-note units shared by onsets and durations.
    const int units_per_beat = 8; // 32nd notes per quarter
    const int units_per_position = units_per_beat * qs.grid.beats_per_bar / qs.grid.positions_per_bar;
    const std::int64_t seg_begin = static_cast<std::int64_t>(start_beat) * units_per_beat;
    const std::int64_t seg_end = seg_begin + static_cast<std::int64_t>(length_beats) * units_per_beat;

    Chroma chroma{};
    for (const auto& n : qs.notes) {
        std::int64_t onset =
            (static_cast<std::int64_t>(n.bar) * qs.grid.positions_per_bar + n.position - 1) *
            units_per_position;
        std::int64_t offset = onset + n.duration_units;
        if (onset < seg_end && offset > seg_begin) chroma[n.pitch % 12] = true;
    }
    return chroma;
}

std::optional<int> score_candidate(const Chroma& chroma, int root, Quality quality) {
    if (root < 0 || root > 11) throw std::invalid_argument("root out of range");
    if (!chroma[root]) return std::nullopt;

    bool intervals[12] = {};
    for (int pc = 0; pc < 12; ++pc)
        if (chroma[pc]) intervals[((pc - root) % 12 + 12) % 12] = true;

    const QualityRule& rule = rule_for(quality);
    for (int i : rule.required)
        if (!intervals[i]) return std::nullopt;
    int score = 0;
    for (int i : rule.gain1)
        if (intervals[i]) score += 1;
    for (int i : rule.deduct1)
        if (intervals[i]) score -= 1;
    for (int i : rule.deduct2)
        if (intervals[i]) score -= 2;
    return score;
}

std::optional<Candidate> best_candidate(const Chroma& chroma) {
    std::optional<Candidate> best;
    for (int root = 0; root < 12; ++root) {
        for (Quality q : kQualities) {
            auto score = score_candidate(chroma, root, q);
            if (!score) continue;
            if (!best || *score > best->score) best = Candidate{{root, q}, *score};
        }
    }
    return best;
}

namespace {

struct Window {
    int start = 0;
    int length = 0;
    Candidate cand{};

    double per_beat() const { return double(cand.score) / length; }
};

// Primary key: score per beat; ties by raw score, longer window, earlier
// start, lower root, quality row order.
bool better(const Window& a, const Window& b) {
    auto key = [](const Window& w) {
        return std::tuple(w.per_beat(), w.cand.score, w.length, -w.start, -w.cand.label.root,
                          -static_cast<int>(w.cand.label.quality));
    };
    return key(a) > key(b);
}

void cover(const std::vector<Window>& windows, int lo, int hi,
           std::vector<ChordSegment>& out) {
    if (hi - lo < 2) return;
    const Window* best = nullptr;
    for (const auto& w : windows) {
        if (w.start < lo || w.start + w.length > hi) continue;
        if (!best || better(w, *best)) best = &w;
    }
    if (!best) return;
    cover(windows, lo, best->start, out);
    out.push_back({best->start, best->length, best->cand.label, best->cand.score});
    cover(windows, best->start + best->length, hi, out);
}

} // namespace

std::vector<ChordSegment> recognize_chords(const grid::QuantizedScore& qs) {
    grid::validate(qs);
    const int n_beats = qs.bar_count() * qs.grid.beats_per_bar;
    if (n_beats == 0) return {};

    std::vector<Window> windows;
    for (int length : {2, 4}) {
        for (int start = 0; start + length <= n_beats; ++start) {
            auto cand = best_candidate(segment_chroma(qs, start, length));
            if (cand) windows.push_back({start, length, *cand});
        }
    }

    std::vector<ChordSegment> labeled;
    cover(windows, 0, n_beats, labeled);

    // fill uncovered beats with none, then merge equal-label neighbors
    std::vector<ChordSegment> tiled;
    int cursor = 0;
    for (const auto& seg : labeled) {
        if (seg.start_beat > cursor) tiled.push_back({cursor, seg.start_beat - cursor, std::nullopt, 0});
        tiled.push_back(seg);
        cursor = seg.start_beat + seg.length_beats;
    }
    if (cursor < n_beats) tiled.push_back({cursor, n_beats - cursor, std::nullopt, 0});

    std::vector<ChordSegment> merged;
    for (const auto& seg : tiled) {
        if (!merged.empty() && merged.back().label == seg.label) {
            merged.back().length_beats += seg.length_beats;
            merged.back().score = std::max(merged.back().score, seg.score);
        } else {
            merged.push_back(seg);
        }
    }
    return merged;
}

} // namespace remi::chords
