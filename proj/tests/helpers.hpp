#pragma once

// Shared generators for randomized tests. Everything is deterministic given
// the caller's RNG state.

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

#include "remi/codec.hpp"
#include "remi/midi_io.hpp"
#include "remi/timegrid.hpp"
#include "remi/tokens.hpp"

namespace testutil {

using Rng = std::mt19937_64;

inline int randint(Rng& rng, int lo, int hi) { // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// A Performance that satisfies every invariant and survives an SMF round
// trip exactly: bpm values are chosen as 60e6 / microseconds so the tempo
// meta event is lossless, and same-pitch notes never overlap.
inline remi::midi::Performance random_performance(Rng& rng) {
    remi::midi::Performance perf;
    perf.ticks_per_beat = std::array{96, 240, 480, 960}[randint(rng, 0, 3)];

    int n_tempi = randint(rng, 1, 4);
    std::int64_t tick = 0;
    for (int i = 0; i < n_tempi; ++i) {
        long us = randint(rng, 300000, 2000000);
        perf.tempo_map.push_back({tick, 60000000.0 / us});
        tick += randint(rng, 1, 4000);
    }

    int n_notes = randint(rng, 0, 30);
    std::int64_t last_end[128] = {};
    for (int i = 0; i < n_notes; ++i) {
        remi::midi::Note note;
        note.pitch = randint(rng, 21, 108);
        note.velocity = randint(rng, 1, 127);
        note.onset = last_end[note.pitch] + randint(rng, 0, 1500);
        note.duration = randint(rng, 1, 2 * perf.ticks_per_beat);
        last_end[note.pitch] = note.onset + note.duration;
        perf.notes.push_back(note);
    }
    std::sort(perf.notes.begin(), perf.notes.end(), [](const auto& a, const auto& b) {
        return std::tie(a.onset, a.pitch, a.duration, a.velocity) <
               std::tie(b.onset, b.pitch, b.duration, b.velocity);
    });
    return perf;
}

// A QuantizedScore that satisfies the grid invariants; the last bar always
// contains a note so the bar count is recoverable from the note list. With
// no_overlap, same-pitch notes never overlap in 32nd-note units (required
// for exact dequantize round trips).
inline remi::grid::QuantizedScore random_quantized_score(Rng& rng, bool no_overlap = false) {
    remi::grid::QuantizedScore qs;
    int bars = randint(rng, 1, 4);
    for (int beat = 0; beat < bars * qs.grid.beats_per_bar; ++beat)
        qs.beat_tempi.push_back(randint(rng, 30, 209));

    const int units_per_position = 8 * qs.grid.beats_per_bar / qs.grid.positions_per_bar;
    const int total_positions = bars * qs.grid.positions_per_bar;
    std::vector<long> last_end(128, 0); // in 32nd units
    int n_notes = randint(rng, 1, 24);
    for (int i = 0; i < n_notes; ++i) {
        remi::grid::QuantizedNote n;
        n.pitch = randint(rng, 21, 108);
        int pos_index = i + 1 == n_notes
                            ? randint(rng, (bars - 1) * qs.grid.positions_per_bar,
                                      total_positions - 1) // pin the last bar
                            : randint(rng, 0, total_positions - 1);
        long onset = long(pos_index) * units_per_position;
        if (no_overlap && onset < last_end[n.pitch]) {
            long snapped = (last_end[n.pitch] + units_per_position - 1) / units_per_position;
            pos_index = static_cast<int>(snapped);
            if (pos_index >= total_positions) continue;
            if (i + 1 == n_notes && pos_index < (bars - 1) * qs.grid.positions_per_bar)
                pos_index = (bars - 1) * qs.grid.positions_per_bar;
            onset = long(pos_index) * units_per_position;
            if (onset < last_end[n.pitch]) continue;
        }
        n.bar = pos_index / qs.grid.positions_per_bar;
        n.position = pos_index % qs.grid.positions_per_bar + 1;
        n.velocity_bin = randint(rng, 0, 31);
        n.duration_units = randint(rng, 1, 64);
        last_end[n.pitch] = onset + n.duration_units;
        qs.notes.push_back(n);
    }
    bool last_bar_used = std::any_of(qs.notes.begin(), qs.notes.end(),
                                     [&](const auto& n) { return n.bar == bars - 1; });
    if (!last_bar_used) {
        remi::grid::QuantizedNote n;
        n.bar = bars - 1;
        n.position = qs.grid.positions_per_bar; // last slot: always free of overlaps from the left
        n.velocity_bin = 16;
        n.duration_units = 8;
        long onset = long(total_positions - 1) * units_per_position;
        n.pitch = 60;
        while (no_overlap && last_end[n.pitch] > onset) ++n.pitch; // some pitch is always free
        qs.notes.push_back(n);
    }
    std::sort(qs.notes.begin(), qs.notes.end(),
              [](const auto& a, const auto& b) { return a.key() < b.key(); });
    return qs;
}

// Random binary chroma with a configurable expected density.
inline std::array<bool, 12> random_chroma(Rng& rng, int active_percent = 35) {
    std::array<bool, 12> chroma{};
    for (auto& on : chroma) on = randint(rng, 0, 99) < active_percent;
    return chroma;
}

// Two small deterministic pieces with expressive (non-constant) per-beat
// tempo, used for overfitting and metric-ordering tests.
inline std::vector<remi::grid::QuantizedScore> toy_scores() {
    std::vector<remi::grid::QuantizedScore> scores;
    for (int piece = 0; piece < 2; ++piece) {
        remi::grid::QuantizedScore qs;
        const int bars = 6;
        for (int beat = 0; beat < bars * 4; ++beat) {
            int wave = (beat * (7 + piece * 5)) % 40; // deterministic rubato
            qs.beat_tempi.push_back(100 + piece * 20 + wave);
        }
        const int scale[7] = {0, 2, 4, 5, 7, 9, 11};
        for (int bar = 0; bar < bars; ++bar) {
            for (int step = 0; step < 4; ++step) {
                remi::grid::QuantizedNote n;
                n.bar = bar;
                n.position = 1 + step * 4;
                n.pitch = 48 + scale[(bar * 3 + step * 2 + piece) % 7] + 12 * (step % 2);
                n.velocity_bin = 12 + (bar + step + piece) % 8;
                n.duration_units = step % 2 == 0 ? 8 : 4;
                qs.notes.push_back(n);
                if (step == 0) { // a fifth under the downbeat
                    remi::grid::QuantizedNote bass = n;
                    bass.pitch = n.pitch - 5;
                    bass.duration_units = 16;
                    qs.notes.push_back(bass);
                }
            }
        }
        std::sort(qs.notes.begin(), qs.notes.end(),
                  [](const auto& a, const auto& b) { return a.key() < b.key(); });
        scores.push_back(std::move(qs));
    }
    return scores;
}

inline std::vector<remi::tok::TokenSequence> toy_corpus(bool with_tempo = true) {
    remi::codec::EncodeOptions opts;
    opts.with_tempo = with_tempo;
    std::vector<remi::tok::TokenSequence> corpus;
    for (const auto& qs : toy_scores()) corpus.push_back(remi::codec::encode_remi(qs, opts));
    return corpus;
}

} // namespace testutil
