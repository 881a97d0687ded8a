#include "remi/timegrid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace remi::grid {

namespace {

// Nearest integer to num/den (den > 0), exact halves rounding down.
std::int64_t div_round_ties_down(std::int64_t num, std::int64_t den) {
    std::int64_t q = num / den;
    std::int64_t rem = num % den;
    if (2 * rem > den) ++q;
    return q;
}

} // namespace

QuantizedScore quantize(const midi::Performance& perf, const GridConfig& grid) {
    midi::validate(perf);
    if (grid.positions_per_bar % grid.beats_per_bar != 0)
        throw std::invalid_argument("positions_per_bar must be divisible by beats_per_bar");

    QuantizedScore qs;
    qs.grid = grid;
    if (perf.notes.empty()) return qs;

    const std::int64_t tpb = perf.ticks_per_beat;
    const std::int64_t Q = grid.positions_per_bar;
    const std::int64_t ticks_per_bar_num = tpb * grid.beats_per_bar;

    int n_bars = 0;
    for (const auto& note : perf.notes) {
        // grid index = round(onset * Q / (beats_per_bar * tpb)), ties down
        std::int64_t idx = div_round_ties_down(note.onset * Q, ticks_per_bar_num);
        QuantizedNote qn;
        qn.bar = static_cast<int>(idx / Q);
        qn.position = static_cast<int>(idx % Q) + 1;
        qn.pitch = note.pitch;
        qn.velocity_bin = velocity_to_bin(note.velocity);
        // duration rounded to 32nd-note multiples (tpb/8 ticks each)
        std::int64_t units = div_round_ties_down(note.duration * 8, tpb);
        qn.duration_units = static_cast<int>(std::clamp<std::int64_t>(units, 1, kMaxDurationUnits));
        qs.notes.push_back(qn);
        n_bars = std::max(n_bars, qn.bar + 1);
    }
    std::sort(qs.notes.begin(), qs.notes.end(),
              [](const QuantizedNote& a, const QuantizedNote& b) { return a.key() < b.key(); });

    qs.beat_tempi.reserve(static_cast<std::size_t>(n_bars) * grid.beats_per_bar);
    for (int beat = 0; beat < n_bars * grid.beats_per_bar; ++beat) {
        double bpm = midi::bpm_at(perf, static_cast<std::int64_t>(beat) * tpb);
        bpm = std::clamp(bpm, double(kMinBpm), double(kMaxBpm));
        qs.beat_tempi.push_back(static_cast<double>(std::llround(bpm)));
    }
    return qs;
}

TempoBin tempo_to_bins(double bpm) {
    if (!(bpm > 0)) throw std::invalid_argument("bpm must be positive");
    long clamped = std::llround(std::clamp(bpm, double(kMinBpm), double(kMaxBpm)));
    clamped = std::clamp<long>(clamped, kMinBpm, kMaxBpm);
    TempoBin bin;
    if (clamped < kMinBpm + kTempoValuesPerClass)
        bin.cls = TempoClass::low;
    else if (clamped < kMinBpm + 2 * kTempoValuesPerClass)
        bin.cls = TempoClass::mid;
    else
        bin.cls = TempoClass::high;
    bin.value = static_cast<int>(clamped - class_lower_bound(bin.cls));
    return bin;
}

int class_lower_bound(TempoClass cls) {
    switch (cls) {
    case TempoClass::low: return kMinBpm;
    case TempoClass::mid: return kMinBpm + kTempoValuesPerClass;
    case TempoClass::high: return kMinBpm + 2 * kTempoValuesPerClass;
    }
    throw std::invalid_argument("bad tempo class");
}

int bin_to_bpm(const TempoBin& bin) {
    if (bin.value < 0 || bin.value >= kTempoValuesPerClass)
        throw std::invalid_argument("tempo value out of range");
    return class_lower_bound(bin.cls) + bin.value;
}

int velocity_to_bin(int velocity) {
    if (velocity < 0 || velocity > 127) throw std::invalid_argument("velocity out of range");
    return velocity / 4;
}

int bin_to_velocity(int bin) {
    if (bin < 0 || bin >= kVelocityBins) throw std::invalid_argument("velocity bin out of range");
    return std::min(4 * bin + 2, 127);
}

void validate(const QuantizedScore& qs) {
    if (qs.grid.positions_per_bar % qs.grid.beats_per_bar != 0)
        throw std::invalid_argument("positions_per_bar must be divisible by beats_per_bar");
    if (qs.beat_tempi.size() % static_cast<std::size_t>(qs.grid.beats_per_bar) != 0)
        throw std::invalid_argument("beat_tempi length must be a whole number of bars");
    const int n_bars = qs.bar_count();
    const QuantizedNote* prev = nullptr;
    for (const auto& n : qs.notes) {
        if (n.bar < 0 || n.bar >= n_bars) throw std::invalid_argument("note bar out of range");
        if (n.position < 1 || n.position > qs.grid.positions_per_bar)
            throw std::invalid_argument("note position out of range");
        if (n.pitch < 0 || n.pitch > 127) throw std::invalid_argument("pitch out of range");
        if (n.velocity_bin < 0 || n.velocity_bin >= kVelocityBins)
            throw std::invalid_argument("velocity bin out of range");
        if (n.duration_units < 1 || n.duration_units > kMaxDurationUnits)
            throw std::invalid_argument("duration units out of range");
        if (prev && prev->key() > n.key())
            throw std::invalid_argument("notes not sorted by (bar, position, pitch)");
        prev = &n;
    }
    for (double bpm : qs.beat_tempi) {
        if (bpm < kMinBpm || bpm > kMaxBpm || bpm != std::floor(bpm))
            throw std::invalid_argument("beat tempo must be an integer BPM in [30,209]");
    }
}

} // namespace remi::grid
