#pragma once

#include <tuple>
#include <vector>

#include "remi/midi_io.hpp"

namespace remi::grid {

/// Bar subdivision. The reference configuration is 16 positions per 4/4 bar
/// (a 16th-note grid); durations are expressed in 32nd-note units.
struct GridConfig {
    int positions_per_bar = 16; // Q
    int beats_per_bar = 4;

    int positions_per_beat() const { return positions_per_bar / beats_per_bar; }

    bool operator==(const GridConfig&) const = default;
};

struct QuantizedNote {
    int bar = 0;            // >= 0
    int position = 1;       // 1..Q
    int pitch = 60;         // 0..127
    int velocity_bin = 16;  // 0..31
    int duration_units = 8; // 32nd-note multiples, 1..64

    bool operator==(const QuantizedNote&) const = default;
    auto key() const { return std::tuple(bar, position, pitch, velocity_bin, duration_units); }
};

/// A Performance snapped to the bar/position grid.
///
/// beat_tempi holds one integer-valued BPM per beat of the piece
/// (4 * bar count entries, each in [30,209]). Notes are sorted by
/// (bar, position, pitch, velocity_bin, duration_units).
struct QuantizedScore {
    GridConfig grid{};
    std::vector<QuantizedNote> notes;
    std::vector<double> beat_tempi;

    int bar_count() const { return static_cast<int>(beat_tempi.size()) / grid.beats_per_bar; }

    bool operator==(const QuantizedScore&) const = default;
};

enum class TempoClass { low, mid, high };

/// Tempo binning: BPM clamped to [30,209] and split into three equal classes
/// of 60 one-BPM values: low = [30,89], mid = [90,149], high = [150,209].
struct TempoBin {
    TempoClass cls = TempoClass::mid;
    int value = 30; // 0..59, offset from the class lower bound

    bool operator==(const TempoBin&) const = default;
};

constexpr int kMinBpm = 30;
constexpr int kMaxBpm = 209;
constexpr int kTempoValuesPerClass = 60;
constexpr int kVelocityBins = 32;
constexpr int kMaxDurationUnits = 64;

/// Snap note onsets to the nearest grid point (ties round toward the earlier
/// point), round durations to the nearest 32nd-note multiple clamped to
/// [1,64], and sample the tempo map at each beat start (clamped to [30,209]
/// and rounded to an integer BPM).
QuantizedScore quantize(const midi::Performance& perf, const GridConfig& grid = {});

TempoBin tempo_to_bins(double bpm); // throws std::invalid_argument if bpm <= 0
int bin_to_bpm(const TempoBin& bin);
int class_lower_bound(TempoClass cls);

int velocity_to_bin(int velocity);  // floor(v/4); throws if v outside [0,127]
int bin_to_velocity(int bin);       // bin midpoint 4b+2; throws if bin outside [0,31]

void validate(const QuantizedScore& qs);

} // namespace remi::grid
