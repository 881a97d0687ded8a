#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace remi::midi {

struct Note {
    int pitch = 60;            // MIDI note number, 0..127
    int velocity = 64;         // 1..127 (velocity-0 note-ons are note-offs)
    std::int64_t onset = 0;    // ticks, >= 0
    std::int64_t duration = 1; // ticks, >= 1

    bool operator==(const Note&) const = default;
};

struct TempoMarking {
    std::int64_t tick = 0;
    double bpm = 120.0; // quarter notes per minute, > 0

    bool operator==(const TempoMarking&) const = default;
};

struct TimeSignature {
    int numerator = 4;
    int denominator = 4;

    bool operator==(const TimeSignature&) const = default;
};

/// A parsed MIDI score: one merged piano track plus its tempo map.
///
/// Invariants: notes sorted by (onset, pitch); same-pitch note spans do not
/// overlap; tempo_map sorted by tick with the first marking at tick 0;
/// time signature fixed to 4/4.
struct Performance {
    int ticks_per_beat = 480;
    std::vector<Note> notes;
    std::vector<TempoMarking> tempo_map;
    TimeSignature time_signature{};

    bool operator==(const Performance&) const = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Parse a Standard MIDI File (format 0 or 1) into a Performance.
///
/// Note-On with velocity 0 is a Note-Off. A second Note-On on an already
/// sounding pitch closes the first note at the new onset. Note-Ons left open
/// at end of track are closed there. All tracks are merged into one note
/// list; channel and program information is discarded.
///
/// Throws ParseError (with byte offset) on malformed input, and on any time
/// signature other than 4/4.
Performance parse_smf(std::span<const std::uint8_t> bytes);

/// Serialize a Performance as a format-0 SMF. parse_smf(write_smf(p)) == p
/// for every Performance satisfying the invariants above.
std::vector<std::uint8_t> write_smf(const Performance& perf);

/// Tempo in effect at `tick` (last marking at or before it; 120 if none).
double bpm_at(const Performance& perf, std::int64_t tick);

/// Check the Performance invariants, throwing std::invalid_argument on the
/// first violation found.
void validate(const Performance& perf);

} // namespace remi::midi
