#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "remi/chord_types.hpp"
#include "remi/timegrid.hpp"

namespace remi::tok {

enum class Repr { remi, midilike_v1, midilike_v2, midilike_v3 };

std::string repr_name(Repr repr);
Repr parse_repr(const std::string& name); // throws std::invalid_argument

// Token payloads. REMI uses Bar, Position, TempoClassTok, TempoValue, Chord,
// NoteVelocity, NoteOn, NoteDuration. The MIDI-like variants use NoteOn,
// NoteOff (v1), NoteDuration (v2/v3), TimeShiftMs (v1/v2), TimeShiftGrid
// (v3) and NoteVelocity.
struct Bar {
    bool operator==(const Bar&) const = default;
};
struct Position {
    int p = 1; // 1..Q
    bool operator==(const Position&) const = default;
};
struct TempoClassTok {
    grid::TempoClass cls = grid::TempoClass::mid;
    bool operator==(const TempoClassTok&) const = default;
};
struct TempoValue {
    int v = 0; // 0..59
    bool operator==(const TempoValue&) const = default;
};
struct Chord {
    chords::ChordLabel label{};
    bool operator==(const Chord&) const = default;
};
struct NoteVelocity {
    int bin = 16; // 0..31
    bool operator==(const NoteVelocity&) const = default;
};
struct NoteOn {
    int pitch = 60; // 0..127
    bool operator==(const NoteOn&) const = default;
};
struct NoteDuration {
    int units = 8; // 1..64, 32nd-note multiples
    bool operator==(const NoteDuration&) const = default;
};
struct NoteOff {
    int pitch = 60; // 0..127
    bool operator==(const NoteOff&) const = default;
};
struct TimeShiftMs {
    int k = 1; // 1..100, meaning 10*k milliseconds
    bool operator==(const TimeShiftMs&) const = default;
};
struct TimeShiftGrid {
    int k = 1; // 1..16, meaning k 16th notes
    bool operator==(const TimeShiftGrid&) const = default;
};

using Token = std::variant<Bar, Position, TempoClassTok, TempoValue, Chord,
                           NoteVelocity, NoteOn, NoteDuration, NoteOff,
                           TimeShiftMs, TimeShiftGrid>;

/// Token kind, used for grammar checks, masking specs and per-type loss
/// reporting.
enum class Kind {
    bar,
    position,
    tempo_class,
    tempo_value,
    chord,
    note_velocity,
    note_on,
    note_duration,
    note_off,
    time_shift_ms,
    time_shift_grid,
};

Kind kind_of(const Token& token);
std::string kind_name(Kind kind);

/// Closed vocabulary of one representation, mapping tokens to stable integer
/// indices and back.
///
/// REMI index layout (364 tokens):
///   0         Bar
///   1..16     Position 1..16
///   17..19    Tempo Class low, mid, high
///   20..79    Tempo Value 0..59
///   80..139   Chord, index 80 + 5*root + quality (Table-2 row order)
///   140..171  Note Velocity 0..31
///   172..299  Note-On 0..127
///   300..363  Note Duration 1..64
///
/// MIDI-like layouts (per variant): Note-On 0..127, then Note-Off 0..127
/// (v1) or Note Duration 1..64 (v2/v3), then Time-Shift 1..100 in 10 ms
/// steps (v1/v2) or 1..16 in 16th notes (v3), then Note Velocity 0..31.
class Vocabulary {
public:
    explicit Vocabulary(Repr repr);

    Repr repr() const { return repr_; }
    int size() const { return static_cast<int>(tokens_.size()); }

    int index_of(const Token& token) const; // throws std::invalid_argument
    const Token& token_of(int index) const; // throws std::invalid_argument
    Kind kind_of_index(int index) const;

    std::string mnemonic(const Token& token) const;
    Token parse_mnemonic(const std::string& text) const;

private:
    Repr repr_;
    std::vector<Token> tokens_;
};

const Vocabulary& vocabulary(Repr repr); // shared per-representation instance

struct TokenSequence {
    Repr repr = Repr::remi;
    std::vector<int> ids;

    bool operator==(const TokenSequence&) const = default;
};

struct Violation {
    std::size_t position = 0; // index of the offending token
    std::string rule;         // "G1".."G5"
    std::string description;
};

/// Check a REMI sequence against the grammar:
///   G1  the sequence starts with Bar
///   G2  Position indices are non-decreasing within a bar
///   G3  Tempo Class and Tempo Value appear as an adjacent pair
///   G4  every group (tempo pair, Chord, or the Note Velocity / Note-On /
///       Note Duration triple in that order) directly follows a Position
///   G5  no group is left incomplete
/// Empty violation list <=> grammatical. Throws std::invalid_argument for a
/// non-REMI sequence.
std::vector<Violation> validate_grammar(const TokenSequence& seq);

/// Line-oriented text format: a header line `#tokens v1 <repr>` followed by
/// one mnemonic per line (`Bar`, `Position_9/16`, `Chord_C_maj`,
/// `Tempo-Class_mid`, `Tempo-Value_30`, `Note-Velocity_16`, `Note-On_60`,
/// `Note-Duration_8`, and for the MIDI-like variants `Note-Off_60`,
/// `Time-Shift-Ms_50`, `Time-Shift-Grid_4`).
void write_tokens(std::ostream& out, const TokenSequence& seq);
TokenSequence read_tokens(std::istream& in); // throws std::runtime_error

} // namespace remi::tok
