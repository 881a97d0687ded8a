#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "remi/midi_io.hpp"
#include "remi/timegrid.hpp"
#include "remi/tokens.hpp"

namespace remi::codec {

struct EncodeOptions {
    bool with_tempo = true;   // REMI: emit a tempo pair at every beat
    bool with_chord = false;  // REMI: emit recognized chord symbols
    int baseline_variant = 1; // MIDI-like: 1, 2 or 3
};

class DecodeError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Encode a QuantizedScore as a REMI sequence: one Bar token per bar; within
/// a bar, positions in order, each group (tempo pair, chord, note triple)
/// preceded by its own Position token; simultaneous notes in ascending pitch
/// order. The output always passes validate_grammar.
tok::TokenSequence encode_remi(const grid::QuantizedScore& qs, const EncodeOptions& opts);

/// Inverse of encode_remi up to Chord tokens (chords are re-derivable and
/// not stored). Beats without a tempo pair inherit the previous beat's
/// tempo; 120 BPM before the first pair. Throws DecodeError naming the first
/// grammar violation on ungrammatical input.
grid::QuantizedScore decode_remi(const tok::TokenSequence& seq);

/// MIDI-like baseline encodings.
///   v1: Note-Velocity/Note-On at onsets, Note-Off at offsets, Time-Shift
///       chains of 10 ms bins in between.
///   v2: Note-Off replaced by a Note Duration token in the note group.
///   v3: Time-Shift in 16th-note multiples on the quantized grid.
/// v1/v2 encode from the performance's millisecond timeline (the
/// QuantizedScore overloads render through the per-beat tempo map first).
tok::TokenSequence encode_midilike(const midi::Performance& perf, const EncodeOptions& opts);
tok::TokenSequence encode_midilike(const grid::QuantizedScore& qs, const EncodeOptions& opts);

struct MidiLikeDecodeResult {
    midi::Performance perf;
    std::vector<std::string> warnings; // e.g. dangling Note-On closed heuristically
};

/// Invert a MIDI-like encoding. v3 is exact on note content; v1/v2 are exact
/// up to one 10 ms bin per event boundary. A dangling v1 Note-On is closed
/// at the maximal note duration (64 32nd notes) with a warning.
MidiLikeDecodeResult decode_midilike(const tok::TokenSequence& seq);

/// Reconstruct tick-domain data at ticks_per_beat = 480 (grid step 120 ticks
/// for Q=16, duration unit 60 ticks), with one tempo marking per change in
/// the per-beat tempo list.
midi::Performance dequantize(const grid::QuantizedScore& qs);

} // namespace remi::codec
