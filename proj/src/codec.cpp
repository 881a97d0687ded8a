#include "remi/codec.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include "remi/chords.hpp"

namespace remi::codec {

namespace {

constexpr int kTicksPerBeat = 480;
constexpr int kTicksPerUnit = kTicksPerBeat / 8; // one 32nd note
constexpr double kDefaultBpm = 120.0;
constexpr double kMsPerBin = 10.0;

struct Emitter {
    tok::TokenSequence seq;
    const tok::Vocabulary& vocab;

    explicit Emitter(tok::Repr repr) : vocab(tok::vocabulary(repr)) { seq.repr = repr; }

    void push(const tok::Token& token) { seq.ids.push_back(vocab.index_of(token)); }
};

// Milliseconds from tick 0 to `tick` under the performance tempo map.
double tick_to_ms(const midi::Performance& perf, std::int64_t tick) {
    double ms = 0.0;
    std::int64_t prev_tick = 0;
    double bpm = kDefaultBpm;
    for (const auto& m : perf.tempo_map) {
        if (m.tick >= tick) break;
        ms += double(m.tick - prev_tick) / perf.ticks_per_beat * (60000.0 / bpm);
        prev_tick = m.tick;
        bpm = m.bpm;
    }
    ms += double(tick - prev_tick) / perf.ticks_per_beat * (60000.0 / bpm);
    return ms;
}

void emit_time_shift_ms(Emitter& out, std::int64_t bins) {
    while (bins > 0) {
        int k = static_cast<int>(std::min<std::int64_t>(bins, 100));
        out.push(tok::TimeShiftMs{k});
        bins -= k;
    }
}

void emit_time_shift_grid(Emitter& out, std::int64_t steps) {
    while (steps > 0) {
        int k = static_cast<int>(std::min<std::int64_t>(steps, 16));
        out.push(tok::TimeShiftGrid{k});
        steps -= k;
    }
}

int duration_to_units(std::int64_t duration_ticks, int ticks_per_beat) {
    std::int64_t num = duration_ticks * 8;
    std::int64_t units = num / ticks_per_beat;
    if (2 * (num % ticks_per_beat) > ticks_per_beat) ++units;
    return static_cast<int>(std::clamp<std::int64_t>(units, 1, grid::kMaxDurationUnits));
}

} // namespace

tok::TokenSequence encode_remi(const grid::QuantizedScore& qs, const EncodeOptions& opts) {
    grid::validate(qs);
    Emitter out(tok::Repr::remi);

    const int beats_per_bar = qs.grid.beats_per_bar;
    const int positions_per_beat = qs.grid.positions_per_beat();
    const int n_bars = qs.bar_count();

    // chord segment starts, keyed by (bar, position)
    std::map<std::pair<int, int>, chords::ChordLabel> chord_starts;
    if (opts.with_chord) {
        for (const auto& seg : chords::recognize_chords(qs)) {
            if (!seg.label) continue;
            int bar = seg.start_beat / beats_per_bar;
            int pos = (seg.start_beat % beats_per_bar) * positions_per_beat + 1;
            chord_starts[{bar, pos}] = *seg.label;
        }
    }

    std::size_t next_note = 0;
    for (int bar = 0; bar < n_bars; ++bar) {
        out.push(tok::Bar{});
        for (int pos = 1; pos <= qs.grid.positions_per_bar; ++pos) {
            if (opts.with_tempo && (pos - 1) % positions_per_beat == 0) {
                int beat = bar * beats_per_bar + (pos - 1) / positions_per_beat;
                auto bin = grid::tempo_to_bins(qs.beat_tempi[static_cast<std::size_t>(beat)]);
                out.push(tok::Position{pos});
                out.push(tok::TempoClassTok{bin.cls});
                out.push(tok::TempoValue{bin.value});
            }
            if (auto it = chord_starts.find({bar, pos}); it != chord_starts.end()) {
                out.push(tok::Position{pos});
                out.push(tok::Chord{it->second});
            }
            while (next_note < qs.notes.size() && qs.notes[next_note].bar == bar &&
                   qs.notes[next_note].position == pos) {
                const auto& n = qs.notes[next_note++];
                out.push(tok::Position{pos});
                out.push(tok::NoteVelocity{n.velocity_bin});
                out.push(tok::NoteOn{n.pitch});
                out.push(tok::NoteDuration{n.duration_units});
            }
        }
    }
    return out.seq;
}

grid::QuantizedScore decode_remi(const tok::TokenSequence& seq) {
    auto violations = tok::validate_grammar(seq);
    if (!violations.empty()) {
        const auto& v = violations.front();
        throw DecodeError("ungrammatical sequence: " + v.rule + " at token " +
                          std::to_string(v.position) + ": " + v.description);
    }
    const auto& vocab = tok::vocabulary(tok::Repr::remi);

    grid::QuantizedScore qs;
    const int beats_per_bar = qs.grid.beats_per_bar;
    const int positions_per_beat = qs.grid.positions_per_beat();

    int bar = -1;
    int position = 1;
    std::map<int, int> tempo_at_beat;
    int pending_velocity = 0, pending_pitch = 0;
    std::optional<grid::TempoClass> pending_class;

    for (int id : seq.ids) {
        const tok::Token& token = vocab.token_of(id);
        switch (tok::kind_of(token)) {
        case tok::Kind::bar:
            ++bar;
            position = 1;
            break;
        case tok::Kind::position:
            position = std::get<tok::Position>(token).p;
            break;
        case tok::Kind::tempo_class:
            pending_class = std::get<tok::TempoClassTok>(token).cls;
            break;
        case tok::Kind::tempo_value: {
            int beat = bar * beats_per_bar + (position - 1) / positions_per_beat;
            tempo_at_beat[beat] =
                grid::bin_to_bpm({*pending_class, std::get<tok::TempoValue>(token).v});
            pending_class.reset();
            break;
        }
        case tok::Kind::chord:
            break; // chords are symbols only, re-derivable from the notes
        case tok::Kind::note_velocity:
            pending_velocity = std::get<tok::NoteVelocity>(token).bin;
            break;
        case tok::Kind::note_on:
            pending_pitch = std::get<tok::NoteOn>(token).pitch;
            break;
        case tok::Kind::note_duration:
            qs.notes.push_back({bar, position, pending_pitch, pending_velocity,
                                std::get<tok::NoteDuration>(token).units});
            break;
        default:
            break;
        }
    }

    const int n_bars = bar + 1;
    double bpm = kDefaultBpm;
    for (int beat = 0; beat < n_bars * beats_per_bar; ++beat) {
        if (auto it = tempo_at_beat.find(beat); it != tempo_at_beat.end()) bpm = it->second;
        qs.beat_tempi.push_back(bpm);
    }
    std::sort(qs.notes.begin(), qs.notes.end(),
              [](const grid::QuantizedNote& a, const grid::QuantizedNote& b) {
                  return a.key() < b.key();
              });
    return qs;
}

tok::TokenSequence encode_midilike(const midi::Performance& perf, const EncodeOptions& opts) {
    if (opts.baseline_variant == 3) return encode_midilike(grid::quantize(perf), opts);
    if (opts.baseline_variant != 1 && opts.baseline_variant != 2)
        throw std::invalid_argument("baseline variant must be 1, 2 or 3");
    midi::validate(perf);

    struct Event {
        std::int64_t time_bins; // absolute 10 ms bins
        int order;              // 0 = offset, 1 = onset
        const midi::Note* note;
    };
    std::vector<Event> events;
    events.reserve(perf.notes.size() * 2);
    for (const auto& n : perf.notes) {
        auto on_bin = std::llround(tick_to_ms(perf, n.onset) / kMsPerBin);
        events.push_back({on_bin, 1, &n});
        if (opts.baseline_variant == 1) {
            auto off_bin = std::llround(tick_to_ms(perf, n.onset + n.duration) / kMsPerBin);
            events.push_back({std::max(off_bin, on_bin), 0, &n});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
        return std::tuple(a.time_bins, a.order, a.note->pitch) <
               std::tuple(b.time_bins, b.order, b.note->pitch);
    });

    Emitter out(opts.baseline_variant == 1 ? tok::Repr::midilike_v1 : tok::Repr::midilike_v2);
    std::int64_t cursor = 0;
    for (const auto& e : events) {
        emit_time_shift_ms(out, e.time_bins - cursor);
        cursor = e.time_bins;
        if (e.order == 1) {
            out.push(tok::NoteVelocity{grid::velocity_to_bin(e.note->velocity)});
            out.push(tok::NoteOn{e.note->pitch});
            if (opts.baseline_variant == 2)
                out.push(tok::NoteDuration{duration_to_units(e.note->duration, perf.ticks_per_beat)});
        } else {
            out.push(tok::NoteOff{e.note->pitch});
        }
    }
    return out.seq;
}

tok::TokenSequence encode_midilike(const grid::QuantizedScore& qs, const EncodeOptions& opts) {
    if (opts.baseline_variant == 1 || opts.baseline_variant == 2)
        return encode_midilike(dequantize(qs), opts);
    if (opts.baseline_variant != 3)
        throw std::invalid_argument("baseline variant must be 1, 2 or 3");
    grid::validate(qs);

    Emitter out(tok::Repr::midilike_v3);
    std::int64_t cursor = 0;
    for (const auto& n : qs.notes) {
        std::int64_t pos16 =
            static_cast<std::int64_t>(n.bar) * qs.grid.positions_per_bar + n.position - 1;
        emit_time_shift_grid(out, pos16 - cursor);
        cursor = pos16;
        out.push(tok::NoteVelocity{n.velocity_bin});
        out.push(tok::NoteOn{n.pitch});
        out.push(tok::NoteDuration{n.duration_units});
    }
    return out.seq;
}

MidiLikeDecodeResult decode_midilike(const tok::TokenSequence& seq) {
    if (seq.repr == tok::Repr::remi)
        throw std::invalid_argument("decode_midilike requires a MIDI-like sequence");
    const auto& vocab = tok::vocabulary(seq.repr);

    MidiLikeDecodeResult result;
    result.perf.ticks_per_beat = kTicksPerBeat;
    result.perf.tempo_map = {{0, kDefaultBpm}};

    // at 120 BPM and 480 tpb: one beat = 500 ms, one tick = 500/480 ms
    auto bins_to_ticks = [](std::int64_t bins) {
        return std::llround(double(bins) * kMsPerBin * kTicksPerBeat / 500.0);
    };

    std::int64_t cursor = 0; // 10 ms bins (v1/v2) or 16th steps (v3)
    int velocity = 64;
    int pending_pitch = -1;
    std::int64_t pending_onset = 0;
    std::map<int, std::deque<std::pair<std::int64_t, int>>> open; // pitch -> (onset tick, vel)

    auto flush_pending = [&]() {
        if (pending_pitch < 0) return;
        // v2/v3 note without its duration token: fall back to one unit
        result.perf.notes.push_back({pending_pitch, velocity, pending_onset, kTicksPerUnit});
        result.warnings.push_back("Note-On without Note Duration closed after one 32nd note");
        pending_pitch = -1;
    };

    for (int id : seq.ids) {
        const tok::Token& token = vocab.token_of(id);
        switch (tok::kind_of(token)) {
        case tok::Kind::time_shift_ms:
            cursor += std::get<tok::TimeShiftMs>(token).k;
            break;
        case tok::Kind::time_shift_grid:
            cursor += std::get<tok::TimeShiftGrid>(token).k;
            break;
        case tok::Kind::note_velocity:
            velocity = grid::bin_to_velocity(std::get<tok::NoteVelocity>(token).bin);
            break;
        case tok::Kind::note_on: {
            flush_pending();
            int pitch = std::get<tok::NoteOn>(token).pitch;
            std::int64_t tick = seq.repr == tok::Repr::midilike_v3
                                    ? cursor * (kTicksPerBeat / 4)
                                    : bins_to_ticks(cursor);
            if (seq.repr == tok::Repr::midilike_v1) {
                open[pitch].push_back({tick, velocity});
            } else {
                pending_pitch = pitch;
                pending_onset = tick;
            }
            break;
        }
        case tok::Kind::note_duration: {
            int units = std::get<tok::NoteDuration>(token).units;
            if (pending_pitch >= 0) {
                result.perf.notes.push_back({pending_pitch, velocity, pending_onset,
                                             static_cast<std::int64_t>(units) * kTicksPerUnit});
                pending_pitch = -1;
            }
            break;
        }
        case tok::Kind::note_off: {
            int pitch = std::get<tok::NoteOff>(token).pitch;
            auto it = open.find(pitch);
            if (it == open.end() || it->second.empty()) break; // unmatched Note-Off
            auto [onset, vel] = it->second.front();
            it->second.pop_front();
            std::int64_t tick = bins_to_ticks(cursor);
            result.perf.notes.push_back({pitch, vel, onset, std::max<std::int64_t>(1, tick - onset)});
            break;
        }
        default:
            break;
        }
    }
    flush_pending();
    // dangling v1 Note-Ons: close after the maximal note duration
    for (auto& [pitch, queue] : open) {
        for (const auto& [onset, vel] : queue) {
            result.perf.notes.push_back(
                {pitch, vel, onset,
                 static_cast<std::int64_t>(grid::kMaxDurationUnits) * kTicksPerUnit});
            result.warnings.push_back("dangling Note-On " + std::to_string(pitch) +
                                      " closed after the maximal note duration");
        }
    }
    std::sort(result.perf.notes.begin(), result.perf.notes.end(),
              [](const midi::Note& a, const midi::Note& b) {
                  return std::tuple(a.onset, a.pitch, a.duration, a.velocity) <
                         std::tuple(b.onset, b.pitch, b.duration, b.velocity);
              });
    return result;
}

midi::Performance dequantize(const grid::QuantizedScore& qs) {
    grid::validate(qs);
    midi::Performance perf;
    perf.ticks_per_beat = kTicksPerBeat;

    const std::int64_t ticks_per_position =
        static_cast<std::int64_t>(kTicksPerBeat) * qs.grid.beats_per_bar / qs.grid.positions_per_bar;
    for (const auto& n : qs.notes) {
        std::int64_t onset =
            (static_cast<std::int64_t>(n.bar) * qs.grid.positions_per_bar + n.position - 1) *
            ticks_per_position;
        perf.notes.push_back({n.pitch, grid::bin_to_velocity(n.velocity_bin), onset,
                              static_cast<std::int64_t>(n.duration_units) * kTicksPerUnit});
    }
    std::sort(perf.notes.begin(), perf.notes.end(), [](const midi::Note& a, const midi::Note& b) {
        return std::tuple(a.onset, a.pitch, a.duration, a.velocity) <
               std::tuple(b.onset, b.pitch, b.duration, b.velocity);
    });
    // same-pitch overlaps cannot survive a MIDI round trip: close the earlier
    // note at the next onset, dropping notes squeezed to nothing
    std::map<int, midi::Note*> sounding;
    std::vector<midi::Note> trimmed;
    trimmed.reserve(perf.notes.size());
    for (const auto& n : perf.notes) {
        auto it = sounding.find(n.pitch);
        if (it != sounding.end() && it->second->onset + it->second->duration > n.onset)
            it->second->duration = n.onset - it->second->onset;
        trimmed.push_back(n);
        sounding[n.pitch] = &trimmed.back();
    }
    perf.notes.clear();
    for (const auto& n : trimmed)
        if (n.duration >= 1) perf.notes.push_back(n);

    perf.tempo_map.clear();
    double current = -1.0;
    for (std::size_t beat = 0; beat < qs.beat_tempi.size(); ++beat) {
        if (qs.beat_tempi[beat] != current) {
            current = qs.beat_tempi[beat];
            perf.tempo_map.push_back({static_cast<std::int64_t>(beat) * kTicksPerBeat, current});
        }
    }
    if (perf.tempo_map.empty() || perf.tempo_map.front().tick != 0)
        perf.tempo_map.insert(perf.tempo_map.begin(), {0, kDefaultBpm});
    return perf;
}

} // namespace remi::codec
