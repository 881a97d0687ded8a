#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "remi/codec.hpp"

using namespace remi;

namespace {

std::vector<std::string> mnemonics(const tok::TokenSequence& seq) {
    const auto& vocab = tok::vocabulary(seq.repr);
    std::vector<std::string> out;
    for (int id : seq.ids) out.push_back(vocab.mnemonic(vocab.token_of(id)));
    return out;
}

grid::QuantizedScore one_c4_bar() {
    grid::QuantizedScore qs;
    qs.beat_tempi = {120, 120, 120, 120};
    qs.notes.push_back({0, 1, 60, 16, 8});
    return qs;
}

bool contains(const tok::TokenSequence& seq, const tok::Token& token) {
    int id = tok::vocabulary(seq.repr).index_of(token);
    return std::find(seq.ids.begin(), seq.ids.end(), id) != seq.ids.end();
}

} // namespace

TEST_CASE("canonical encoding of one C4 quarter note at 120 BPM") {
    auto seq = codec::encode_remi(one_c4_bar(), {});
    CHECK(mnemonics(seq) == std::vector<std::string>{
                                "Bar",
                                "Position_1/16", "Tempo-Class_mid", "Tempo-Value_30",
                                "Position_1/16", "Note-Velocity_16", "Note-On_60", "Note-Duration_8",
                                "Position_5/16", "Tempo-Class_mid", "Tempo-Value_30",
                                "Position_9/16", "Tempo-Class_mid", "Tempo-Value_30",
                                "Position_13/16", "Tempo-Class_mid", "Tempo-Value_30"});
}

TEST_CASE("empty score encodes to an empty sequence") {
    grid::QuantizedScore qs;
    codec::EncodeOptions opts;
    opts.with_tempo = false;
    auto seq = codec::encode_remi(qs, opts);
    CHECK(seq.ids.empty());
    CHECK(seq.repr == tok::Repr::remi);
}

TEST_CASE("simultaneous notes come out in ascending pitch order, each with a Position") {
    grid::QuantizedScore qs;
    qs.beat_tempi = {120, 120, 120, 120};
    qs.notes.push_back({0, 1, 60, 16, 8});
    qs.notes.push_back({0, 1, 64, 16, 8});
    codec::EncodeOptions opts;
    opts.with_tempo = false;
    auto seq = codec::encode_remi(qs, opts);
    CHECK(mnemonics(seq) == std::vector<std::string>{
                                "Bar",
                                "Position_1/16", "Note-Velocity_16", "Note-On_60", "Note-Duration_8",
                                "Position_1/16", "Note-Velocity_16", "Note-On_64", "Note-Duration_8"});
}

TEST_CASE("encoded sequences are always grammatical and decode back to the score") {
    testutil::Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        auto qs = testutil::random_quantized_score(rng);
        auto seq = codec::encode_remi(qs, {});
        REQUIRE(tok::validate_grammar(seq).empty());
        REQUIRE(codec::decode_remi(seq) == qs);
    }
}

TEST_CASE("decoding without tempo tokens defaults every beat to 120") {
    grid::QuantizedScore qs = one_c4_bar();
    codec::EncodeOptions opts;
    opts.with_tempo = false;
    auto back = codec::decode_remi(codec::encode_remi(qs, opts));
    CHECK(back.beat_tempi == std::vector<double>{120, 120, 120, 120});
    CHECK(back.notes == qs.notes);
}

TEST_CASE("beats without a tempo pair inherit the previous beat's tempo") {
    auto seq = codec::encode_remi(one_c4_bar(), {});
    // drop the Position_9 tempo group (indices 11..13 in the canonical layout)
    seq.ids.erase(seq.ids.begin() + 11, seq.ids.begin() + 14);
    auto back = codec::decode_remi(seq);
    CHECK(back.beat_tempi == std::vector<double>{120, 120, 120, 120});
}

TEST_CASE("ungrammatical input raises DecodeError naming the violation") {
    tok::TokenSequence seq{tok::Repr::remi,
                           {tok::vocabulary(tok::Repr::remi).index_of(tok::Position{1})}};
    CHECK_THROWS_WITH_AS(codec::decode_remi(seq), doctest::Contains("G1"), codec::DecodeError);
}

TEST_CASE("chord tokens never change the decoded notes") {
    testutil::Rng rng(23);
    for (int i = 0; i < 50; ++i) {
        auto qs = testutil::random_quantized_score(rng);
        codec::EncodeOptions with_chords;
        with_chords.with_chord = true;
        auto plain = codec::decode_remi(codec::encode_remi(qs, {}));
        auto chorded = codec::decode_remi(codec::encode_remi(qs, with_chords));
        REQUIRE(chorded == plain);
    }
}

TEST_CASE("dequantize grid arithmetic") {
    grid::QuantizedScore qs;
    qs.beat_tempi.assign(8, 120.0);
    qs.notes.push_back({0, 1, 60, 16, 8});
    qs.notes.push_back({1, 9, 64, 16, 8});
    auto perf = codec::dequantize(qs);
    CHECK(perf.ticks_per_beat == 480);
    REQUIRE(perf.notes.size() == 2);
    CHECK(perf.notes[0].onset == 0);
    CHECK(perf.notes[0].duration == 480); // 8 x 60 ticks
    CHECK(perf.notes[1].onset == 2880);   // (16 + 8) x 120 ticks
}

TEST_CASE("dequantize emits one tempo marking per change") {
    grid::QuantizedScore qs;
    qs.beat_tempi = {120, 120, 90, 90};
    qs.notes.push_back({0, 1, 60, 16, 8});
    auto perf = codec::dequantize(qs);
    REQUIRE(perf.tempo_map.size() == 2);
    CHECK(perf.tempo_map[0] == midi::TempoMarking{0, 120.0});
    CHECK(perf.tempo_map[1] == midi::TempoMarking{960, 90.0});
}

TEST_CASE("baseline v3 round trip is exact") {
    testutil::Rng rng(29);
    codec::EncodeOptions opts;
    opts.baseline_variant = 3;
    for (int i = 0; i < 100; ++i) {
        auto qs = testutil::random_quantized_score(rng, /*no_overlap=*/true);
        auto seq = codec::encode_midilike(qs, opts);
        REQUIRE(seq.repr == tok::Repr::midilike_v3);
        auto decoded = codec::decode_midilike(seq);
        REQUIRE(decoded.warnings.empty());
        auto back = grid::quantize(decoded.perf, qs.grid);
        REQUIRE(back.notes == qs.notes);
    }
}

TEST_CASE("v1 encoding of two notes 500 ms apart contains Time-Shift-Ms_50") {
    midi::Performance perf; // 120 BPM: 480 ticks = 500 ms
    perf.tempo_map.push_back({0, 120.0});
    perf.notes.push_back({60, 64, 0, 480}); // offset coincides with the next onset
    perf.notes.push_back({64, 64, 480, 240});
    codec::EncodeOptions opts;
    opts.baseline_variant = 1;
    auto seq = codec::encode_midilike(perf, opts);
    CHECK(contains(seq, tok::TimeShiftMs{50}));
}

TEST_CASE("v1 decode of a dangling Note-On closes it at maximal duration with a warning") {
    const auto& vocab = tok::vocabulary(tok::Repr::midilike_v1);
    tok::TokenSequence seq{tok::Repr::midilike_v1,
                           {vocab.index_of(tok::NoteVelocity{16}), vocab.index_of(tok::NoteOn{60})}};
    auto decoded = codec::decode_midilike(seq);
    REQUIRE(decoded.perf.notes.size() == 1);
    // maximal-duration heuristic: 64 32nd notes = 8 beats
    CHECK(decoded.perf.notes[0].duration == 64 * decoded.perf.ticks_per_beat / 8);
    CHECK(!decoded.warnings.empty());
}

TEST_CASE("v1/v2 round trips are exact up to one 10 ms bin per boundary") {
    testutil::Rng rng(31);
    for (int variant : {1, 2}) {
        codec::EncodeOptions opts;
        opts.baseline_variant = variant;
        for (int i = 0; i < 50; ++i) {
            auto perf = testutil::random_performance(rng);
            auto decoded = codec::decode_midilike(codec::encode_midilike(perf, opts));
            REQUIRE(decoded.perf.notes.size() == perf.notes.size());
            // compare boundaries on the millisecond timeline
            auto to_ms = [](const midi::Performance& p, std::int64_t tick) {
                double ms = 0;
                std::int64_t at = 0;
                for (std::size_t m = 0; m < p.tempo_map.size(); ++m) {
                    std::int64_t next = m + 1 < p.tempo_map.size()
                                            ? std::min(p.tempo_map[m + 1].tick, tick)
                                            : tick;
                    if (next > at)
                        ms += double(next - at) * 60000.0 / (p.tempo_map[m].bpm * p.ticks_per_beat);
                    at = std::max(at, next);
                    if (at >= tick) break;
                }
                return ms;
            };
            // pair per pitch: rounding keeps per-pitch onset order but can
            // reorder across pitches at near-equal onsets
            auto by_pitch = [](const midi::Performance& p) {
                std::map<int, std::vector<midi::Note>> groups;
                for (const auto& n : p.notes) groups[n.pitch].push_back(n);
                return groups;
            };
            auto orig = by_pitch(perf), got = by_pitch(decoded.perf);
            REQUIRE(orig.size() == got.size());
            for (const auto& [pitch, notes] : orig) {
                REQUIRE(got[pitch].size() == notes.size());
                for (std::size_t n = 0; n < notes.size(); ++n) {
                    const auto& a = notes[n];
                    const auto& b = got[pitch][n];
                    REQUIRE(grid::velocity_to_bin(a.velocity) == grid::velocity_to_bin(b.velocity));
                    REQUIRE(std::abs(to_ms(perf, a.onset) - to_ms(decoded.perf, b.onset)) <=
                            10.0 + 1e-6);
                    if (variant == 1) {
                        // offsets are time-shift-anchored events in v1
                        REQUIRE(std::abs(to_ms(perf, a.onset + a.duration) -
                                         to_ms(decoded.perf, b.onset + b.duration)) <= 10.0 + 1e-6);
                    } else {
                        // v2 carries duration as 32nd-note units: half a unit
                        // of rounding, clamped to [1, 64]
                        double orig_units = double(a.duration) * 8 / perf.ticks_per_beat;
                        double got_units = double(b.duration) * 8 / decoded.perf.ticks_per_beat;
                        double expect = std::clamp(orig_units, 1.0, 64.0);
                        REQUIRE(std::abs(got_units - expect) <= 0.5 + 1e-9);
                    }
                }
            }
        }
    }
}

TEST_CASE("deterministic encoding: equal inputs give identical sequences") {
    testutil::Rng rng(37);
    auto qs = testutil::random_quantized_score(rng);
    codec::EncodeOptions opts;
    opts.with_chord = true;
    CHECK(codec::encode_remi(qs, opts) == codec::encode_remi(qs, opts));
}
