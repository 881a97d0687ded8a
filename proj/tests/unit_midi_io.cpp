#include <doctest.h>

#include "helpers.hpp"
#include "remi/midi_io.hpp"

using namespace remi;

namespace {

// Minimal SMF byte builder for hand-constructed parser inputs.
struct Smf {
    std::vector<std::uint8_t> bytes;

    Smf& u8(unsigned v) { bytes.push_back(std::uint8_t(v)); return *this; }
    Smf& u16(unsigned v) { return u8(v >> 8).u8(v & 0xff); }
    Smf& u32(unsigned long v) { return u16(unsigned(v >> 16)).u16(unsigned(v & 0xffff)); }
    Smf& raw(std::initializer_list<unsigned> vs) {
        for (unsigned v : vs) u8(v);
        return *this;
    }
};

std::vector<std::uint8_t> file_with_track(const std::vector<std::uint8_t>& track) {
    Smf f;
    f.raw({'M', 'T', 'h', 'd'}).u32(6).u16(0).u16(1).u16(480);
    f.raw({'M', 'T', 'r', 'k'}).u32(static_cast<unsigned long>(track.size()));
    f.bytes.insert(f.bytes.end(), track.begin(), track.end());
    return f.bytes;
}

const std::vector<std::uint8_t> kEot = {0x00, 0xff, 0x2f, 0x00};

} // namespace

TEST_CASE("two-byte delta time 0x81 0x48 means 200 ticks") {
    Smf t;
    t.raw({0x81, 0x48, 0x90, 60, 64}); // delta 200, note on
    t.raw({0x60, 0x80, 60, 0});        // delta 96, note off
    t.bytes.insert(t.bytes.end(), kEot.begin(), kEot.end());
    auto perf = midi::parse_smf(file_with_track(t.bytes));
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].onset == 200);
    CHECK(perf.notes[0].duration == 96);
}

TEST_CASE("minimal one-note file") {
    Smf t;
    t.raw({0x00, 0x90, 60, 64});
    t.raw({0x83, 0x60, 0x80, 60, 0}); // delta 480
    t.bytes.insert(t.bytes.end(), kEot.begin(), kEot.end());
    auto perf = midi::parse_smf(file_with_track(t.bytes));
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0] == midi::Note{60, 64, 0, 480});
    CHECK(perf.ticks_per_beat == 480);
    REQUIRE(perf.tempo_map.size() == 1); // default 120 inserted
    CHECK(perf.tempo_map[0].bpm == doctest::Approx(120.0));
}

TEST_CASE("3/4 time signature is rejected") {
    Smf t;
    t.raw({0x00, 0xff, 0x58, 0x04, 3, 2, 24, 8});
    t.bytes.insert(t.bytes.end(), kEot.begin(), kEot.end());
    CHECK_THROWS_WITH_AS(midi::parse_smf(file_with_track(t.bytes)),
                         doctest::Contains("unsupported time signature"), midi::ParseError);
}

TEST_CASE("running status and velocity-0 note-off") {
    Smf t;
    t.raw({0x00, 0x90, 60, 64}); // note on, establishes status
    t.raw({0x00, 64, 80});       // running status: second note on
    t.raw({0x60, 60, 0});        // running status, velocity 0 = note off
    t.raw({0x20, 64, 0});
    t.bytes.insert(t.bytes.end(), kEot.begin(), kEot.end());
    auto perf = midi::parse_smf(file_with_track(t.bytes));
    REQUIRE(perf.notes.size() == 2);
    CHECK(perf.notes[0] == midi::Note{60, 64, 0, 0x60});
    CHECK(perf.notes[1] == midi::Note{64, 80, 0, 0x80});
}

TEST_CASE("second note-on on a sounding pitch closes the first note") {
    Smf t;
    t.raw({0x00, 0x90, 60, 64});
    t.raw({0x40, 0x90, 60, 70}); // re-strike at tick 64
    t.raw({0x40, 0x80, 60, 0});
    t.bytes.insert(t.bytes.end(), kEot.begin(), kEot.end());
    auto perf = midi::parse_smf(file_with_track(t.bytes));
    REQUIRE(perf.notes.size() == 2);
    CHECK(perf.notes[0].duration == 0x40); // closed at the new onset
    CHECK(perf.notes[1].onset == 0x40);
}

TEST_CASE("unmatched note-on is closed at end of track") {
    Smf t;
    t.raw({0x00, 0x90, 60, 64});
    t.raw({0x78, 0xff, 0x2f, 0x00}); // EOT at tick 120
    auto perf = midi::parse_smf(file_with_track(t.bytes));
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].duration == 120);
}

TEST_CASE("format 1 tracks are merged") {
    Smf f;
    f.raw({'M', 'T', 'h', 'd'}).u32(6).u16(1).u16(2).u16(480);
    Smf t1, t2;
    t1.raw({0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20}); // 500000 us = 120 bpm
    t1.bytes.insert(t1.bytes.end(), kEot.begin(), kEot.end());
    t2.raw({0x00, 0x90, 72, 90, 0x10, 0x80, 72, 0});
    t2.bytes.insert(t2.bytes.end(), kEot.begin(), kEot.end());
    for (auto* t : {&t1, &t2}) {
        f.raw({'M', 'T', 'r', 'k'}).u32(static_cast<unsigned long>(t->bytes.size()));
        f.bytes.insert(f.bytes.end(), t->bytes.begin(), t->bytes.end());
    }
    auto perf = midi::parse_smf(f.bytes);
    REQUIRE(perf.notes.size() == 1);
    CHECK(perf.notes[0].pitch == 72);
    CHECK(perf.tempo_map[0].bpm == doctest::Approx(120.0));
}

TEST_CASE("garbage input yields ParseError, not a crash") {
    CHECK_THROWS_AS(midi::parse_smf(std::vector<std::uint8_t>{}), midi::ParseError);
    CHECK_THROWS_AS(midi::parse_smf(std::vector<std::uint8_t>{'M', 'T', 'h', 'd'}),
                    midi::ParseError);
    std::vector<std::uint8_t> bad = {'X', 'Y', 'Z', 'W', 0, 0, 0, 0};
    CHECK_THROWS_AS(midi::parse_smf(bad), midi::ParseError);
}

TEST_CASE("empty performance round trip") {
    midi::Performance perf;
    perf.tempo_map.push_back({0, 120.0});
    auto bytes = midi::write_smf(perf);
    CHECK(midi::parse_smf(bytes) == perf);
}

TEST_CASE("two tempo markings round trip") {
    midi::Performance perf;
    perf.tempo_map.push_back({0, 60000000.0 / 500000});  // 120
    perf.tempo_map.push_back({960, 60000000.0 / 750000}); // 80
    perf.notes.push_back({60, 64, 0, 480});
    auto back = midi::parse_smf(midi::write_smf(perf));
    CHECK(back.tempo_map == perf.tempo_map);
    CHECK(back == perf);
}

TEST_CASE("bpm_at picks the last marking at or before the tick") {
    midi::Performance perf;
    perf.tempo_map.push_back({0, 120.0});
    perf.tempo_map.push_back({480, 90.0});
    CHECK(midi::bpm_at(perf, 0) == 120.0);
    CHECK(midi::bpm_at(perf, 479) == 120.0);
    CHECK(midi::bpm_at(perf, 480) == 90.0);
    CHECK(midi::bpm_at(perf, 10000) == 90.0);
}

TEST_CASE("randomized performances round trip exactly") {
    testutil::Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        auto perf = testutil::random_performance(rng);
        midi::validate(perf);
        auto back = midi::parse_smf(midi::write_smf(perf));
        REQUIRE(back == perf);
    }
}

TEST_CASE("validate rejects broken invariants") {
    midi::Performance perf;
    perf.tempo_map.push_back({0, 120.0});
    perf.notes.push_back({60, 64, 0, 480});
    perf.notes.push_back({60, 64, 100, 100}); // same-pitch overlap
    CHECK_THROWS_AS(midi::validate(perf), std::invalid_argument);

    midi::Performance sig;
    sig.tempo_map.push_back({0, 120.0});
    sig.time_signature = {3, 4};
    CHECK_THROWS_AS(midi::validate(sig), std::invalid_argument);
}
