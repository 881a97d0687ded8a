#include <doctest.h>

#include <set>
#include <sstream>

#include "helpers.hpp"
#include "remi/tokens.hpp"

using namespace remi;
using tok::Token;

namespace {

tok::TokenSequence remi_seq(const std::vector<Token>& tokens) {
    const auto& vocab = tok::vocabulary(tok::Repr::remi);
    tok::TokenSequence seq;
    for (const auto& t : tokens) seq.ids.push_back(vocab.index_of(t));
    return seq;
}

std::set<std::string> rules_of(const std::vector<tok::Violation>& vs) {
    std::set<std::string> rules;
    for (const auto& v : vs) rules.insert(v.rule);
    return rules;
}

} // namespace

TEST_CASE("vocabulary sizes") {
    CHECK(tok::vocabulary(tok::Repr::remi).size() == 364);       // 1+16+3+60+60+32+128+64
    CHECK(tok::vocabulary(tok::Repr::midilike_v1).size() == 388); // 128+128+100+32
    CHECK(tok::vocabulary(tok::Repr::midilike_v2).size() == 324); // 128+64+100+32
    CHECK(tok::vocabulary(tok::Repr::midilike_v3).size() == 240); // 128+64+16+32
}

TEST_CASE("index_of and token_of are inverse bijections on every vocabulary") {
    for (auto repr : {tok::Repr::remi, tok::Repr::midilike_v1, tok::Repr::midilike_v2,
                      tok::Repr::midilike_v3}) {
        const auto& vocab = tok::vocabulary(repr);
        std::set<std::string> mnemonics;
        for (int i = 0; i < vocab.size(); ++i) {
            const Token& t = vocab.token_of(i);
            REQUIRE(vocab.index_of(t) == i);
            mnemonics.insert(vocab.mnemonic(t));
        }
        CHECK(static_cast<int>(mnemonics.size()) == vocab.size()); // all distinct
    }
}

TEST_CASE("out-of-vocabulary lookups throw") {
    const auto& remi = tok::vocabulary(tok::Repr::remi);
    CHECK_THROWS_AS(remi.token_of(-1), std::invalid_argument);
    CHECK_THROWS_AS(remi.token_of(364), std::invalid_argument);
    CHECK_THROWS_AS(remi.index_of(tok::NoteOff{60}), std::invalid_argument); // wrong repr
    CHECK_THROWS_AS(tok::vocabulary(tok::Repr::midilike_v1).index_of(tok::Bar{}),
                    std::invalid_argument);
}

TEST_CASE("normative mnemonics") {
    const auto& remi = tok::vocabulary(tok::Repr::remi);
    CHECK(remi.mnemonic(tok::Bar{}) == "Bar");
    CHECK(remi.mnemonic(tok::Position{9}) == "Position_9/16");
    CHECK(remi.mnemonic(tok::Chord{{0, chords::Quality::major}}) == "Chord_C_maj");
    CHECK(remi.mnemonic(tok::TempoClassTok{grid::TempoClass::mid}) == "Tempo-Class_mid");
    CHECK(remi.mnemonic(tok::TempoValue{30}) == "Tempo-Value_30");
    CHECK(remi.mnemonic(tok::NoteVelocity{16}) == "Note-Velocity_16");
    CHECK(remi.mnemonic(tok::NoteOn{60}) == "Note-On_60");
    CHECK(remi.mnemonic(tok::NoteDuration{8}) == "Note-Duration_8");
    const auto& v1 = tok::vocabulary(tok::Repr::midilike_v1);
    CHECK(v1.mnemonic(tok::NoteOff{60}) == "Note-Off_60");
    CHECK(v1.mnemonic(tok::TimeShiftMs{50}) == "Time-Shift-Ms_50");
    const auto& v3 = tok::vocabulary(tok::Repr::midilike_v3);
    CHECK(v3.mnemonic(tok::TimeShiftGrid{4}) == "Time-Shift-Grid_4");
}

TEST_CASE("mnemonics parse back for the whole vocabulary") {
    for (auto repr : {tok::Repr::remi, tok::Repr::midilike_v1, tok::Repr::midilike_v2,
                      tok::Repr::midilike_v3}) {
        const auto& vocab = tok::vocabulary(repr);
        for (int i = 0; i < vocab.size(); ++i)
            REQUIRE(vocab.parse_mnemonic(vocab.mnemonic(vocab.token_of(i))) == vocab.token_of(i));
    }
    CHECK_THROWS(tok::vocabulary(tok::Repr::remi).parse_mnemonic("Nonsense_42"));
}

TEST_CASE("minimal legal sequence has no violations") {
    auto seq = remi_seq({tok::Bar{}, tok::Position{1}, tok::NoteVelocity{16}, tok::NoteOn{60},
                         tok::NoteDuration{8}});
    CHECK(tok::validate_grammar(seq).empty());
}

TEST_CASE("empty sequence is vacuously grammatical") {
    CHECK(tok::validate_grammar(tok::TokenSequence{}).empty());
}

TEST_CASE("position going backwards within a bar violates G2") {
    auto seq = remi_seq({tok::Bar{}, tok::Position{9}, tok::NoteVelocity{16}, tok::NoteOn{60},
                         tok::NoteDuration{8}, tok::Position{3}, tok::NoteVelocity{16},
                         tok::NoteOn{62}, tok::NoteDuration{8}});
    CHECK(rules_of(tok::validate_grammar(seq)) == std::set<std::string>{"G2"});

    // a new Bar resets the position counter
    auto ok = remi_seq({tok::Bar{}, tok::Position{9}, tok::NoteVelocity{16}, tok::NoteOn{60},
                        tok::NoteDuration{8}, tok::Bar{}, tok::Position{3}, tok::NoteVelocity{16},
                        tok::NoteOn{62}, tok::NoteDuration{8}});
    CHECK(tok::validate_grammar(ok).empty());
}

TEST_CASE("bare Note-On violates G4 and G5") {
    auto seq = remi_seq({tok::Bar{}, tok::Position{1}, tok::NoteOn{60}});
    auto rules = rules_of(tok::validate_grammar(seq));
    CHECK(rules.count("G4"));
    CHECK(rules.count("G5"));
}

TEST_CASE("missing Bar at the start violates G1") {
    auto seq = remi_seq({tok::Position{1}, tok::NoteVelocity{16}, tok::NoteOn{60},
                         tok::NoteDuration{8}});
    CHECK(rules_of(tok::validate_grammar(seq)).count("G1"));
}

TEST_CASE("tempo class without tempo value violates G3") {
    auto seq = remi_seq({tok::Bar{}, tok::Position{1}, tok::TempoClassTok{grid::TempoClass::mid},
                         tok::Position{5}, tok::TempoClassTok{grid::TempoClass::mid},
                         tok::TempoValue{30}});
    CHECK(rules_of(tok::validate_grammar(seq)) == std::set<std::string>{"G3"});
}

TEST_CASE("group without a preceding Position violates G4") {
    auto seq = remi_seq({tok::Bar{}, tok::NoteVelocity{16}, tok::NoteOn{60}, tok::NoteDuration{8}});
    CHECK(rules_of(tok::validate_grammar(seq)) == std::set<std::string>{"G4"});
    auto chord = remi_seq({tok::Bar{}, tok::Chord{{5, chords::Quality::minor}}});
    CHECK(rules_of(tok::validate_grammar(chord)) == std::set<std::string>{"G4"});
}

TEST_CASE("grammar validation rejects non-REMI sequences") {
    tok::TokenSequence seq;
    seq.repr = tok::Repr::midilike_v1;
    CHECK_THROWS_AS(tok::validate_grammar(seq), std::invalid_argument);
}

TEST_CASE("prefixes of a grammatical sequence only ever violate G5") {
    testutil::Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        auto qs = testutil::random_quantized_score(rng);
        auto seq = codec::encode_remi(qs, {});
        REQUIRE(tok::validate_grammar(seq).empty());
        tok::TokenSequence prefix{tok::Repr::remi, {}};
        for (std::size_t len = 0; len < seq.ids.size(); ++len) {
            prefix.ids.assign(seq.ids.begin(), seq.ids.begin() + static_cast<long>(len));
            for (const auto& v : tok::validate_grammar(prefix)) REQUIRE(v.rule == "G5");
        }
    }
}

TEST_CASE("token text round trip with header") {
    auto seq = remi_seq({tok::Bar{}, tok::Position{1}, tok::TempoClassTok{grid::TempoClass::mid},
                         tok::TempoValue{30}, tok::Position{1}, tok::NoteVelocity{16},
                         tok::NoteOn{60}, tok::NoteDuration{8}});
    std::ostringstream out;
    tok::write_tokens(out, seq);
    CHECK(out.str().substr(0, out.str().find('\n')) == "#tokens v1 remi");
    std::istringstream in(out.str());
    CHECK(tok::read_tokens(in) == seq);

    std::istringstream bad("not a token file\n");
    CHECK_THROWS(tok::read_tokens(bad));
}
