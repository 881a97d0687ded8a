#include "remi/tokens.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace remi::tok {

namespace {

constexpr int kPositions = 16;

const char* tempo_class_name(grid::TempoClass c) {
    switch (c) {
    case grid::TempoClass::low: return "low";
    case grid::TempoClass::mid: return "mid";
    case grid::TempoClass::high: return "high";
    }
    return "?";
}

} // namespace

std::string repr_name(Repr repr) {
    switch (repr) {
    case Repr::remi: return "remi";
    case Repr::midilike_v1: return "midilike-v1";
    case Repr::midilike_v2: return "midilike-v2";
    case Repr::midilike_v3: return "midilike-v3";
    }
    return "?";
}

Repr parse_repr(const std::string& name) {
    if (name == "remi") return Repr::remi;
    if (name == "midilike-v1") return Repr::midilike_v1;
    if (name == "midilike-v2") return Repr::midilike_v2;
    if (name == "midilike-v3") return Repr::midilike_v3;
    throw std::invalid_argument("unknown representation tag: " + name);
}

Kind kind_of(const Token& token) {
    struct Visitor {
        Kind operator()(const Bar&) const { return Kind::bar; }
        Kind operator()(const Position&) const { return Kind::position; }
        Kind operator()(const TempoClassTok&) const { return Kind::tempo_class; }
        Kind operator()(const TempoValue&) const { return Kind::tempo_value; }
        Kind operator()(const Chord&) const { return Kind::chord; }
        Kind operator()(const NoteVelocity&) const { return Kind::note_velocity; }
        Kind operator()(const NoteOn&) const { return Kind::note_on; }
        Kind operator()(const NoteDuration&) const { return Kind::note_duration; }
        Kind operator()(const NoteOff&) const { return Kind::note_off; }
        Kind operator()(const TimeShiftMs&) const { return Kind::time_shift_ms; }
        Kind operator()(const TimeShiftGrid&) const { return Kind::time_shift_grid; }
    };
    return std::visit(Visitor{}, token);
}

std::string kind_name(Kind kind) {
    switch (kind) {
    case Kind::bar: return "Bar";
    case Kind::position: return "Position";
    case Kind::tempo_class: return "Tempo-Class";
    case Kind::tempo_value: return "Tempo-Value";
    case Kind::chord: return "Chord";
    case Kind::note_velocity: return "Note-Velocity";
    case Kind::note_on: return "Note-On";
    case Kind::note_duration: return "Note-Duration";
    case Kind::note_off: return "Note-Off";
    case Kind::time_shift_ms: return "Time-Shift-Ms";
    case Kind::time_shift_grid: return "Time-Shift-Grid";
    }
    return "?";
}

Vocabulary::Vocabulary(Repr repr) : repr_(repr) {
    if (repr == Repr::remi) {
        tokens_.emplace_back(Bar{});
        for (int p = 1; p <= kPositions; ++p) tokens_.emplace_back(Position{p});
        for (auto c : {grid::TempoClass::low, grid::TempoClass::mid, grid::TempoClass::high})
            tokens_.emplace_back(TempoClassTok{c});
        for (int v = 0; v < grid::kTempoValuesPerClass; ++v) tokens_.emplace_back(TempoValue{v});
        for (int root = 0; root < 12; ++root)
            for (auto q : chords::kQualities) tokens_.emplace_back(Chord{{root, q}});
        for (int b = 0; b < grid::kVelocityBins; ++b) tokens_.emplace_back(NoteVelocity{b});
        for (int p = 0; p < 128; ++p) tokens_.emplace_back(NoteOn{p});
        for (int d = 1; d <= grid::kMaxDurationUnits; ++d) tokens_.emplace_back(NoteDuration{d});
        return;
    }
    for (int p = 0; p < 128; ++p) tokens_.emplace_back(NoteOn{p});
    if (repr == Repr::midilike_v1) {
        for (int p = 0; p < 128; ++p) tokens_.emplace_back(NoteOff{p});
    } else {
        for (int d = 1; d <= grid::kMaxDurationUnits; ++d) tokens_.emplace_back(NoteDuration{d});
    }
    if (repr == Repr::midilike_v3) {
        for (int k = 1; k <= kPositions; ++k) tokens_.emplace_back(TimeShiftGrid{k});
    } else {
        for (int k = 1; k <= 100; ++k) tokens_.emplace_back(TimeShiftMs{k});
    }
    for (int b = 0; b < grid::kVelocityBins; ++b) tokens_.emplace_back(NoteVelocity{b});
}

int Vocabulary::index_of(const Token& token) const {
    // Computed from the documented layout, then checked against the table.
    struct Visitor {
        Repr repr;
        int size;
        int operator()(const Bar&) const { return repr == Repr::remi ? 0 : -1; }
        int operator()(const Position& t) const { return repr == Repr::remi ? t.p : -1; }
        int operator()(const TempoClassTok& t) const {
            return repr == Repr::remi ? 17 + static_cast<int>(t.cls) : -1;
        }
        int operator()(const TempoValue& t) const { return repr == Repr::remi ? 20 + t.v : -1; }
        int operator()(const Chord& t) const {
            return repr == Repr::remi ? 80 + 5 * t.label.root + static_cast<int>(t.label.quality)
                                      : -1;
        }
        int operator()(const NoteVelocity& t) const {
            return repr == Repr::remi ? 140 + t.bin : size - grid::kVelocityBins + t.bin;
        }
        int operator()(const NoteOn& t) const {
            return repr == Repr::remi ? 172 + t.pitch : t.pitch;
        }
        int operator()(const NoteDuration& t) const {
            if (repr == Repr::remi) return 300 + t.units - 1;
            if (repr == Repr::midilike_v1) return -1;
            return 128 + t.units - 1;
        }
        int operator()(const NoteOff& t) const {
            return repr == Repr::midilike_v1 ? 128 + t.pitch : -1;
        }
        int operator()(const TimeShiftMs& t) const {
            if (repr == Repr::midilike_v1) return 256 + t.k - 1;
            if (repr == Repr::midilike_v2) return 192 + t.k - 1;
            return -1;
        }
        int operator()(const TimeShiftGrid& t) const {
            return repr == Repr::midilike_v3 ? 192 + t.k - 1 : -1;
        }
    };
    int index = std::visit(Visitor{repr_, size()}, token);
    if (index < 0 || index >= size() || !(tokens_[static_cast<std::size_t>(index)] == token))
        throw std::invalid_argument("token not in the " + repr_name(repr_) + " vocabulary");
    return index;
}

const Token& Vocabulary::token_of(int index) const {
    if (index < 0 || index >= size())
        throw std::invalid_argument("token index " + std::to_string(index) +
                                    " out of range for " + repr_name(repr_));
    return tokens_[static_cast<std::size_t>(index)];
}

Kind Vocabulary::kind_of_index(int index) const { return kind_of(token_of(index)); }

std::string Vocabulary::mnemonic(const Token& token) const {
    struct Visitor {
        std::string operator()(const Bar&) const { return "Bar"; }
        std::string operator()(const Position& t) const {
            return "Position_" + std::to_string(t.p) + "/" + std::to_string(kPositions);
        }
        std::string operator()(const TempoClassTok& t) const {
            return std::string("Tempo-Class_") + tempo_class_name(t.cls);
        }
        std::string operator()(const TempoValue& t) const {
            return "Tempo-Value_" + std::to_string(t.v);
        }
        std::string operator()(const Chord& t) const {
            return "Chord_" + chords::root_name(t.label.root) + "_" +
                   chords::quality_name(t.label.quality);
        }
        std::string operator()(const NoteVelocity& t) const {
            return "Note-Velocity_" + std::to_string(t.bin);
        }
        std::string operator()(const NoteOn& t) const { return "Note-On_" + std::to_string(t.pitch); }
        std::string operator()(const NoteDuration& t) const {
            return "Note-Duration_" + std::to_string(t.units);
        }
        std::string operator()(const NoteOff& t) const {
            return "Note-Off_" + std::to_string(t.pitch);
        }
        std::string operator()(const TimeShiftMs& t) const {
            return "Time-Shift-Ms_" + std::to_string(t.k);
        }
        std::string operator()(const TimeShiftGrid& t) const {
            return "Time-Shift-Grid_" + std::to_string(t.k);
        }
    };
    (void)this;
    return std::visit(Visitor{}, token);
}

Token Vocabulary::parse_mnemonic(const std::string& text) const {
    auto bad = [&]() -> Token {
        throw std::invalid_argument("unrecognized token mnemonic: " + text);
    };
    if (text == "Bar") return Bar{};
    auto underscore = text.find('_');
    if (underscore == std::string::npos) return bad();
    std::string head = text.substr(0, underscore);
    std::string rest = text.substr(underscore + 1);
    auto as_int = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            int v = std::stoi(s, &used);
            if (used != s.size()) return bad(), 0;
            return v;
        } catch (const std::exception&) {
            bad();
            return 0;
        }
    };
    if (head == "Position") {
        auto slash = rest.find('/');
        if (slash == std::string::npos) return bad();
        return Position{as_int(rest.substr(0, slash))};
    }
    if (head == "Tempo-Class") {
        if (rest == "low") return TempoClassTok{grid::TempoClass::low};
        if (rest == "mid") return TempoClassTok{grid::TempoClass::mid};
        if (rest == "high") return TempoClassTok{grid::TempoClass::high};
        return bad();
    }
    if (head == "Tempo-Value") return TempoValue{as_int(rest)};
    if (head == "Chord") {
        auto sep = rest.rfind('_');
        if (sep == std::string::npos) return bad();
        auto root = chords::parse_root(rest.substr(0, sep));
        auto quality = chords::parse_quality(rest.substr(sep + 1));
        if (!root || !quality) return bad();
        return Chord{{*root, *quality}};
    }
    if (head == "Note-Velocity") return NoteVelocity{as_int(rest)};
    if (head == "Note-On") return NoteOn{as_int(rest)};
    if (head == "Note-Duration") return NoteDuration{as_int(rest)};
    if (head == "Note-Off") return NoteOff{as_int(rest)};
    if (head == "Time-Shift-Ms") return TimeShiftMs{as_int(rest)};
    if (head == "Time-Shift-Grid") return TimeShiftGrid{as_int(rest)};
    return bad();
}

const Vocabulary& vocabulary(Repr repr) {
    static const Vocabulary remi{Repr::remi};
    static const Vocabulary v1{Repr::midilike_v1};
    static const Vocabulary v2{Repr::midilike_v2};
    static const Vocabulary v3{Repr::midilike_v3};
    switch (repr) {
    case Repr::remi: return remi;
    case Repr::midilike_v1: return v1;
    case Repr::midilike_v2: return v2;
    case Repr::midilike_v3: return v3;
    }
    throw std::invalid_argument("bad representation");
}

std::vector<Violation> validate_grammar(const TokenSequence& seq) {
    if (seq.repr != Repr::remi)
        throw std::invalid_argument("grammar validation applies to REMI sequences only");
    const Vocabulary& vocab = vocabulary(Repr::remi);

    std::vector<Violation> violations;
    auto report = [&](std::size_t pos, const char* rule, std::string description) {
        violations.push_back({pos, rule, std::move(description)});
    };

    // open group state: what the next token must be
    enum class Expect { any, tempo_value, note_on, note_duration };
    Expect expect = Expect::any;
    std::size_t group_start = 0;
    int current_position = 0; // 0 = no position seen yet in this bar
    bool after_position = false;

    auto close_dangling = [&](std::size_t pos, bool at_end = false) {
        switch (expect) {
        case Expect::tempo_value:
            // a pair cut off by the end of the sequence is a dangling group
            report(pos, at_end ? "G5" : "G3", "Tempo Class not followed by Tempo Value");
            break;
        case Expect::note_on:
            report(pos, "G5", "note group missing Note-On after Note Velocity");
            break;
        case Expect::note_duration:
            report(pos, "G5", "note group missing Note Duration after Note-On");
            break;
        case Expect::any: break;
        }
        expect = Expect::any;
    };

    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        const Token& token = vocab.token_of(seq.ids[i]);
        Kind kind = kind_of(token);
        if (i == 0 && kind != Kind::bar) report(0, "G1", "sequence does not start with Bar");

        if (expect != Expect::any) {
            bool satisfied =
                (expect == Expect::tempo_value && kind == Kind::tempo_value) ||
                (expect == Expect::note_on && kind == Kind::note_on) ||
                (expect == Expect::note_duration && kind == Kind::note_duration);
            if (satisfied) {
                switch (expect) {
                case Expect::tempo_value:
                case Expect::note_duration: expect = Expect::any; break;
                case Expect::note_on: expect = Expect::note_duration; break;
                case Expect::any: break;
                }
                after_position = false;
                continue;
            }
            close_dangling(group_start);
        }

        switch (kind) {
        case Kind::bar:
            current_position = 0;
            after_position = false;
            break;
        case Kind::position: {
            int p = std::get<Position>(token).p;
            if (p < current_position)
                report(i, "G2", "Position " + std::to_string(p) + " goes before Position " +
                                    std::to_string(current_position) + " within a bar");
            current_position = p;
            after_position = true;
            break;
        }
        case Kind::tempo_class:
            if (!after_position) report(i, "G4", "tempo pair not preceded by a Position");
            group_start = i;
            expect = Expect::tempo_value;
            after_position = false;
            break;
        case Kind::tempo_value:
            report(i, "G3", "Tempo Value without a preceding Tempo Class");
            after_position = false;
            break;
        case Kind::chord:
            if (!after_position) report(i, "G4", "Chord not preceded by a Position");
            after_position = false;
            break;
        case Kind::note_velocity:
            if (!after_position) report(i, "G4", "note group not preceded by a Position");
            group_start = i;
            expect = Expect::note_on;
            after_position = false;
            break;
        case Kind::note_on:
            report(i, "G4", "Note-On without a preceding Note Velocity");
            // still expects its Note Duration
            group_start = i;
            expect = Expect::note_duration;
            after_position = false;
            break;
        case Kind::note_duration:
            report(i, "G4", "Note Duration without a preceding Note-On");
            after_position = false;
            break;
        default:
            after_position = false;
            break;
        }
    }
    close_dangling(group_start, /*at_end=*/true);
    return violations;
}

void write_tokens(std::ostream& out, const TokenSequence& seq) {
    const Vocabulary& vocab = vocabulary(seq.repr);
    out << "#tokens v1 " << repr_name(seq.repr) << "\n";
    for (int id : seq.ids) out << vocab.mnemonic(vocab.token_of(id)) << "\n";
}

TokenSequence read_tokens(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty token file");
    std::istringstream header(line);
    std::string magic, version, tag;
    header >> magic >> version >> tag;
    if (magic != "#tokens" || version != "v1")
        throw std::runtime_error("bad token file header: " + line);
    TokenSequence seq;
    seq.repr = parse_repr(tag);
    const Vocabulary& vocab = vocabulary(seq.repr);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        try {
            seq.ids.push_back(vocab.index_of(vocab.parse_mnemonic(line)));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return seq;
}

} // namespace remi::tok
