#include "remi/metrics.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "remi/timegrid.hpp"

namespace remi::metrics {

namespace {

constexpr int kBeatsPerBar = 4;
constexpr int kPositionsPerBeat = 4;
constexpr double kDefaultBpm = 120.0;

// Per-beat BPM values from the Bar/Position/Tempo structure, walked
// leniently (tokens outside that structure are ignored).
std::vector<double> beat_bpms(const tok::TokenSequence& seq) {
    const auto& vocab = tok::vocabulary(tok::Repr::remi);
    std::map<int, double> tempo_at_beat;
    int bar = -1;
    int position = 1;
    std::optional<grid::TempoClass> pending_class;
    for (int id : seq.ids) {
        const tok::Token& token = vocab.token_of(id);
        switch (tok::kind_of(token)) {
        case tok::Kind::bar:
            ++bar;
            position = 1;
            pending_class.reset();
            break;
        case tok::Kind::position:
            position = std::get<tok::Position>(token).p;
            pending_class.reset();
            break;
        case tok::Kind::tempo_class:
            pending_class = std::get<tok::TempoClassTok>(token).cls;
            break;
        case tok::Kind::tempo_value:
            if (pending_class && bar >= 0) {
                int beat = bar * kBeatsPerBar + (position - 1) / kPositionsPerBeat;
                tempo_at_beat[beat] =
                    grid::bin_to_bpm({*pending_class, std::get<tok::TempoValue>(token).v});
            }
            pending_class.reset();
            break;
        default:
            pending_class.reset();
            break;
        }
    }
    int n_bars = bar + 1;
    std::vector<double> bpms;
    double bpm = kDefaultBpm;
    for (int beat = 0; beat < n_bars * kBeatsPerBar; ++beat) {
        if (auto it = tempo_at_beat.find(beat); it != tempo_at_beat.end()) bpm = it->second;
        bpms.push_back(bpm);
    }
    return bpms;
}

double population_std(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / values.size());
}

void require_grammatical(const tok::TokenSequence& seq) {
    auto violations = tok::validate_grammar(seq);
    if (!violations.empty())
        throw std::invalid_argument("ungrammatical sequence: " + violations.front().rule + " — " +
                                    violations.front().description);
}

} // namespace

std::vector<double> beat_times(const tok::TokenSequence& seq) {
    require_grammatical(seq);
    auto bpms = beat_bpms(seq);
    std::vector<double> times;
    double t = 0.0;
    for (double bpm : bpms) {
        times.push_back(t);
        t += 60.0 / bpm;
    }
    return times;
}

std::vector<double> downbeat_times(const tok::TokenSequence& seq) {
    auto beats = beat_times(seq);
    std::vector<double> downbeats;
    for (std::size_t i = 0; i < beats.size(); i += kBeatsPerBar) downbeats.push_back(beats[i]);
    return downbeats;
}

RhythmReport rhythm_report(const tok::TokenSequence& seq) {
    RhythmReport report;

    auto violations = tok::validate_grammar(seq);
    if (!seq.ids.empty()) {
        std::set<std::size_t> implicated;
        for (const auto& v : violations) implicated.insert(v.position);
        report.grammar_violation_rate = double(implicated.size()) / double(seq.ids.size());
    }

    auto bpms = beat_bpms(seq);
    report.n_beats = static_cast<int>(bpms.size());
    report.n_bars = report.n_beats / kBeatsPerBar;
    if (report.n_beats < 3) {
        report.too_short = true;
        return report;
    }

    std::vector<double> beat_intervals;
    beat_intervals.reserve(bpms.size());
    for (double bpm : bpms) beat_intervals.push_back(60.0 / bpm);
    report.beat_std = population_std(beat_intervals);

    std::vector<double> bar_intervals;
    for (int b = 0; b < report.n_bars; ++b) {
        double sum = 0.0;
        for (int i = 0; i < kBeatsPerBar; ++i)
            sum += beat_intervals[static_cast<std::size_t>(b) * kBeatsPerBar + i];
        bar_intervals.push_back(sum);
    }
    report.downbeat_std = population_std(bar_intervals);
    return report;
}

} // namespace remi::metrics
