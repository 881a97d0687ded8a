// Command-line front end: encode | decode | chords | train | generate | eval | stats.

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "remi/chords.hpp"
#include "remi/codec.hpp"
#include "remi/metrics.hpp"
#include "remi/midi_io.hpp"
#include "remi/model.hpp"
#include "remi/tokens.hpp"

namespace fs = std::filesystem;
using namespace remi;

namespace {

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// write-to-temp + rename so failures never leave partial output behind
void atomic_write(const fs::path& path, const std::string& contents) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

void emit_text(const std::string& out_path, const std::string& contents) {
    if (out_path.empty())
        std::cout << contents;
    else
        atomic_write(out_path, contents);
}

midi::Performance load_midi(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return midi::parse_smf(bytes);
}

tok::TokenSequence load_tokens(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return tok::read_tokens(in);
}

std::string tokens_to_text(const tok::TokenSequence& seq) {
    std::ostringstream out;
    tok::write_tokens(out, seq);
    return out.str();
}

bool is_midi_path(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".mid" || ext == ".midi";
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

// Mask grammar: `chord:<ROOT>_<QUAL>` excludes one chord symbol;
// `tempo-class:<low|mid|high>` forces a class by excluding the other two;
// `type:<token-kind>` excludes every index of that kind.
std::vector<int> resolve_mask(tok::Repr repr, const std::vector<std::string>& specs) {
    const auto& vocab = tok::vocabulary(repr);
    std::set<int> masked;
    for (const auto& spec : specs) {
        auto colon = spec.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("bad mask spec '" + spec +
                                     "' (expected chord:…, tempo-class:… or type:…)");
        std::string key = lower(spec.substr(0, colon));
        std::string value = spec.substr(colon + 1);
        if (key == "chord") {
            auto underscore = value.find('_');
            if (underscore == std::string::npos)
                throw std::runtime_error("bad chord mask '" + value + "' (expected ROOT_QUAL)");
            auto root = chords::parse_root(value.substr(0, underscore));
            auto quality = chords::parse_quality(value.substr(underscore + 1));
            if (!root || !quality)
                throw std::runtime_error("bad chord mask '" + value + "'");
            masked.insert(vocab.index_of(tok::Chord{{*root, *quality}}));
        } else if (key == "tempo-class") {
            grid::TempoClass keep;
            if (value == "low") keep = grid::TempoClass::low;
            else if (value == "mid") keep = grid::TempoClass::mid;
            else if (value == "high") keep = grid::TempoClass::high;
            else throw std::runtime_error("bad tempo-class mask '" + value + "'");
            for (auto cls : {grid::TempoClass::low, grid::TempoClass::mid, grid::TempoClass::high})
                if (cls != keep) masked.insert(vocab.index_of(tok::TempoClassTok{cls}));
        } else if (key == "type") {
            bool any = false;
            for (int i = 0; i < vocab.size(); ++i) {
                if (lower(tok::kind_name(vocab.kind_of_index(i))) == lower(value)) {
                    masked.insert(i);
                    any = true;
                }
            }
            if (!any)
                throw std::runtime_error("mask type '" + value + "' matches no token in this vocabulary");
        } else {
            throw std::runtime_error("unknown mask key '" + key + "'");
        }
    }
    return {masked.begin(), masked.end()};
}

codec::EncodeOptions options_for(tok::Repr repr, bool with_tempo, bool with_chord) {
    codec::EncodeOptions opts;
    opts.with_tempo = with_tempo;
    opts.with_chord = with_chord;
    switch (repr) {
    case tok::Repr::midilike_v1: opts.baseline_variant = 1; break;
    case tok::Repr::midilike_v2: opts.baseline_variant = 2; break;
    case tok::Repr::midilike_v3: opts.baseline_variant = 3; break;
    default: break;
    }
    return opts;
}

tok::TokenSequence encode_file(const std::string& path, tok::Repr repr,
                               const codec::EncodeOptions& opts) {
    midi::Performance perf = load_midi(path);
    if (repr == tok::Repr::remi) return codec::encode_remi(grid::quantize(perf, {}), opts);
    if (repr == tok::Repr::midilike_v3)
        return codec::encode_midilike(grid::quantize(perf, {}), opts);
    return codec::encode_midilike(perf, opts);
}

midi::Performance decode_sequence(const tok::TokenSequence& seq,
                                  std::vector<std::string>* warnings) {
    if (seq.repr == tok::Repr::remi) return codec::dequantize(codec::decode_remi(seq));
    auto result = codec::decode_midilike(seq);
    if (warnings) *warnings = std::move(result.warnings);
    return result.perf;
}

std::vector<fs::path> corpus_files(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".tokens")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

struct LengthHistogram {
    std::map<std::size_t, int> buckets; // bucket start -> count, width 256

    void add(std::size_t n) { ++buckets[n / 256 * 256]; }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Beat-based music token pipeline: MIDI <-> tokens, chords, "
                 "training, constrained sampling, rhythm metrics"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Key-value config file; command-line flags override it");

    // ---- encode ----
    std::string enc_in, enc_out, enc_repr = "remi";
    bool enc_tempo = true, enc_chord = false;
    auto* enc = app.add_subcommand("encode", "MIDI file -> token text");
    enc->add_option("input", enc_in, "input .mid")->required();
    enc->add_option("-o,--output", enc_out, "output token file (default stdout)");
    enc->add_option("--repr", enc_repr, "remi | midilike-v1 | midilike-v2 | midilike-v3");
    enc->add_flag("--tempo,!--no-tempo", enc_tempo, "emit per-beat tempo tokens (remi)");
    enc->add_flag("--chord", enc_chord, "emit recognized chord tokens (remi)");

    // ---- decode ----
    std::string dec_in, dec_out;
    auto* dec = app.add_subcommand("decode", "token text -> MIDI file");
    dec->add_option("input", dec_in, "input token file")->required();
    dec->add_option("-o,--output", dec_out, "output .mid")->required();

    // ---- chords ----
    std::string ch_in, ch_out;
    auto* ch = app.add_subcommand("chords", "MIDI file -> chord segments");
    ch->add_option("input", ch_in, "input .mid")->required();
    ch->add_option("-o,--output", ch_out, "output file (default stdout)");

    // ---- train ----
    std::string tr_dir, tr_out, tr_loss_log;
    model::ModelConfig tr_cfg;
    model::TrainOptions tr_opts;
    std::uint64_t tr_seed = 1;
    auto* tr = app.add_subcommand("train", "token corpus directory -> checkpoint");
    tr->add_option("--corpus", tr_dir, "directory of .tokens files")->required();
    tr->add_option("-o,--output", tr_out, "checkpoint file")->required();
    tr->add_option("--loss-log", tr_loss_log, "per-event-type loss TSV (default stdout)");
    tr->add_option("--steps", tr_opts.max_steps, "max optimizer steps");
    tr->add_option("--lr", tr_opts.learning_rate, "learning rate");
    tr->add_option("--warmup", tr_opts.warmup_steps, "linear warmup steps");
    tr->add_option("--target-loss", tr_opts.target_loss, "stop once epoch mean loss is below");
    tr->add_option("--layers", tr_cfg.n_layers, "transformer layers");
    tr->add_option("--heads", tr_cfg.n_heads, "attention heads");
    tr->add_option("--d-model", tr_cfg.d_model, "model width");
    tr->add_option("--ffn-dim", tr_cfg.ffn_dim, "feed-forward width");
    tr->add_option("--segment-len", tr_cfg.segment_len, "training segment length T");
    tr->add_option("--memory-len", tr_cfg.memory_len, "recurrence memory length L");
    tr->add_option("--seed", tr_seed, "initialization seed");
    tr->add_flag("--verbose", tr_opts.verbose, "log epoch losses to stderr");

    // ---- generate ----
    std::string gen_model, gen_prompt, gen_out, gen_midi;
    int gen_prompt_bars = 4;
    model::SampleOptions gen_opts;
    std::vector<std::string> gen_masks;
    auto* gen = app.add_subcommand("generate", "checkpoint (+ optional MIDI prompt) -> tokens");
    gen->add_option("--model", gen_model, "checkpoint file")->required();
    gen->add_option("--prompt", gen_prompt, "MIDI prompt; its first bars seed the continuation");
    gen->add_option("--prompt-bars", gen_prompt_bars, "bars taken from the prompt");
    gen->add_option("-o,--output", gen_out, "output token file (default stdout)");
    gen->add_option("--midi", gen_midi, "also decode the result to this .mid");
    gen->add_option("--temperature", gen_opts.temperature, "sampling temperature (<1e-6 = argmax)");
    gen->add_option("--top-k", gen_opts.top_k, "sample from the k most probable tokens");
    gen->add_option("--max-tokens", gen_opts.max_tokens, "tokens to generate");
    gen->add_option("--mask", gen_masks, "forbid tokens: chord:F_min | tempo-class:high | type:chord");
    gen->add_option("--seed", gen_opts.seed, "sampling seed");

    // ---- eval ----
    std::vector<std::string> ev_inputs;
    std::string ev_out;
    auto* ev = app.add_subcommand("eval", "token/MIDI files -> rhythm report TSV");
    ev->add_option("inputs", ev_inputs, "token or .mid files")->required();
    ev->add_option("-o,--output", ev_out, "output TSV (default stdout)");

    // ---- stats ----
    std::string st_dir, st_out;
    std::vector<std::string> st_inputs;
    auto* st = app.add_subcommand("stats", "corpus -> vocabulary coverage and length histogram");
    st->add_option("--corpus", st_dir, "directory of .tokens files");
    st->add_option("inputs", st_inputs, "token files");
    st->add_option("-o,--output", st_out, "output file (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*enc) {
            tok::Repr repr = tok::parse_repr(enc_repr);
            auto seq = encode_file(enc_in, repr, options_for(repr, enc_tempo, enc_chord));
            emit_text(enc_out, tokens_to_text(seq));
        } else if (*dec) {
            auto seq = load_tokens(dec_in);
            std::vector<std::string> warnings;
            auto perf = decode_sequence(seq, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
            auto bytes = midi::write_smf(perf);
            atomic_write(dec_out, std::string(bytes.begin(), bytes.end()));
        } else if (*ch) {
            auto qs = grid::quantize(load_midi(ch_in), {});
            std::ostringstream out;
            for (const auto& seg : chords::recognize_chords(qs)) {
                int bar = seg.start_beat / qs.grid.beats_per_bar;
                int beat = seg.start_beat % qs.grid.beats_per_bar;
                out << bar << "." << beat << " " << seg.length_beats << " "
                    << chords::label_name(seg.label) << " " << seg.score << "\n";
            }
            emit_text(ch_out, out.str());
        } else if (*tr) {
            std::vector<tok::TokenSequence> corpus;
            for (const auto& path : corpus_files(tr_dir)) corpus.push_back(load_tokens(path.string()));
            if (corpus.empty()) throw std::runtime_error("empty corpus in " + tr_dir);
            tr_cfg.seed = tr_seed;
            auto result = model::train(corpus, tr_cfg, tr_opts);

            std::ostringstream log;
            log << "#losslog v1\nepoch\ttoken_kind\tmean_loss\n";
            for (std::size_t epoch = 0; epoch < result.per_type_loss.size(); ++epoch)
                for (const auto& [kind, loss] : result.per_type_loss[epoch])
                    log << (epoch + 1) << "\t" << kind << "\t" << loss << "\n";
            emit_text(tr_loss_log, log.str());

            std::ostringstream ckpt;
            model::save_checkpoint(ckpt, result.params, corpus.front().repr);
            atomic_write(tr_out, ckpt.str());
            std::cerr << "trained " << result.steps_run << " steps, final segment loss "
                      << (result.step_loss.empty() ? 0.0 : result.step_loss.back()) << "\n";
        } else if (*gen) {
            std::ifstream in(gen_model, std::ios::binary);
            if (!in) throw std::runtime_error("cannot open " + gen_model);
            auto ckpt = model::load_checkpoint(in);

            tok::TokenSequence prompt{ckpt.repr, {}};
            if (!gen_prompt.empty()) {
                if (ckpt.repr != tok::Repr::remi)
                    throw std::runtime_error("MIDI prompts require a remi-representation model");
                auto qs = grid::quantize(load_midi(gen_prompt), {});
                grid::QuantizedScore head;
                head.grid = qs.grid;
                for (const auto& n : qs.notes)
                    if (n.bar < gen_prompt_bars) head.notes.push_back(n);
                int beats = std::min<int>(gen_prompt_bars * qs.grid.beats_per_bar,
                                          static_cast<int>(qs.beat_tempi.size()));
                head.beat_tempi.assign(qs.beat_tempi.begin(), qs.beat_tempi.begin() + beats);
                prompt = codec::encode_remi(head, {});
            } else if (ckpt.repr == tok::Repr::remi) {
                prompt.ids.push_back(tok::vocabulary(ckpt.repr).index_of(tok::Bar{}));
            } else {
                prompt.ids.push_back(0);
            }

            gen_opts.masked_indices = resolve_mask(ckpt.repr, gen_masks);
            auto seq = model::sample(ckpt.params, prompt, gen_opts);
            emit_text(gen_out, tokens_to_text(seq));
            if (!gen_midi.empty()) {
                auto perf = decode_sequence(seq, nullptr);
                auto bytes = midi::write_smf(perf);
                atomic_write(gen_midi, std::string(bytes.begin(), bytes.end()));
            }
        } else if (*ev) {
            std::ostringstream out;
            out << "#eval v1\nfile\tbeat_std\tdownbeat_std\tn_beats\tn_bars\tviolation_rate\n";
            double sum_beat = 0, sum_down = 0, sum_rate = 0;
            for (const auto& path : ev_inputs) {
                tok::TokenSequence seq = is_midi_path(path)
                                             ? encode_file(path, tok::Repr::remi, {})
                                             : load_tokens(path);
                if (seq.repr != tok::Repr::remi)
                    throw std::runtime_error(path + ": rhythm metrics need the remi representation");
                auto report = metrics::rhythm_report(seq);
                out << path << "\t" << report.beat_std << "\t" << report.downbeat_std << "\t"
                    << report.n_beats << "\t" << report.n_bars << "\t"
                    << report.grammar_violation_rate << "\n";
                sum_beat += report.beat_std;
                sum_down += report.downbeat_std;
                sum_rate += report.grammar_violation_rate;
            }
            auto n = double(ev_inputs.size());
            out << "average\t" << sum_beat / n << "\t" << sum_down / n << "\t-\t-\t"
                << sum_rate / n << "\n";
            emit_text(ev_out, out.str());
        } else if (*st) {
            std::vector<std::string> paths = st_inputs;
            if (!st_dir.empty())
                for (const auto& p : corpus_files(st_dir)) paths.push_back(p.string());
            if (paths.empty()) throw std::runtime_error("no input token files");

            std::optional<tok::Repr> repr;
            std::set<int> used;
            std::map<std::string, std::int64_t> kind_counts;
            LengthHistogram hist;
            std::int64_t total = 0;
            for (const auto& path : paths) {
                auto seq = load_tokens(path);
                if (repr && *repr != seq.repr)
                    throw std::runtime_error(path + ": representation differs from earlier inputs");
                repr = seq.repr;
                const auto& vocab = tok::vocabulary(seq.repr);
                for (int id : seq.ids) {
                    used.insert(id);
                    ++kind_counts[tok::kind_name(vocab.kind_of_index(id))];
                }
                hist.add(seq.ids.size());
                total += static_cast<std::int64_t>(seq.ids.size());
            }
            const auto& vocab = tok::vocabulary(*repr);
            std::ostringstream out;
            out << "#stats v1\n";
            out << "repr\t" << tok::repr_name(*repr) << "\n";
            out << "sequences\t" << paths.size() << "\n";
            out << "tokens\t" << total << "\n";
            out << "vocab_coverage\t" << used.size() << "/" << vocab.size() << "\n";
            for (const auto& [kind, count] : kind_counts)
                out << "kind\t" << kind << "\t" << count << "\n";
            for (const auto& [start, count] : hist.buckets)
                out << "length\t" << start << ".." << (start + 255) << "\t" << count << "\n";
            emit_text(st_out, out.str());
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
