#include "remi/chord_types.hpp"

#include <array>

namespace remi::chords {

namespace {
constexpr std::array<const char*, 12> kRootNames = {"C",  "C#", "D",  "D#", "E",  "F",
                                                    "F#", "G",  "G#", "A",  "A#", "B"};
constexpr std::array<const char*, 5> kQualityNames = {"maj", "min", "dim", "aug", "dom"};
} // namespace

std::string quality_name(Quality q) { return kQualityNames[static_cast<int>(q)]; }

std::string root_name(int pitch_class) {
    return kRootNames[((pitch_class % 12) + 12) % 12];
}

std::string label_name(const std::optional<ChordLabel>& label) {
    if (!label) return "N_N";
    return root_name(label->root) + "_" + quality_name(label->quality);
}

std::optional<Quality> parse_quality(const std::string& s) {
    for (int i = 0; i < 5; ++i)
        if (s == kQualityNames[i]) return static_cast<Quality>(i);
    return std::nullopt;
}

std::optional<int> parse_root(const std::string& s) {
    for (int i = 0; i < 12; ++i)
        if (s == kRootNames[i]) return i;
    return std::nullopt;
}

} // namespace remi::chords
