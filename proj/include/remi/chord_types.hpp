#pragma once

#include <array>
#include <optional>
#include <string>

namespace remi::chords {

enum class Quality { major, minor, diminished, augmented, dominant };

constexpr std::array<Quality, 5> kQualities = {
    Quality::major, Quality::minor, Quality::diminished, Quality::augmented,
    Quality::dominant};

struct ChordLabel {
    int root = 0; // pitch class 0..11, 0 = C
    Quality quality = Quality::major;

    bool operator==(const ChordLabel&) const = default;
};

std::string quality_name(Quality q);                 // "maj", "min", "dim", "aug", "dom"
std::string root_name(int pitch_class);              // "C", "C#", ..., "B"
std::string label_name(const std::optional<ChordLabel>& label); // "C_maj", "N_N" for none
std::optional<Quality> parse_quality(const std::string& s);
std::optional<int> parse_root(const std::string& s);

} // namespace remi::chords
