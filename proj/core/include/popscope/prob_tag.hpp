#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace popscope {

/// Probability sentinel written into every corpus line. A tag's target
/// frequency in percent equals its numeric value.
enum class ProbTag { Ten, Twenty, Thirty, Forty };

inline constexpr std::array<ProbTag, 4> kAllProbTags{ProbTag::Ten, ProbTag::Twenty,
                                                      ProbTag::Thirty, ProbTag::Forty};

constexpr std::string_view to_string(ProbTag tag) {
  switch (tag) {
    case ProbTag::Ten: return "ten";
    case ProbTag::Twenty: return "twenty";
    case ProbTag::Thirty: return "thirty";
    case ProbTag::Forty: return "forty";
  }
  return "";
}

constexpr std::optional<ProbTag> prob_tag_from_string(std::string_view s) {
  for (auto t : kAllProbTags) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

/// Target percentage: 10, 20, 30 or 40.
constexpr double expected_percent(ProbTag tag) {
  return 10.0 * (static_cast<int>(tag) + 1);
}

constexpr std::size_t index_of(ProbTag tag) { return static_cast<std::size_t>(tag); }

}  // namespace popscope
