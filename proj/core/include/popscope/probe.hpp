#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/backends.hpp"
#include "popscope/prob_tag.hpp"
#include "popscope/store.hpp"

namespace popscope {

inline constexpr int kDefaultSamplesPerProbe = 100;
inline constexpr double kDefaultDeviationThreshold = 5.0;

struct ProbeSpec {
  std::vector<std::string> probes;
  GenerationParams params;
  int samples_per_probe = kDefaultSamplesPerProbe;

  /// Splits on commas, trims whitespace and drops empty entries.
  static std::vector<std::string> split_probes(std::string_view comma_separated);
  void validate() const;
};

void to_json(nlohmann::json& j, const ProbeSpec& s);
void from_json(const nlohmann::json& j, ProbeSpec& s);

/// `[[text: <escaped probe>`
std::string probe_prompt(std::string_view probe);

/// Re-attaches the prompt to a generation, cuts at the first unescaped `]]`
/// and parses the result. nullopt on any failure.
std::optional<ProbTag> parse_generation(std::string_view probe, std::string_view generation);

struct ProbeRunResult {
  std::string probe_run_id;
  std::int64_t rows = 0;
  std::int64_t parsed = 0;
  std::int64_t backend_failures = 0;  // failed requests, not samples
};

void to_json(nlohmann::json& j, const ProbeRunResult& r);

/// Requests samples_per_probe generations per probe (in chunks of at most
/// kMaxSampleCount) and stores every one as a ProbeRow. A failing request
/// is counted and the run carries on.
ProbeRunResult run_probes(Store& store, CompletionClient& completion, const ProbeSpec& spec,
                          Timestamp created_at);

struct TagDeviation {
  double expected_pct = 0;
  double observed_pct = 0;
  double deviation_pct = 0;
};

struct DeviationReport {
  std::string probe_run_id;
  std::array<TagDeviation, 4> per_tag{};
  std::array<std::int64_t, 4> counts{};
  double max_abs_deviation_pct = 0;
  std::int64_t parse_failures = 0;
  std::int64_t total = 0;
  double threshold_pct = kDefaultDeviationThreshold;
  bool passed = false;
  bool unreliable = false;  // more than half the generations failed to parse
};

void to_json(nlohmann::json& j, const DeviationReport& r);

/// Pure: derived from the rows alone. Throws InsufficientData when nothing parsed.
DeviationReport compute_deviation(const std::string& probe_run_id,
                                  const std::vector<ProbeRow>& rows, double threshold_pct);

/// compute_deviation over the stored rows, then persisted on the run.
DeviationReport sanity_check(Store& store, const std::string& probe_run_id,
                             double threshold_pct = kDefaultDeviationThreshold);

/// Per-tag counts over parsed rows. Throws NotFound for an unknown run.
std::array<std::int64_t, 4> tag_distribution(Store& store, const std::string& probe_run_id);

}  // namespace popscope
