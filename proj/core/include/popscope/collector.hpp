#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/backends.hpp"
#include "popscope/post.hpp"
#include "popscope/time.hpp"

namespace popscope {

class Store;

enum class SamplingMode { Uniform, Proportional };
std::string_view to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(std::string_view text);

struct SamplingPolicy {
  SamplingMode mode = SamplingMode::Uniform;
  std::int64_t per_day_cap = 100;
  std::int64_t overall_cap_per_keyword = 1000;

  void validate() const;
};

using DailyCounts = std::vector<std::pair<Date, std::int64_t>>;
using Allocation = std::map<std::pair<std::string, Date>, std::int64_t>;

/// Per-(keyword, day) quota. Uniform: min(cap, count). Proportional:
/// min(count, round_half_up(cap * count / M)) with M the largest count in the
/// table. Each keyword's days are then clipped in date order so the running
/// total never exceeds the overall cap. Every keyword must cover the same
/// dates, else PlanError.
Allocation plan_allocation(const std::map<std::string, DailyCounts>& counts,
                           const SamplingPolicy& policy);

struct CollectionJob {
  std::vector<std::string> keywords;
  Date start_day{};
  Date end_day{};
  CollectFilter filter;
  SamplingPolicy policy;
  std::uint64_t seed = 0;

  void validate() const;
};

struct KeywordStats {
  std::int64_t planned = 0;
  std::int64_t fetched = 0;
  std::int64_t stored = 0;
  std::int64_t duplicates = 0;
  std::vector<Date> failed_days;
  std::map<std::string, std::string> failure_reasons;  // day -> message
};

struct CollectionStats {
  std::map<std::string, KeywordStats> per_keyword;
  std::uint64_t seed = 0;
  Allocation plan;

  std::int64_t total_stored() const;
};

void to_json(nlohmann::json& j, const CollectionStats& s);

/// Counts for every keyword, then plan_allocation, then one search per
/// (keyword, day) with a positive quota. Keywords run in the given order, so
/// a post found under two keywords is stored under the first and counted as
/// a duplicate under the second. A failing day is recorded and skipped.
CollectionStats run_collection(Store& store, CountSource& counts, SearchClient& search,
                               const CollectionJob& job);

}  // namespace popscope
