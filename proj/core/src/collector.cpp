#include "popscope/collector.hpp"

#include <algorithm>
#include <set>

#include "popscope/error.hpp"
#include "popscope/store.hpp"

namespace popscope {

using nlohmann::json;

std::string_view to_string(SamplingMode mode) {
  return mode == SamplingMode::Uniform ? "uniform" : "proportional";
}

SamplingMode parse_sampling_mode(std::string_view text) {
  if (text == "uniform") return SamplingMode::Uniform;
  if (text == "proportional") return SamplingMode::Proportional;
  throw InvalidArgument("mode must be uniform or proportional, got '" + std::string(text) + "'");
}

void SamplingPolicy::validate() const {
  if (per_day_cap < 1) throw InvalidArgument("per_day_cap must be positive");
  if (overall_cap_per_keyword < 1) throw InvalidArgument("overall_cap_per_keyword must be positive");
  if (per_day_cap > overall_cap_per_keyword) {
    throw InvalidArgument("per_day_cap must not exceed overall_cap_per_keyword");
  }
}

Allocation plan_allocation(const std::map<std::string, DailyCounts>& counts,
                           const SamplingPolicy& policy) {
  policy.validate();
  Allocation out;
  if (counts.empty()) return out;

  const DailyCounts& reference = counts.begin()->second;
  std::int64_t max_count = 0;
  for (const auto& [keyword, days] : counts) {
    if (days.size() != reference.size() ||
        !std::equal(days.begin(), days.end(), reference.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw PlanError("keyword '" + keyword + "' covers different dates than '" +
                      counts.begin()->first + "'");
    }
    for (const auto& [day, n] : days) {
      if (n < 0) throw PlanError("negative count for '" + keyword + "' on " + format_date(day));
      max_count = std::max(max_count, n);
    }
  }
  for (std::size_t i = 1; i < reference.size(); ++i) {
    if (reference[i].first <= reference[i - 1].first) {
      throw PlanError("daily counts must be in ascending date order without repeats");
    }
  }

  // round_half_up(cap * n / M) == floor((2 * cap * n + M) / (2 * M))
  __extension__ using Wide = __int128;
  auto proportional = [&](std::int64_t n) {
    const Wide num = Wide{2} * policy.per_day_cap * n + max_count;
    return static_cast<std::int64_t>(num / (Wide{2} * max_count));
  };
  for (const auto& [keyword, days] : counts) {
    std::int64_t running = 0;
    for (const auto& [day, n] : days) {
      std::int64_t quota = 0;
      if (policy.mode == SamplingMode::Uniform) {
        quota = std::min(policy.per_day_cap, n);
      } else if (max_count > 0) {
        quota = std::min(n, proportional(n));
      }
      quota = std::min(quota, policy.overall_cap_per_keyword - running);
      running += quota;
      out[{keyword, day}] = quota;
    }
  }
  return out;
}

void CollectionJob::validate() const {
  if (keywords.empty()) throw InvalidArgument("keywords: at least one keyword is required");
  std::set<std::string> seen;
  for (const auto& k : keywords) {
    if (k.empty()) throw InvalidArgument("keywords: empty keyword");
    if (!seen.insert(k).second) throw InvalidArgument("keywords: '" + k + "' listed twice");
  }
  if (start_day > end_day) throw InvalidArgument("window start is after its end");
  filter.validate();
  policy.validate();
}

std::int64_t CollectionStats::total_stored() const {
  std::int64_t n = 0;
  for (const auto& [_, s] : per_keyword) n += s.stored;
  return n;
}

void to_json(json& j, const CollectionStats& s) {
  json per = json::object();
  for (const auto& [keyword, k] : s.per_keyword) {
    json failed = json::array();
    for (auto d : k.failed_days) failed.push_back(format_date(d));
    per[keyword] = {{"planned", k.planned},
                    {"fetched", k.fetched},
                    {"stored", k.stored},
                    {"duplicates", k.duplicates},
                    {"failed_days", failed},
                    {"failure_reasons", k.failure_reasons}};
  }
  json plan = json::object();
  for (const auto& [key, n] : s.plan) plan[key.first][format_date(key.second)] = n;
  j = json{{"per_keyword", per}, {"seed", s.seed}, {"plan", plan},
           {"total_stored", s.total_stored()}};
}

CollectionStats run_collection(Store& store, CountSource& counts, SearchClient& search,
                               const CollectionJob& job) {
  job.validate();
  std::map<std::string, DailyCounts> table;
  for (const auto& keyword : job.keywords) {
    CountSeries series = counts.counts(keyword, job.start_day, job.end_day);
    table[keyword] = series.daily;
  }

  CollectionStats stats;
  stats.seed = job.seed;
  stats.plan = plan_allocation(table, job.policy);

  for (const auto& keyword : job.keywords) {
    KeywordStats& ks = stats.per_keyword[keyword];
    for (const auto& [day, _] : table[keyword]) {
      const std::int64_t quota = stats.plan.at({keyword, day});
      ks.planned += quota;
      if (quota == 0) continue;
      try {
        auto posts = search.search(keyword, day, job.filter, static_cast<int>(quota));
        ks.fetched += static_cast<std::int64_t>(posts.size());
        auto r = store.upsert_posts(posts);
        ks.stored += r.inserted;
        ks.duplicates += r.duplicates;
      } catch (const StorageError&) {
        throw;
      } catch (const Error& e) {
        ks.failed_days.push_back(day);
        ks.failure_reasons[format_date(day)] = e.what();
      }
    }
  }
  return stats;
}

}  // namespace popscope
