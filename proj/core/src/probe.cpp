#include "popscope/probe.hpp"

#include <algorithm>
#include <cmath>

#include "popscope/corpus.hpp"
#include "popscope/error.hpp"

namespace popscope {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> ProbeSpec::split_probes(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    auto item = trim(text.substr(pos, comma - pos));
    if (!item.empty()) out.emplace_back(item);
    pos = comma + 1;
  }
  return out;
}

void ProbeSpec::validate() const {
  if (probes.empty()) throw InvalidArgument("probes: at least one probe is required");
  for (const auto& p : probes) {
    if (trim(p).empty()) throw InvalidArgument("probes: empty probe");
  }
  if (samples_per_probe < 1) throw InvalidArgument("samples_per_probe must be positive");
  GenerationParams chunk = params;
  chunk.sample_count = 1;
  chunk.validate();
}

void to_json(json& j, const ProbeSpec& s) {
  j = json{{"probes", s.probes}, {"params", s.params}, {"samples_per_probe", s.samples_per_probe}};
}

void from_json(const json& j, ProbeSpec& s) {
  if (j.contains("probes")) {
    const auto& p = j.at("probes");
    s.probes = p.is_string() ? ProbeSpec::split_probes(p.get<std::string>())
                             : p.get<std::vector<std::string>>();
  }
  if (j.contains("params")) s.params = j.at("params").get<GenerationParams>();
  s.samples_per_probe = j.value("samples_per_probe", kDefaultSamplesPerProbe);
}

std::string probe_prompt(std::string_view probe) {
  return "[[text: " + escape_meta_value(probe);
}

std::optional<ProbTag> parse_generation(std::string_view probe, std::string_view generation) {
  const std::string full = probe_prompt(probe) + std::string(generation);
  auto end = find_record_end(full, 2);
  if (!end) return std::nullopt;
  try {
    return parse_meta_record(std::string_view(full).substr(0, *end)).prob;
  } catch (const MetaParseError&) {
    return std::nullopt;
  }
}

void to_json(json& j, const ProbeRunResult& r) {
  j = json{{"probe_run_id", r.probe_run_id},
           {"rows", r.rows},
           {"parsed", r.parsed},
           {"backend_failures", r.backend_failures}};
}

ProbeRunResult run_probes(Store& store, CompletionClient& completion, const ProbeSpec& spec,
                          Timestamp created_at) {
  spec.validate();
  ProbeRunResult result;
  std::int64_t next = store.probe_run_count() + 1;
  do {
    result.probe_run_id = "probe-" + std::to_string(next++);
  } while (store.probe_run(result.probe_run_id));
  store.create_probe_run({result.probe_run_id, json(spec), created_at, std::nullopt});

  for (const auto& probe : spec.probes) {
    const std::string prompt = probe_prompt(probe);
    int remaining = spec.samples_per_probe;
    while (remaining > 0) {
      GenerationParams params = spec.params;
      params.sample_count = std::min(remaining, kMaxSampleCount);
      remaining -= params.sample_count;
      std::vector<std::string> generations;
      try {
        generations = completion.complete(prompt, params);
      } catch (const Error&) {
        ++result.backend_failures;
        continue;
      }
      for (auto& g : generations) {
        ProbeRow row;
        row.probe_run_id = result.probe_run_id;
        row.probe_text = probe;
        row.prob_tag = parse_generation(probe, g);
        row.parsed_ok = row.prob_tag.has_value();
        row.generated_text = std::move(g);
        row.created_at = created_at;
        store.add_probe_row(row);
        ++result.rows;
        if (row.parsed_ok) ++result.parsed;
      }
    }
  }
  return result;
}

void to_json(json& j, const DeviationReport& r) {
  json per_tag = json::object();
  json counts = json::object();
  for (auto t : kAllProbTags) {
    const auto& d = r.per_tag[index_of(t)];
    per_tag[std::string(to_string(t))] = {{"expected_pct", d.expected_pct},
                                          {"observed_pct", d.observed_pct},
                                          {"deviation_pct", d.deviation_pct}};
    counts[std::string(to_string(t))] = r.counts[index_of(t)];
  }
  j = json{{"probe_run_id", r.probe_run_id},
           {"per_tag", per_tag},
           {"counts", counts},
           {"max_abs_deviation_pct", r.max_abs_deviation_pct},
           {"parse_failures", r.parse_failures},
           {"total", r.total},
           {"threshold_pct", r.threshold_pct},
           {"passed", r.passed},
           {"unreliable", r.unreliable}};
}

DeviationReport compute_deviation(const std::string& probe_run_id,
                                  const std::vector<ProbeRow>& rows, double threshold_pct) {
  if (!(threshold_pct >= 0.0) || !std::isfinite(threshold_pct)) {
    throw InvalidArgument("threshold must be a non-negative number");
  }
  DeviationReport r;
  r.probe_run_id = probe_run_id;
  r.threshold_pct = threshold_pct;
  r.total = static_cast<std::int64_t>(rows.size());
  for (const auto& row : rows) {
    if (row.parsed_ok && row.prob_tag) {
      ++r.counts[index_of(*row.prob_tag)];
    } else {
      ++r.parse_failures;
    }
  }
  const std::int64_t parsed = r.total - r.parse_failures;
  if (parsed == 0) {
    throw InsufficientData("probe run '" + probe_run_id + "' has no parsed generations");
  }
  for (auto t : kAllProbTags) {
    auto& d = r.per_tag[index_of(t)];
    d.expected_pct = expected_percent(t);
    d.observed_pct = 100.0 * static_cast<double>(r.counts[index_of(t)]) / static_cast<double>(parsed);
    d.deviation_pct = d.observed_pct - d.expected_pct;
    r.max_abs_deviation_pct = std::max(r.max_abs_deviation_pct, std::abs(d.deviation_pct));
  }
  r.passed = r.max_abs_deviation_pct <= threshold_pct;
  r.unreliable = 2 * r.parse_failures > r.total;
  return r;
}

DeviationReport sanity_check(Store& store, const std::string& probe_run_id, double threshold_pct) {
  if (!store.probe_run(probe_run_id)) throw NotFound("probe run '" + probe_run_id + "'");
  auto report = compute_deviation(probe_run_id, store.probe_rows(probe_run_id), threshold_pct);
  store.set_probe_report(probe_run_id, json(report));
  return report;
}

std::array<std::int64_t, 4> tag_distribution(Store& store, const std::string& probe_run_id) {
  if (!store.probe_run(probe_run_id)) throw NotFound("probe run '" + probe_run_id + "'");
  std::array<std::int64_t, 4> counts{};
  for (const auto& row : store.probe_rows(probe_run_id)) {
    if (row.parsed_ok && row.prob_tag) ++counts[index_of(*row.prob_tag)];
  }
  return counts;
}

}  // namespace popscope
