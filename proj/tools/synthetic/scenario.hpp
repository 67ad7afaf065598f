#pragma once

// The exotic-pets walk through the pipeline, as CLI argument lists. Recording
// it produces the shipped fixtures; replaying it is the end-to-end check.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/time.hpp"

namespace popscope::synthetic {

inline Timestamp kRecordedAt() { return *try_parse_timestamp("2022-12-28 00:00:00"); }

inline constexpr std::string_view kTopic = "exotic pets";
inline constexpr std::string_view kListTopic = "Here's a short list of exotic pets";
inline constexpr int kCollectedKeywords = 3;
inline constexpr std::string_view kDayCap = "12";
inline constexpr std::string_view kKeywordCap = "100";
inline constexpr std::string_view kProbes = "Ivermectin, Paxlovid";
inline constexpr std::string_view kProbeSamples = "50";

struct Step {
  std::vector<std::string> args;
  std::function<void(const nlohmann::json&)> after;  // may write files later steps read
};

/// Steps that reach a backend, in order. Files go under `work`.
inline std::vector<Step> exotic_pets_steps(const std::filesystem::path& work) {
  const std::string candidates = (work / "candidates.txt").string();
  const std::string keywords = (work / "keywords.txt").string();
  return {
      {{"keywords", "suggest", "--topic", std::string(kListTopic)}, {}},
      {{"keywords", "suggest", "--topic", std::string(kTopic), "--out", candidates}, {}},
      {{"keywords", "validate", "--in", candidates, "--from", "2022-12-17", "--to", "2022-12-27"},
       [keywords](const nlohmann::json& r) {
         // Keep the best-supported keywords, as a user would after reading the table.
         std::ofstream out(keywords);
         int kept = 0;
         for (const auto& rep : r.at("reports")) {
           if (kept == kCollectedKeywords || rep.at("series").is_null()) break;
           out << rep.at("candidate").at("surface").get<std::string>() << '\n';
           ++kept;
         }
       }},
      {{"collect", "--keywords", keywords, "--from", "2022-12-17", "--to", "2022-12-27", "--mode",
        "uniform", "--day-cap", std::string(kDayCap), "--keyword-cap", std::string(kKeywordCap),
        "--lang", "en"},
       {}},
      {{"embed"}, {}},
      {{"probe", "run", "--probes", std::string(kProbes), "--samples", std::string(kProbeSamples)}, {}},
  };
}

}  // namespace popscope::synthetic
