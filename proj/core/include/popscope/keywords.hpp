#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/backends.hpp"
#include "popscope/time.hpp"

namespace popscope {

/// A search term the language model proposed.
struct KeywordCandidate {
  std::string surface;
  int ordinal = 1;  // position in the model's list
  std::string source_prompt;

  friend bool operator==(const KeywordCandidate&, const KeywordCandidate&) = default;
};

struct TrendReport {
  KeywordCandidate candidate;
  std::optional<CountSeries> series;  // empty when the count lookup failed
  std::optional<std::string> error;
};

struct ParsedList {
  std::vector<KeywordCandidate> candidates;
  std::size_t warnings = 0;  // list items that cleaned down to nothing, or no items at all
};

/// `topic:\n1)` with the colon added only when the topic does not already end in one.
std::string build_prompt(std::string_view topic_text);

/// Extracts keywords from a completion of build_prompt(). The completion is
/// read as if prefixed by the forced "1)". Never throws.
ParsedList parse_numbered_list(std::string_view completion, std::string_view source_prompt = {});

/// True when `surface` would be accepted as a KeywordCandidate surface.
bool is_clean_surface(std::string_view surface);

/// Prompts the completion backend `samples` times with build_prompt(topic) and
/// pools the parsed lists, dropping case-insensitive repeats. Ordinals are
/// renumbered 1..n in pooled order.
ParsedList suggest_keywords(CompletionClient& completion, std::string_view topic_text,
                            int samples = 1, GenerationParams params = {});

/// One count lookup per candidate, ranked by total descending (ties by
/// ordinal). A failed lookup yields a report with no series; those sort last.
std::vector<TrendReport> validate_keywords(const std::vector<KeywordCandidate>& candidates,
                                           Date start_day, Date end_day, CountSource& source);

/// The trailing window ending today: [today - 10 days, today].
std::pair<Date, Date> default_validation_window(Date today);

inline constexpr std::string_view kDefaultSearchUrl = "https://twitter.com/search";

/// One public search URL per day of the window, scoped to the keyword and that day.
std::vector<std::pair<Date, std::string>> context_urls(
    const KeywordCandidate& candidate, Date start_day, Date end_day,
    std::string_view base_url = kDefaultSearchUrl);

/// RFC 3986 percent-encoding; unreserved characters pass through.
std::string percent_encode(std::string_view text);

/// One keyword per non-empty line; ordinals follow line order.
std::vector<KeywordCandidate> read_candidates(std::string_view text);
std::string write_candidates(const std::vector<KeywordCandidate>& candidates);

void to_json(nlohmann::json& j, const KeywordCandidate& c);
void from_json(const nlohmann::json& j, KeywordCandidate& c);
void to_json(nlohmann::json& j, const TrendReport& r);

}  // namespace popscope
