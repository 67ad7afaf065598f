#include "popscope/keywords.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <set>

#include "popscope/error.hpp"

namespace popscope {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

struct Marker {
  std::size_t begin;
  std::size_t end;
  int number;
};

// An item marker is 1-3 digits, preceded by start/whitespace/','/';', and
// followed by ')' or by '.'/':' plus whitespace (so "3.5" and "10:30" are text).
std::vector<Marker> find_markers(std::string_view text) {
  std::vector<Marker> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_digit(text[i])) continue;
    if (i > 0) {
      char prev = text[i - 1];
      if (!(is_space(prev) || prev == ',' || prev == ';')) continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_digit(text[j]) && j - i < 4) ++j;
    if (j - i > 3 || j >= text.size()) {
      i = j;
      continue;
    }
    char term = text[j];
    bool ok = term == ')' ||
              ((term == '.' || term == ':') && (j + 1 == text.size() || is_space(text[j + 1])));
    if (ok) {
      out.push_back({i, j + 1, std::stoi(std::string(text.substr(i, j - i)))});
      i = j;
    }
  }
  return out;
}

bool ends_with_word(std::string_view s, std::string_view word) {
  if (s.size() < word.size()) return false;
  auto tail = s.substr(s.size() - word.size());
  if (fold(tail) != word) return false;
  return s.size() == word.size() || is_space(s[s.size() - word.size() - 1]);
}

// Trims whitespace, trailing ",.;" and a dangling "and"/"or" until stable.
std::string clean_item(std::string_view raw) {
  std::string_view s = raw;
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  if (auto nl = s.find_first_of("\r\n"); nl != std::string_view::npos) s = s.substr(0, nl);
  for (;;) {
    std::string_view before = s;
    s = trim(s);
    while (!s.empty() && (s.back() == ',' || s.back() == '.' || s.back() == ';')) s.remove_suffix(1);
    for (std::string_view w : {"and", "or"}) {
      if (ends_with_word(s, w)) s.remove_suffix(w.size());
    }
    if (s == before) break;
  }
  return std::string(s);
}

}  // namespace

std::string build_prompt(std::string_view topic_text) {
  if (topic_text.empty()) throw InvalidArgument("prompt topic must be non-empty");
  std::string out(topic_text);
  if (out.back() != ':') out.push_back(':');
  out += "\n1)";
  return out;
}

bool is_clean_surface(std::string_view surface) {
  if (surface.empty()) return false;
  if (is_space(surface.front()) || is_space(surface.back())) return false;
  char last = surface.back();
  if (last == ',' || last == '.' || last == ';') return false;
  if (surface.find_first_of("\r\n") != std::string_view::npos) return false;
  // Leading list numbering such as "4)" or "4. ".
  std::size_t j = 0;
  while (j < surface.size() && is_digit(surface[j])) ++j;
  if (j > 0 && j < surface.size()) {
    char term = surface[j];
    if (term == ')') return false;
    if ((term == '.' || term == ':') && (j + 1 == surface.size() || is_space(surface[j + 1]))) {
      return false;
    }
  }
  return true;
}

ParsedList parse_numbered_list(std::string_view completion, std::string_view source_prompt) {
  // A completion that restates the leading marker is taken as-is.
  std::string_view lead = completion;
  while (!lead.empty() && is_space(lead.front())) lead.remove_prefix(1);
  auto lead_markers = find_markers(lead.substr(0, 3));
  const bool restated = !lead_markers.empty() && lead_markers.front().begin == 0 &&
                        lead_markers.front().number == 1;
  const std::string text = restated ? std::string(lead) : "1)" + std::string(completion);
  const auto markers = find_markers(text);

  struct Item {
    std::string raw;
    int ordinal;
  };
  std::vector<Item> items;
  for (std::size_t k = 0; k < markers.size(); ++k) {
    std::size_t end = k + 1 < markers.size() ? markers[k + 1].begin : text.size();
    items.push_back({text.substr(markers[k].end, end - markers[k].end), markers[k].number});
  }

  // With no numbering past the forced "1)", the model may have continued the
  // first item as a comma-separated list on the same line.
  if (items.size() == 1) {
    std::string_view line = items[0].raw;
    while (!line.empty() && is_space(line.front())) line.remove_prefix(1);
    line = line.substr(0, line.find_first_of("\r\n"));
    if (line.find(',') != std::string_view::npos) {
      std::vector<Item> split;
      std::size_t start = 0;
      int ordinal = 1;
      while (start <= line.size()) {
        auto comma = line.find(',', start);
        auto piece = line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                        : comma - start);
        auto t = trim(piece);
        for (std::string_view w : {"and ", "or "}) {
          if (t.size() > w.size() && fold(t.substr(0, w.size())) == w) t.remove_prefix(w.size());
        }
        split.push_back({std::string(t), ordinal++});
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      items = std::move(split);
    }
  }

  ParsedList out;
  std::set<std::string> seen;
  for (const auto& item : items) {
    std::string surface = clean_item(item.raw);
    if (!is_clean_surface(surface)) {
      ++out.warnings;
      continue;
    }
    if (!seen.insert(fold(surface)).second) continue;
    out.candidates.push_back({std::move(surface), std::max(item.ordinal, 1),
                              std::string(source_prompt)});
  }
  if (out.candidates.empty() && out.warnings == 0) out.warnings = 1;
  return out;
}

ParsedList suggest_keywords(CompletionClient& completion, std::string_view topic_text, int samples,
                            GenerationParams params) {
  if (samples < 1) throw InvalidArgument("samples must be >= 1");
  const std::string prompt = build_prompt(topic_text);
  params.sample_count = samples;
  auto texts = completion.complete(prompt, params);

  ParsedList pooled;
  std::set<std::string> seen;
  for (const auto& t : texts) {
    auto parsed = parse_numbered_list(t, prompt);
    pooled.warnings += parsed.warnings;
    for (auto& c : parsed.candidates) {
      if (!seen.insert(fold(c.surface)).second) continue;
      c.ordinal = static_cast<int>(pooled.candidates.size()) + 1;
      pooled.candidates.push_back(std::move(c));
    }
  }
  return pooled;
}

std::vector<TrendReport> validate_keywords(const std::vector<KeywordCandidate>& candidates,
                                           Date start_day, Date end_day, CountSource& source) {
  if (candidates.empty()) throw InvalidArgument("no keyword candidates to validate");
  if (start_day > end_day) throw InvalidArgument("validation window starts after it ends");

  std::vector<std::future<TrendReport>> pending;
  pending.reserve(candidates.size());
  for (const auto& c : candidates) {
    pending.push_back(std::async(std::launch::async, [&source, c, start_day, end_day] {
      TrendReport r{c, std::nullopt, std::nullopt};
      try {
        r.series = source.counts(c.surface, start_day, end_day);
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      return r;
    }));
  }
  std::vector<TrendReport> reports;
  reports.reserve(pending.size());
  for (auto& f : pending) reports.push_back(f.get());

  std::stable_sort(reports.begin(), reports.end(), [](const TrendReport& a, const TrendReport& b) {
    if (a.series.has_value() != b.series.has_value()) return a.series.has_value();
    if (a.series && a.series->total != b.series->total) return a.series->total > b.series->total;
    return a.candidate.ordinal < b.candidate.ordinal;
  });
  return reports;
}

std::pair<Date, Date> default_validation_window(Date today) {
  return {today - std::chrono::days{10}, today};
}

std::string percent_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xf]);
    }
  }
  return out;
}

std::vector<std::pair<Date, std::string>> context_urls(const KeywordCandidate& candidate,
                                                       Date start_day, Date end_day,
                                                       std::string_view base_url) {
  if (start_day > end_day) throw InvalidArgument("context window starts after it ends");
  std::vector<std::pair<Date, std::string>> out;
  for (Date d : days_between(start_day, end_day)) {
    std::string query = candidate.surface + " since:" + format_date(d) +
                        " until:" + format_date(d + std::chrono::days{1});
    out.emplace_back(d, std::string(base_url) + "?q=" + percent_encode(query) +
                            "&src=typed_query&f=live");
  }
  return out;
}

std::vector<KeywordCandidate> read_candidates(std::string_view text) {
  std::vector<KeywordCandidate> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    auto line = trim(text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                      : nl - start));
    if (!line.empty()) {
      out.push_back({std::string(line), static_cast<int>(out.size()) + 1, ""});
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::string write_candidates(const std::vector<KeywordCandidate>& candidates) {
  std::string out;
  for (const auto& c : candidates) out += c.surface + "\n";
  return out;
}

void to_json(nlohmann::json& j, const KeywordCandidate& c) {
  j = nlohmann::json{{"surface", c.surface}, {"ordinal", c.ordinal},
                     {"source_prompt", c.source_prompt}};
}

void from_json(const nlohmann::json& j, KeywordCandidate& c) {
  c.surface = j.at("surface").get<std::string>();
  c.ordinal = j.value("ordinal", 1);
  c.source_prompt = j.value("source_prompt", "");
}

void to_json(nlohmann::json& j, const TrendReport& r) {
  j = nlohmann::json{{"candidate", r.candidate}};
  j["series"] = r.series ? nlohmann::json(*r.series) : nlohmann::json(nullptr);
  if (r.error) j["error"] = *r.error;
}

}  // namespace popscope
