#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <random>
#include <set>

#include "popscope/error.hpp"
#include "popscope/keywords.hpp"
#include "support/helpers.hpp"
#include "synthetic/synthetic_world.hpp"

using namespace popscope;
using namespace popscope::testing;
using nlohmann::json;

namespace {

std::vector<std::string> surfaces(const ParsedList& p) {
  std::vector<std::string> out;
  for (const auto& c : p.candidates) out.push_back(c.surface);
  return out;
}

class TableCounts : public CountSource {
 public:
  std::map<std::string, std::int64_t> totals;
  std::set<std::string> failing;

  CountSeries counts(const std::string& keyword, Date start, Date end) override {
    if (failing.count(keyword)) throw WindowError("no data for " + keyword);
    CountSeries s{keyword, start, end, {}, 0};
    auto days = days_between(start, end);
    std::int64_t left = totals.at(keyword);
    for (std::size_t i = 0; i < days.size(); ++i) {
      std::int64_t n = i + 1 == days.size() ? left : left / static_cast<std::int64_t>(days.size());
      left -= n;
      s.daily.emplace_back(days[i], n);
      s.total += n;
    }
    return s;
  }
  std::string_view name() const override { return "table"; }
};

std::vector<KeywordCandidate> candidates(const std::vector<std::string>& names) {
  std::vector<KeywordCandidate> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], static_cast<int>(i) + 1, ""});
  return out;
}

}  // namespace

TEST(BuildPrompt, AppendsColonAndFirstMarker) {
  EXPECT_EQ(build_prompt("Here's a short list of exotic pets"), "Here's a short list of exotic pets:\n1)");
  EXPECT_EQ(build_prompt("X:"), "X:\n1)");
  EXPECT_THROW(build_prompt(""), InvalidArgument);
}

TEST(ParseNumberedList, ExoticPetsHead) {
  auto p = parse_numbered_list(" Bats, 2) Monkeys, 3) Snakes");
  EXPECT_EQ(surfaces(p), (std::vector<std::string>{"Bats", "Monkeys", "Snakes"}));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(p.candidates[i].ordinal, i + 1);
  EXPECT_EQ(p.warnings, 0u);
}

TEST(ParseNumberedList, ExoticPetsTailStripsAndAndPeriod) {
  auto p = parse_numbered_list(" Hedgehogs, 9) Tarantulas, 10) Scorpions, and 11) Sugar Gliders.");
  EXPECT_EQ(surfaces(p), (std::vector<std::string>{"Hedgehogs", "Tarantulas", "Scorpions", "Sugar Gliders"}));
  EXPECT_EQ(p.candidates.back().ordinal, 11);
}

TEST(ParseNumberedList, DedupeKeepsFirstCasing) {
  EXPECT_EQ(surfaces(parse_numbered_list("1) Foo\n2) foo\n3) Bar")),
            (std::vector<std::string>{"Foo", "Bar"}));
}

TEST(ParseNumberedList, EmptyInputIsAWarningNotAnError) {
  auto p = parse_numbered_list("");
  EXPECT_TRUE(p.candidates.empty());
  EXPECT_GE(p.warnings, 1u);
}

TEST(ParseNumberedList, SourcePromptRecorded) {
  auto p = parse_numbered_list(" A\n2) B", "topic:\n1)");
  for (auto& c : p.candidates) EXPECT_EQ(c.source_prompt, "topic:\n1)");
}

TEST(ParseNumberedList, GoldenFile) {
  std::ifstream in(test_data("keyword_golden.json"));
  json cases = json::parse(in);
  ASSERT_EQ(cases.size(), 20u);
  for (const auto& c : cases) {
    auto p = parse_numbered_list(c["completion"].get<std::string>());
    EXPECT_EQ(surfaces(p), c["expected"].get<std::vector<std::string>>()) << c["name"];
  }
}

TEST(ParseNumberedList, RoundTripsCleanLists) {
  std::mt19937 rng(3);
  const std::string alphabet = "abcdefghij KLMNOP#-'";
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> words;
    std::set<std::string> folded;
    const int n = 1 + static_cast<int>(rng() % 12);
    while (static_cast<int>(words.size()) < n) {
      std::string w;
      const int len = 1 + static_cast<int>(rng() % 10);
      for (int i = 0; i < len; ++i) w += alphabet[rng() % alphabet.size()];
      while (!w.empty() && w.back() == ' ') w.pop_back();
      while (!w.empty() && w.front() == ' ') w.erase(w.begin());
      if (w.empty() || !is_clean_surface(w)) continue;
      // Words that would themselves read as stop words or list glue are not clean lists.
      std::string lower;
      for (char ch : w) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (lower == "and" || lower == "or" || lower.ends_with(" and") || lower.ends_with(" or")) continue;
      if (!folded.insert(lower).second) continue;
      words.push_back(w);
    }
    std::string text;
    for (int i = 0; i < n; ++i) text += std::to_string(i + 1) + ") " + words[i] + "\n";
    EXPECT_EQ(surfaces(parse_numbered_list(text)), words) << text;
  }
}

TEST(ParseNumberedList, TotalOnNoisyInput) {
  std::mt19937 rng(99);
  const std::string noise = "0123456789).:,; \n\tabcAND or#";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    const int len = static_cast<int>(rng() % 80);
    for (int i = 0; i < len; ++i) text += noise[rng() % noise.size()];
    ParsedList p;
    ASSERT_NO_THROW(p = parse_numbered_list(text)) << text;
    std::set<std::string> seen;
    for (const auto& c : p.candidates) {
      EXPECT_TRUE(is_clean_surface(c.surface)) << '"' << c.surface << '"';
      EXPECT_GE(c.ordinal, 1);
      std::string lower;
      for (char ch : c.surface) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      EXPECT_TRUE(seen.insert(lower).second);
    }
  }
}

TEST(SuggestKeywords, ExoticPetsFromShippedFixture) {
  BackendClient client(replay_config(shipped_fixtures()), std::make_shared<PanicTransport>());
  CompletionClient completion(client);
  auto p = suggest_keywords(completion, "Here's a short list of exotic pets");
  EXPECT_EQ(p.candidates.size(), 11u);
  EXPECT_EQ(p.candidates[0].surface, "Bats");
  EXPECT_EQ(p.candidates[10].surface, "Sugar Gliders");
  EXPECT_THROW(suggest_keywords(completion, "x", 0), InvalidArgument);
}

TEST(SuggestKeywords, PoolsSamplesAndRenumbers) {
  auto t = std::make_shared<FunctionTransport>([](const std::string&, const json&) {
    json body{{"choices", {{{"text", " A\n2) B"}}, {{"text", " b\n2) C"}}}}};
    return HttpResponse{200, body.dump()};
  });
  BackendConfig c;
  c.mode = BackendMode::Live;
  c.urls = {{"completion", "http://unused"}};
  c.rate_limit_rps = 1e6;
  BackendClient client(c, t);
  CompletionClient completion(client);
  auto p = suggest_keywords(completion, "topic", 2);
  EXPECT_EQ(surfaces(p), (std::vector<std::string>{"A", "B", "C"}));
  EXPECT_EQ(p.candidates[2].ordinal, 3);
}

TEST(ValidateKeywords, ExoticPetsTotalsInOrder) {
  BackendClient client(replay_config(shipped_fixtures()), std::make_shared<PanicTransport>());
  PostCountSource counts(client);
  auto names = std::vector<std::string>{"Bats",      "Monkeys",     "Snakes",   "Alligators",
                                        "Hedgehogs", "Sloths",      "Chinchillas", "Axolotls",
                                        "Tarantulas", "Scorpions", "Sugar Gliders"};
  auto reports = validate_keywords(candidates(names), day("2022-12-17"), day("2022-12-27"), counts);
  ASSERT_EQ(reports.size(), 11u);
  const std::vector<std::pair<std::string, std::int64_t>> expected{
      {"Monkeys", 36772}, {"Snakes", 29830}, {"Bats", 21156},
      {"Alligators", 3258}, {"Tarantulas", 689}, {"Sugar Gliders", 196}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(reports[i].candidate.surface, expected[i].first);
    ASSERT_TRUE(reports[i].series);
    EXPECT_EQ(reports[i].series->total, expected[i].second);
  }
  for (std::size_t i = expected.size(); i < reports.size(); ++i) {
    EXPECT_FALSE(reports[i].series);
    EXPECT_TRUE(reports[i].error);
  }
}

TEST(ValidateKeywords, ZeroTotalStillReturned) {
  TableCounts src;
  src.totals = {{"quiet", 0}};
  auto r = validate_keywords(candidates({"quiet"}), day("2022-12-01"), day("2022-12-03"), src);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].series->total, 0);
}

TEST(ValidateKeywords, TiesKeepOrdinalOrder) {
  TableCounts src;
  src.totals = {{"b", 10}, {"a", 10}, {"c", 20}};
  auto r = validate_keywords(candidates({"b", "a", "c"}), day("2022-12-01"), day("2022-12-02"), src);
  EXPECT_EQ(r[0].candidate.surface, "c");
  EXPECT_EQ(r[1].candidate.surface, "b");
  EXPECT_EQ(r[2].candidate.surface, "a");
}

TEST(ValidateKeywords, MatchesIndependentSortOracle) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    TableCounts src;
    std::vector<std::string> names;
    const int n = 1 + static_cast<int>(rng() % 15);
    for (int i = 0; i < n; ++i) {
      names.push_back("k" + std::to_string(i));
      src.totals[names.back()] = rng() % 6;
      if (rng() % 7 == 0) src.failing.insert(names.back());
    }
    auto r = validate_keywords(candidates(names), day("2022-12-01"), day("2022-12-01"), src);
    // Oracle: successes by (-total, ordinal), then failures by ordinal.
    std::vector<std::tuple<int, std::int64_t, int>> keys;
    for (int i = 0; i < n; ++i) {
      bool ok = !src.failing.count(names[i]);
      keys.emplace_back(ok ? 0 : 1, ok ? -src.totals[names[i]] : 0, i + 1);
    }
    std::sort(keys.begin(), keys.end());
    ASSERT_EQ(static_cast<int>(r.size()), n);
    for (int i = 0; i < n; ++i) EXPECT_EQ(r[i].candidate.ordinal, std::get<2>(keys[i]));
  }
}

TEST(ValidateKeywords, Preconditions) {
  TableCounts src;
  EXPECT_THROW(validate_keywords({}, day("2022-12-01"), day("2022-12-02"), src), InvalidArgument);
  src.totals = {{"a", 1}};
  EXPECT_THROW(validate_keywords(candidates({"a"}), day("2022-12-02"), day("2022-12-01"), src),
               InvalidArgument);
}

TEST(ValidationWindow, TrailingTenDays) {
  auto [from, to] = default_validation_window(day("2022-12-27"));
  EXPECT_EQ(from, day("2022-12-17"));
  EXPECT_EQ(to, day("2022-12-27"));
}

TEST(ContextUrls, OnePerDayWithEncodedBounds) {
  auto one = context_urls({"Birds", 1, ""}, day("2014-05-01"), day("2014-05-01"));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NE(one[0].second.find("Birds"), std::string::npos);
  EXPECT_NE(one[0].second.find("since%3A2014-05-01"), std::string::npos);
  EXPECT_NE(one[0].second.find("until%3A2014-05-02"), std::string::npos);

  auto ten = context_urls({"Sugar Gliders", 1, ""}, day("2022-12-18"), day("2022-12-27"));
  ASSERT_EQ(ten.size(), 10u);
  for (std::size_t i = 0; i < ten.size(); ++i) {
    EXPECT_EQ(ten[i].first, day("2022-12-18") + std::chrono::days{static_cast<int>(i)});
    EXPECT_NE(ten[i].second.find("Sugar%20Gliders"), std::string::npos);
  }
  EXPECT_THROW(context_urls({"x", 1, ""}, day("2022-12-02"), day("2022-12-01")), InvalidArgument);
}

TEST(PercentEncode, ReservedCharacters) {
  EXPECT_EQ(percent_encode("a b#c/é"), "a%20b%23c%2F%C3%A9");
  EXPECT_EQ(percent_encode("A-z_0.9~"), "A-z_0.9~");
}

TEST(CandidateFiles, RoundTrip) {
  auto c = candidates({"Monkeys", "Sugar Gliders", "#tag"});
  auto back = read_candidates(write_candidates(c));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].surface, c[i].surface);
    EXPECT_EQ(back[i].ordinal, static_cast<int>(i) + 1);
  }
  EXPECT_EQ(read_candidates("\n  a  \n\n b\r\n").size(), 2u);
}
