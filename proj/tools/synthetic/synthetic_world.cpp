#include "synthetic_world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "popscope/digest.hpp"
#include "popscope/post.hpp"

namespace popscope::synthetic {

using nlohmann::json;

const std::string kExoticPetsCompletion =
    " Bats, 2) Monkeys, 3) Snakes, 4) Alligators, 5) Hedgehogs, 6) Sloths, 7) Chinchillas, "
    "8) Axolotls, 9) Tarantulas, 10) Scorpions, and 11) Sugar Gliders.";

const std::vector<std::pair<std::string, std::int64_t>>& exotic_pet_totals() {
  static const std::vector<std::pair<std::string, std::int64_t>> totals{
      {"Monkeys", 36772}, {"Snakes", 29830},    {"Bats", 21156},
      {"Alligators", 3258}, {"Tarantulas", 689}, {"Sugar Gliders", 196}};
  return totals;
}

std::vector<std::int64_t> daily_split(std::int64_t total, std::size_t days, std::size_t salt) {
  std::vector<std::int64_t> weights(days);
  std::int64_t weight_sum = 0;
  for (std::size_t d = 0; d < days; ++d) {
    weights[d] = 3 + static_cast<std::int64_t>((d * 7 + salt * 3) % 5);
    weight_sum += weights[d];
  }
  std::vector<std::int64_t> out(days);
  std::int64_t assigned = 0;
  for (std::size_t d = 0; d < days; ++d) {
    out[d] = total * weights[d] / weight_sum;
    assigned += out[d];
  }
  for (std::size_t d = 0; assigned < total; d = (d + 1) % days, ++assigned) ++out[d];
  return out;
}

namespace {

std::uint64_t seed_of(std::string_view text) {
  const std::string h = sha256_hex(text);
  return std::stoull(h.substr(0, 16), nullptr, 16);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

const std::array<std::string_view, 6> kMoods{"sleepy", "curious", "noisy", "grumpy", "playful",
                                             "hungry"};
const std::array<std::string_view, 5> kPlaces{"at the zoo", "in my backyard", "on the news",
                                              "in a documentary", "at the rescue center"};

HttpResponse ok(const json& body) { return {200, body.dump()}; }

}  // namespace

std::vector<json> posts_for(const std::string& keyword, Date day, int per_day) {
  const auto ymd = std::chrono::year_month_day{day};
  const auto day_index = static_cast<std::int64_t>(static_cast<unsigned>(ymd.day()));
  const std::int64_t keyword_slot = static_cast<std::int64_t>(seed_of(keyword) % 90) + 10;
  std::mt19937_64 rng(seed_of(keyword + "@" + format_date(day)));
  std::vector<json> out;
  for (int i = 0; i < per_day; ++i) {
    Post p;
    // 19-digit ids that grow with the day, like platform snowflakes.
    const std::int64_t id = 1600000000000000000LL + day_index * 1000000000000LL +
                            keyword_slot * 1000000LL + i;
    p.post_id = std::to_string(id);
    const auto mood = kMoods[rng() % kMoods.size()];
    const auto place = kPlaces[rng() % kPlaces.size()];
    p.text = "Spotted some " + std::string(mood) + " " + lower(keyword) + " " + std::string(place) +
             " today #" + keyword.substr(0, keyword.find(' ')) + " " + std::to_string(i);
    p.created_at = Timestamp{day} + std::chrono::seconds(600 + i * 1700 + static_cast<int>(rng() % 600));
    p.author_id = "u" + std::to_string(rng() % 5000);
    p.lang = (i % 7 == 3) ? "es" : "en";
    p.is_repost = (i % 11 == 5);
    switch (i % 3) {
      case 0: p.geo.region = "USA"; p.geo.country_code = "US"; break;
      case 1:
        p.geo.lat = 30.0 + static_cast<double>(rng() % 10000) / 1000.0;
        p.geo.lon = -100.0 + static_cast<double>(rng() % 10000) / 1000.0;
        break;
      default: break;
    }
    out.push_back(post_to_wire(p));
  }
  return out;
}

SyntheticTransport::SyntheticTransport(WorldOptions options) : options_(options) {}

std::map<std::string, std::string> SyntheticTransport::urls() {
  std::map<std::string, std::string> out;
  for (auto id : {endpoint::kCompletion, endpoint::kEmbed, endpoint::kCounts, endpoint::kPageViews,
                  endpoint::kSearch}) {
    out[std::string(id)] = std::string(kScheme) + std::string(id);
  }
  return out;
}

HttpResponse SyntheticTransport::post(const std::string& url, const std::string& body,
                                      const HeaderList&) {
  ++calls_;
  const std::string id = url.substr(kScheme.size());
  const json req = json::parse(body);
  try {
    if (id == endpoint::kCompletion) return ok(complete(req));
    if (id == endpoint::kEmbed) return ok(embed(req));
    if (id == endpoint::kCounts) return ok(counts(req));
    if (id == endpoint::kPageViews) return ok(pageviews(req));
    if (id == endpoint::kSearch) return ok(search(req));
  } catch (const json::exception& e) {
    return {400, json{{"errors", {{{"message", e.what()}}}}}.dump()};
  }
  return {404, json{{"errors", {{{"message", "no such endpoint " + id}}}}}.dump()};
}

json SyntheticTransport::complete(const json& req) {
  const auto prompt = req.at("prompt").get<std::string>();
  const int n = req.at("n").get<int>();
  json choices = json::array();
  if (prompt.ends_with("exotic pets:\n1)")) {
    for (int i = 0; i < n; ++i) choices.push_back({{"text", kExoticPetsCompletion}});
    return {{"choices", choices}};
  }
  if (prompt.starts_with("[[text: ")) {
    const auto& cycle = options_.probe_tag_cycle;
    const int period = cycle[0] + cycle[1] + cycle[2] + cycle[3];
    std::vector<std::string_view> pattern;
    static constexpr std::array<std::string_view, 4> kTags{"ten", "twenty", "thirty", "forty"};
    for (std::size_t t = 0; t < 4; ++t) pattern.insert(pattern.end(), cycle[t], kTags[t]);
    std::mt19937_64 shuffle_rng(seed_of("probe-cycle"));
    std::shuffle(pattern.begin(), pattern.end(), shuffle_rng);

    std::size_t& cursor = probe_cursor_[prompt];
    for (int i = 0; i < n; ++i, ++cursor) {
      const auto tag = pattern[cursor % static_cast<std::size_t>(period)];
      std::string text = " is trending again, people keep asking about it (" +
                         std::to_string(cursor) + ") || created: 2022-12-" +
                         std::to_string(17 + cursor % 10) + " 1" + std::to_string(cursor % 10) +
                         ":0" + std::to_string(cursor % 6) + ":00 || location: USA || probability: " +
                         std::string(tag);
      const bool broken = options_.probe_unparseable_every > 0 &&
                          (cursor + 1) % static_cast<std::size_t>(options_.probe_unparseable_every) == 0;
      text += broken ? " and then it" : "]]\n[[text: next";
      choices.push_back({{"text", text}});
    }
    return {{"choices", choices}};
  }
  throw json::other_error::create(501, "no canned completion for this prompt", nullptr);
}

json SyntheticTransport::embed(const json& req) const {
  json data = json::array();
  const auto& totals = exotic_pet_totals();
  std::size_t i = 0;
  for (const auto& item : req.at("input")) {
    const std::string text = lower(item.get<std::string>());
    std::string topic = "other";
    for (const auto& [keyword, _] : totals) {
      if (text.find(lower(keyword)) != std::string::npos) {
        topic = keyword;
        break;
      }
    }
    std::mt19937_64 centre_rng(seed_of("centre:" + topic));
    std::mt19937_64 noise_rng(seed_of("noise:" + text));
    std::normal_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, options_.cluster_spread);
    json vec = json::array();
    for (int c = 0; c < options_.embedding_width; ++c) {
      const double centre = unit(centre_rng) / std::sqrt(static_cast<double>(options_.embedding_width));
      // Round to float precision so stored vectors equal the wire values.
      vec.push_back(static_cast<double>(static_cast<float>(centre + noise(noise_rng) /
                                                           std::sqrt(static_cast<double>(options_.embedding_width)))));
    }
    data.push_back({{"index", i++}, {"embedding", vec}});
  }
  return {{"data", data}};
}

json SyntheticTransport::counts(const json& req) const {
  const auto query = req.at("query").get<std::string>();
  const auto start = day_of(*try_parse_iso8601(req.at("start_time").get<std::string>()));
  const auto end = day_of(*try_parse_iso8601(req.at("end_time").get<std::string>())) - std::chrono::days{1};
  const auto& totals = exotic_pet_totals();
  auto it = std::find_if(totals.begin(), totals.end(), [&](const auto& p) { return p.first == query; });
  if (it == totals.end()) {
    return {{"errors", {{{"message", "no usage data is available for '" + query + "'"}}}}};
  }
  const auto days = days_between(start, end);
  const auto split = daily_split(it->second, days.size(), static_cast<std::size_t>(it - totals.begin()));
  json data = json::array();
  std::int64_t total = 0;
  for (std::size_t d = 0; d < days.size(); ++d) {
    data.push_back({{"start", format_iso8601(Timestamp{days[d]})},
                    {"end", format_iso8601(Timestamp{days[d] + std::chrono::days{1}})},
                    {"tweet_count", split[d]}});
    total += split[d];
  }
  return {{"data", data}, {"meta", {{"total_tweet_count", total}}}};
}

json SyntheticTransport::pageviews(const json& req) const {
  const auto article = req.at("article").get<std::string>();
  auto parse_compact = [](const std::string& s) {
    return parse_date(s.substr(0, 4) + "-" + s.substr(4, 2) + "-" + s.substr(6, 2));
  };
  const auto start = parse_compact(req.at("start").get<std::string>());
  const auto end = parse_compact(req.at("end").get<std::string>());
  json items = json::array();
  std::size_t d = 0;
  for (auto day : days_between(start, end)) {
    std::string stamp = format_date(day);
    stamp.erase(std::remove(stamp.begin(), stamp.end(), '-'), stamp.end());
    items.push_back({{"article", article},
                     {"timestamp", stamp + "00"},
                     {"views", static_cast<std::int64_t>(seed_of(article + stamp) % 5000) + 100 * static_cast<std::int64_t>(d++)}});
  }
  return {{"items", items}};
}

json SyntheticTransport::search(const json& req) const {
  const auto query = req.at("query").get<std::string>();
  const auto day = day_of(*try_parse_iso8601(req.at("start_time").get<std::string>()));
  const int page_size = std::max(1, req.at("max_results").get<int>());
  const auto pool = posts_for(query, day, options_.posts_per_day);
  std::size_t offset = 0;
  if (req.contains("pagination_token")) {
    offset = std::stoul(req.at("pagination_token").get<std::string>().substr(5));
  }
  json data = json::array();
  for (std::size_t i = offset; i < pool.size() && i < offset + static_cast<std::size_t>(page_size); ++i) {
    data.push_back(pool[i]);
  }
  json meta = {{"result_count", data.size()}};
  if (offset + static_cast<std::size_t>(page_size) < pool.size()) {
    meta["next_token"] = "page-" + std::to_string(offset + static_cast<std::size_t>(page_size));
  }
  return {{"data", data}, {"meta", meta}};
}

}  // namespace popscope::synthetic
