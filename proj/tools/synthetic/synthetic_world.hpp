#pragma once

// A deterministic stand-in for the external services: it answers completion,
// embedding, counts and search requests from generated data, so fixtures can
// be recorded and tests can run without any real endpoint.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/backends.hpp"
#include "popscope/time.hpp"

namespace popscope::synthetic {

inline constexpr std::string_view kScheme = "synthetic://";

/// The completion the exotic-pets topic receives (read after the forced "1)").
extern const std::string kExoticPetsCompletion;

/// Window and totals behind the shipped counts fixture.
inline constexpr std::string_view kWindowStart = "2022-12-17";
inline constexpr std::string_view kWindowEnd = "2022-12-27";
const std::vector<std::pair<std::string, std::int64_t>>& exotic_pet_totals();

/// Splits `total` over `days` days with fixed uneven weights; sums exactly.
std::vector<std::int64_t> daily_split(std::int64_t total, std::size_t days, std::size_t salt);

struct WorldOptions {
  int posts_per_day = 30;
  int embedding_width = 64;
  double cluster_spread = 0.08;
  /// Per-tag counts for every `sum`-sized cycle of probe generations.
  std::array<int, 4> probe_tag_cycle{7, 8, 15, 20};
  /// Every n-th probe generation omits the closing brackets (0 = never).
  int probe_unparseable_every = 0;
};

class SyntheticTransport : public Transport {
 public:
  explicit SyntheticTransport(WorldOptions options = {});

  HttpResponse post(const std::string& url, const std::string& body,
                    const HeaderList& headers) override;

  /// URLs pointing every endpoint at this transport.
  static std::map<std::string, std::string> urls();

  std::size_t calls() const { return calls_; }

 private:
  nlohmann::json complete(const nlohmann::json& req);
  nlohmann::json embed(const nlohmann::json& req) const;
  nlohmann::json counts(const nlohmann::json& req) const;
  nlohmann::json pageviews(const nlohmann::json& req) const;
  nlohmann::json search(const nlohmann::json& req) const;

  WorldOptions options_;
  std::size_t calls_ = 0;
  std::map<std::string, std::size_t> probe_cursor_;
};

/// The posts the search endpoint knows for a keyword on a day, ascending by id.
std::vector<nlohmann::json> posts_for(const std::string& keyword, Date day, int per_day);

}  // namespace popscope::synthetic
