#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>

#include "popscope/time.hpp"

namespace popscope {

struct GeoInfo {
  std::optional<std::string> region;        // free-text place, e.g. "USA"
  std::optional<std::string> country_code;  // ISO-3166 alpha-2, uppercase
  std::optional<double> lat;
  std::optional<double> lon;

  bool has_coordinates() const { return lat.has_value() && lon.has_value(); }
  bool empty() const { return !region && !country_code && !has_coordinates(); }
  friend bool operator==(const GeoInfo&, const GeoInfo&) = default;
};

/// One collected social-media item.
struct Post {
  std::string post_id;
  std::string text;
  Timestamp created_at{};
  std::string author_id;
  std::string lang;
  GeoInfo geo;
  bool is_repost = false;
  std::string keyword;  // the query that fetched it

  friend bool operator==(const Post&, const Post&) = default;
};

/// Ordering used wherever posts are listed "by ascending id". Platform ids are
/// decimal strings of varying width, so shorter ids sort first.
bool post_id_less(std::string_view a, std::string_view b);

struct BoundingBox {
  double min_lat = 0, min_lon = 0, max_lat = 0, max_lon = 0;
  bool contains(double lat, double lon) const {
    return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct CollectFilter {
  std::optional<std::string> language;  // lowercase ISO-639-1
  std::optional<std::string> country_code;
  std::optional<BoundingBox> bbox;
  bool exclude_reposts = false;

  /// Throws InvalidArgument when the language or country code is malformed.
  void validate() const;
  bool matches(const Post& post) const;
};

/// Parses a `--location` value: either a two-letter country code or
/// `min_lat,min_lon,max_lat,max_lon`.
void parse_location_filter(std::string_view text, CollectFilter& filter);

void to_json(nlohmann::json& j, const GeoInfo& g);
void from_json(const nlohmann::json& j, GeoInfo& g);
/// Wire layout of a post as the search endpoint returns it (no `keyword`).
nlohmann::json post_to_wire(const Post& p);
Post post_from_wire(const nlohmann::json& j);
void to_json(nlohmann::json& j, const Post& p);
void to_json(nlohmann::json& j, const CollectFilter& f);

}  // namespace popscope
