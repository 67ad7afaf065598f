#include "popscope/post.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "popscope/error.hpp"

namespace popscope {

bool post_id_less(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

namespace {

bool all_of_class(std::string_view s, int (*pred)(int)) {
  return std::all_of(s.begin(), s.end(), [pred](unsigned char c) { return pred(c) != 0; });
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

void CollectFilter::validate() const {
  if (language) {
    if (language->size() != 2 || !all_of_class(*language, ::islower)) {
      throw InvalidArgument("language must be a lowercase two-letter ISO-639-1 code, got '" +
                            *language + "'");
    }
  }
  if (country_code) {
    if (country_code->size() != 2 || !all_of_class(*country_code, ::isupper)) {
      throw InvalidArgument("country code must be two uppercase letters, got '" + *country_code +
                            "'");
    }
  }
  if (bbox && (bbox->min_lat > bbox->max_lat || bbox->min_lon > bbox->max_lon)) {
    throw InvalidArgument("bounding box minimum exceeds maximum");
  }
}

bool CollectFilter::matches(const Post& post) const {
  if (language && post.lang != *language) return false;
  if (exclude_reposts && post.is_repost) return false;
  if (country_code) {
    if (!post.geo.country_code || upper(*post.geo.country_code) != *country_code) return false;
  }
  if (bbox) {
    if (!post.geo.has_coordinates() || !bbox->contains(*post.geo.lat, *post.geo.lon)) return false;
  }
  return true;
}

void parse_location_filter(std::string_view text, CollectFilter& filter) {
  if (text.find(',') == std::string_view::npos) {
    filter.country_code = upper(text);
    filter.bbox.reset();
    return;
  }
  std::istringstream in{std::string(text)};
  BoundingBox box;
  char c1 = 0, c2 = 0, c3 = 0;
  if (!(in >> box.min_lat >> c1 >> box.min_lon >> c2 >> box.max_lat >> c3 >> box.max_lon) ||
      c1 != ',' || c2 != ',' || c3 != ',' || !(in >> std::ws).eof()) {
    throw InvalidArgument("location must be a country code or min_lat,min_lon,max_lat,max_lon");
  }
  filter.bbox = box;
  filter.country_code.reset();
}

void to_json(nlohmann::json& j, const GeoInfo& g) {
  j = nlohmann::json::object();
  if (g.region) j["region"] = *g.region;
  if (g.country_code) j["country_code"] = *g.country_code;
  if (g.lat) j["lat"] = *g.lat;
  if (g.lon) j["lon"] = *g.lon;
}

void from_json(const nlohmann::json& j, GeoInfo& g) {
  g = {};
  if (j.is_null()) return;
  if (auto it = j.find("region"); it != j.end() && !it->is_null()) g.region = it->get<std::string>();
  if (auto it = j.find("country_code"); it != j.end() && !it->is_null()) {
    g.country_code = it->get<std::string>();
  }
  if (auto it = j.find("lat"); it != j.end() && !it->is_null()) g.lat = it->get<double>();
  if (auto it = j.find("lon"); it != j.end() && !it->is_null()) g.lon = it->get<double>();
}

nlohmann::json post_to_wire(const Post& p) {
  nlohmann::json j{{"id", p.post_id},
                   {"text", p.text},
                   {"created_at", format_iso8601(p.created_at)},
                   {"author_id", p.author_id},
                   {"lang", p.lang},
                   {"is_repost", p.is_repost}};
  if (!p.geo.empty()) j["geo"] = p.geo;
  return j;
}

Post post_from_wire(const nlohmann::json& j) {
  Post p;
  try {
    p.post_id = j.at("id").get<std::string>();
    p.text = j.at("text").get<std::string>();
    auto ts = try_parse_iso8601(j.at("created_at").get<std::string>());
    if (!ts) throw ProtocolError("post " + p.post_id + " has a malformed created_at");
    p.created_at = *ts;
    p.author_id = j.value("author_id", "");
    p.lang = j.value("lang", "");
    if (auto it = j.find("geo"); it != j.end()) p.geo = it->get<GeoInfo>();
    p.is_repost = j.value("is_repost", false);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed post in search response: ") + e.what());
  }
  return p;
}

void to_json(nlohmann::json& j, const Post& p) {
  j = post_to_wire(p);
  j["keyword"] = p.keyword;
}

void to_json(nlohmann::json& j, const CollectFilter& f) {
  j = nlohmann::json{{"exclude_reposts", f.exclude_reposts}};
  if (f.language) j["lang"] = *f.language;
  if (f.country_code) j["country_code"] = *f.country_code;
  if (f.bbox) {
    j["bbox"] = {f.bbox->min_lat, f.bbox->min_lon, f.bbox->max_lat, f.bbox->max_lon};
  }
}

}  // namespace popscope
