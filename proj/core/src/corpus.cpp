#include "popscope/corpus.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "popscope/digest.hpp"
#include "popscope/store.hpp"

namespace popscope {

using nlohmann::json;

std::string_view to_string(MetaParseErrorKind kind) {
  switch (kind) {
    case MetaParseErrorKind::MalformedWrapper: return "MalformedWrapper";
    case MetaParseErrorKind::UnknownKey: return "UnknownKey";
    case MetaParseErrorKind::OutOfOrder: return "OutOfOrder";
    case MetaParseErrorKind::MissingField: return "MissingField";
    case MetaParseErrorKind::BadTimestamp: return "BadTimestamp";
    case MetaParseErrorKind::BadProbTag: return "BadProbTag";
    case MetaParseErrorKind::BadEscape: return "BadEscape";
    case MetaParseErrorKind::EmptyText: return "EmptyText";
  }
  return "Unknown";
}

MetaParseError::MetaParseError(MetaParseErrorKind kind, std::size_t offset,
                               const std::string& detail)
    : Error(std::string(to_string(kind)) + " at byte " + std::to_string(offset) + ": " + detail),
      kind_(kind),
      offset_(offset) {}

std::string escape_meta_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  for (char c : value) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '[': out += "\\["; break;
      case ']': out += "\\]"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string render(const MetaRecord& record) {
  if (record.text.empty()) throw InvalidArgument("meta record text must be non-empty");
  std::string out = "[[text: " + escape_meta_value(record.text);
  out += " || created: " + format_timestamp(record.created);
  if (record.location) out += " || location: " + escape_meta_value(*record.location);
  out += " || probability: ";
  out += to_string(record.prob);
  out += "]]";
  return out;
}

namespace {

constexpr std::array<std::string_view, 4> kKeys{"text", "created", "location", "probability"};

using Kind = MetaParseErrorKind;

}  // namespace

std::optional<std::size_t> find_record_end(std::string_view text, std::size_t from) {
  for (std::size_t i = from; i < text.size(); ++i) {
    if (text[i] == '\\') {
      ++i;
      continue;
    }
    if (text[i] == ']' && i + 1 < text.size() && text[i + 1] == ']') return i + 2;
  }
  return std::nullopt;
}

MetaRecord parse_meta_record(std::string_view line) {
  if (line.size() < 4 || line.substr(0, 2) != "[[") {
    throw MetaParseError(Kind::MalformedWrapper, 0, "line must start with [[");
  }

  struct Element {
    std::string value;
    std::size_t offset;
    bool present = false;
  };
  std::array<Element, 4> elements{};
  int last_key = -1;
  std::size_t pos = 2;
  bool closed = false;

  while (!closed) {
    // key
    const std::size_t key_start = pos;
    while (pos < line.size() && line[pos] >= 'a' && line[pos] <= 'z') ++pos;
    if (pos == key_start || pos + 1 >= line.size() || line[pos] != ':' || line[pos + 1] != ' ') {
      throw MetaParseError(Kind::MalformedWrapper, key_start, "expected '<key>: '");
    }
    const std::string_view key = line.substr(key_start, pos - key_start);
    auto it = std::find(kKeys.begin(), kKeys.end(), key);
    if (it == kKeys.end()) {
      throw MetaParseError(Kind::UnknownKey, key_start, "unknown key '" + std::string(key) + "'");
    }
    const int key_index = static_cast<int>(it - kKeys.begin());
    if (key_index <= last_key) {
      throw MetaParseError(Kind::OutOfOrder, key_start,
                           "key '" + std::string(key) + "' is repeated or out of order");
    }
    last_key = key_index;
    pos += 2;

    // value
    Element& el = elements[static_cast<std::size_t>(key_index)];
    el.present = true;
    el.offset = pos;
    for (;;) {
      if (pos >= line.size()) {
        throw MetaParseError(Kind::MalformedWrapper, pos, "missing closing ]]");
      }
      const char c = line[pos];
      if (c == '\\') {
        if (pos + 1 >= line.size()) throw MetaParseError(Kind::BadEscape, pos, "dangling backslash");
        switch (line[pos + 1]) {
          case '\\': el.value.push_back('\\'); break;
          case '|': el.value.push_back('|'); break;
          case '[': el.value.push_back('['); break;
          case ']': el.value.push_back(']'); break;
          case 'n': el.value.push_back('\n'); break;
          case 'r': el.value.push_back('\r'); break;
          default:
            throw MetaParseError(Kind::BadEscape, pos,
                                 std::string("unknown escape \\") + line[pos + 1]);
        }
        pos += 2;
        continue;
      }
      if (c == '|') {
        // " || " separator; the space before it is not part of the value.
        if (pos + 2 >= line.size() || line[pos + 1] != '|' || line[pos + 2] != ' ' ||
            pos == 0 || line[pos - 1] != ' ' || el.value.empty() || el.value.back() != ' ') {
          throw MetaParseError(Kind::MalformedWrapper, pos, "expected ' || ' between elements");
        }
        el.value.pop_back();
        pos += 3;
        break;
      }
      if (c == ']') {
        if (pos + 2 != line.size() || line[pos + 1] != ']') {
          throw MetaParseError(Kind::MalformedWrapper, pos, "unescaped ] inside an element");
        }
        pos += 2;
        closed = true;
        break;
      }
      if (c == '[' || c == '\n' || c == '\r') {
        throw MetaParseError(Kind::MalformedWrapper, pos, "unescaped structural character");
      }
      el.value.push_back(c);
      ++pos;
    }
  }

  const auto& text = elements[0];
  const auto& created = elements[1];
  const auto& location = elements[2];
  const auto& prob = elements[3];
  if (!text.present) throw MetaParseError(Kind::MissingField, 2, "missing text");
  if (!created.present) throw MetaParseError(Kind::MissingField, line.size(), "missing created");
  if (!prob.present) throw MetaParseError(Kind::MissingField, line.size(), "missing probability");
  if (text.value.empty()) throw MetaParseError(Kind::EmptyText, text.offset, "text is empty");

  MetaRecord r;
  r.text = text.value;
  auto ts = try_parse_timestamp(created.value);
  if (!ts) {
    throw MetaParseError(Kind::BadTimestamp, created.offset,
                         "created must be YYYY-MM-DD HH:MM:SS, got '" + created.value + "'");
  }
  r.created = *ts;
  if (location.present) r.location = location.value;
  auto tag = prob_tag_from_string(prob.value);
  if (!tag) {
    throw MetaParseError(Kind::BadProbTag, prob.offset,
                         "probability must be ten/twenty/thirty/forty, got '" + prob.value + "'");
  }
  r.prob = *tag;
  return r;
}

std::vector<ProbTag> assign_prob_tags(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> dist({10.0, 20.0, 30.0, 40.0});
  std::vector<ProbTag> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<ProbTag>(dist(rng)));
  return out;
}

std::optional<std::string> location_for(const Post& post) {
  if (post.geo.region && !post.geo.region->empty()) return post.geo.region;
  if (post.geo.has_coordinates()) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", *post.geo.lat, *post.geo.lon);
    return std::string(buf);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

void CorpusSpec::validate() const {
  if (run_id.empty()) throw InvalidArgument("corpus run id must be non-empty");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("train_fraction must be in (0, 1)");
  }
  if (output_dir.empty()) throw InvalidArgument("corpus output directory must be set");
}

std::string CorpusSpec::hash() const {
  json j{{"run_id", run_id},
         {"include_location", include_location},
         {"train_fraction", train_fraction},
         {"seed", seed},
         {"include_noise", include_noise}};
  return sha256_hex(j.dump());
}

namespace {

json tag_counts(const std::vector<ProbTag>& tags) {
  std::array<std::int64_t, 4> counts{};
  for (auto t : tags) ++counts[index_of(t)];
  json out = json::object();
  for (auto t : kAllProbTags) out[std::string(to_string(t))] = counts[index_of(t)];
  return out;
}

json tag_frequencies(const std::vector<ProbTag>& tags) {
  std::array<std::int64_t, 4> counts{};
  for (auto t : tags) ++counts[index_of(t)];
  json out = json::object();
  for (auto t : kAllProbTags) {
    out[std::string(to_string(t))] =
        tags.empty() ? 0.0 : static_cast<double>(counts[index_of(t)]) / static_cast<double>(tags.size());
  }
  return out;
}

std::string write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string body;
  for (const auto& l : lines) {
    body += l;
    body += '\n';
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  out << body;
  return sha256_hex(body);
}

}  // namespace

CorpusResult build_corpus(Store& store, const CorpusSpec& spec, Timestamp created_at) {
  spec.validate();
  CandidateFilter filter;
  filter.include_noise = spec.include_noise;
  auto candidates = store.corpus_candidates(spec.run_id, filter);
  std::erase_if(candidates, [](const Post& p) { return p.text.empty(); });
  if (candidates.empty()) {
    throw InsufficientData("run '" + spec.run_id + "' has no corpus candidates");
  }

  const auto tags = assign_prob_tags(candidates.size(), spec.seed);
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq shuffle_seed{static_cast<std::uint32_t>(spec.seed),
                             static_cast<std::uint32_t>(spec.seed >> 32), 0x5eedu};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(candidates.size()) * spec.train_fraction));

  std::vector<std::string> train, test;
  std::vector<ProbTag> train_tags, test_tags;
  json train_ids = json::array(), test_ids = json::array();
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    MetaRecord rec{candidates[i].text, candidates[i].created_at,
                   spec.include_location ? location_for(candidates[i]) : std::nullopt, tags[i]};
    if (k < n_train) {
      train.push_back(render(rec));
      train_tags.push_back(tags[i]);
      train_ids.push_back(candidates[i].post_id);
    } else {
      test.push_back(render(rec));
      test_tags.push_back(tags[i]);
      test_ids.push_back(candidates[i].post_id);
    }
  }

  std::filesystem::create_directories(spec.output_dir);
  CorpusResult result;
  result.train_path = spec.output_dir / "train.txt";
  result.test_path = spec.output_dir / "test.txt";
  result.manifest_path = spec.output_dir / "manifest.json";
  const std::string train_hash = write_lines(result.train_path, train);
  const std::string test_hash = write_lines(result.test_path, test);

  json manifest;
  manifest["run_id"] = spec.run_id;
  manifest["spec"] = {{"include_location", spec.include_location},
                      {"train_fraction", spec.train_fraction},
                      {"seed", spec.seed},
                      {"include_noise", spec.include_noise}};
  manifest["spec_hash"] = spec.hash();
  manifest["counts"] = {{"candidates", candidates.size()},
                        {"train", train.size()},
                        {"test", test.size()}};
  manifest["tag_assignment"] = {
      {"reading", "categorical"},
      {"weights", {{"ten", 0.1}, {"twenty", 0.2}, {"thirty", 0.3}, {"forty", 0.4}}},
      {"note", "one draw per line; every line carries exactly one tag"}};
  manifest["tag_counts"] = {{"train", tag_counts(train_tags)}, {"test", tag_counts(test_tags)}};
  manifest["tag_frequencies"] = {{"train", tag_frequencies(train_tags)},
                                 {"test", tag_frequencies(test_tags)}};
  manifest["files"] = {{"train.txt", train_hash}, {"test.txt", test_hash}};
  manifest["post_ids"] = {{"train", std::move(train_ids)}, {"test", std::move(test_ids)}};

  {
    std::ofstream out(result.manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write " + result.manifest_path.string());
    out << manifest.dump(2) << '\n';
  }
  store.record_corpus_export(spec.run_id, spec.output_dir.string(), spec.hash(), manifest,
                             created_at);
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace popscope
