#pragma once

// Meta-wrapped corpus lines:
//
//   [[text: <text> || created: YYYY-MM-DD HH:MM:SS || location: <loc> || probability: <tag>]]
//
// Elements always appear in that order and `location` may be absent. Inside
// values, `\` `|` `[` `]` are written as `\\` `\|` `\[` `\]`, and CR/LF as
// `\r`/`\n`, so a raw `||` or `]]` can only ever be structure.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "popscope/error.hpp"
#include "popscope/post.hpp"
#include "popscope/prob_tag.hpp"
#include "popscope/time.hpp"

namespace popscope {

class Store;

struct MetaRecord {
  std::string text;
  Timestamp created{};
  std::optional<std::string> location;
  ProbTag prob = ProbTag::Ten;

  friend bool operator==(const MetaRecord&, const MetaRecord&) = default;
};

enum class MetaParseErrorKind {
  MalformedWrapper,
  UnknownKey,
  OutOfOrder,
  MissingField,
  BadTimestamp,
  BadProbTag,
  BadEscape,
  EmptyText,
};

std::string_view to_string(MetaParseErrorKind kind);

class MetaParseError : public Error {
 public:
  MetaParseError(MetaParseErrorKind kind, std::size_t offset, const std::string& detail);
  MetaParseErrorKind kind() const { return kind_; }
  /// Byte offset into the parsed line.
  std::size_t offset() const { return offset_; }

 private:
  MetaParseErrorKind kind_;
  std::size_t offset_;
};

std::string escape_meta_value(std::string_view value);

/// One line, no trailing newline. Throws InvalidArgument for empty text.
std::string render(const MetaRecord& record);

/// Strict inverse of render(). Throws MetaParseError.
MetaRecord parse_meta_record(std::string_view line);

/// Index just past the first `]]` at or after `from` that is not part of an
/// escape sequence, or nullopt.
std::optional<std::size_t> find_record_end(std::string_view text, std::size_t from = 0);

/// i.i.d. categorical draws with weights 10/20/30/40 from a generator seeded by `seed`.
std::vector<ProbTag> assign_prob_tags(std::size_t n, std::uint64_t seed);

/// Region string when stored, else "lat,lon" to four decimals, else nothing.
std::optional<std::string> location_for(const Post& post);

struct CorpusSpec {
  std::string run_id;
  bool include_location = true;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  bool include_noise = true;

  void validate() const;
  /// SHA-256 of the canonical spec, output_dir excluded.
  std::string hash() const;
};

struct CorpusResult {
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path manifest_path;
  nlohmann::json manifest;
};

/// Reads the run's corpus candidates (exclusions honoured), tags, renders,
/// shuffles by seed and splits at floor(n * train_fraction).
CorpusResult build_corpus(Store& store, const CorpusSpec& spec, Timestamp created_at);

}  // namespace popscope
