#pragma once

// Multiple-choice QA records: loading, validation, serialization and
// deterministic train/test splitting.

#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathgrpo/error.hpp"
#include "pathgrpo/hash.hpp"

namespace pathgrpo {

inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 8;

enum class SplitTag { sft, rl, test };

inline constexpr std::array<SplitTag, 3> kAllSplits = {SplitTag::sft, SplitTag::rl,
                                                       SplitTag::test};

inline std::string_view split_tag_name(SplitTag tag) noexcept {
  switch (tag) {
    case SplitTag::sft: return "sft";
    case SplitTag::rl: return "rl";
    case SplitTag::test: return "test";
  }
  return "unknown";
}

inline SplitTag parse_split_tag(std::string_view name) {
  for (SplitTag t : kAllSplits) {
    if (split_tag_name(t) == name) return t;
  }
  throw DatasetError("unknown split '" + std::string(name) +
                     "' (valid splits: sft, rl, test)");
}

struct Option {
  char letter = 'A';
  std::string content;

  friend bool operator==(const Option&, const Option&) = default;
};

struct Problem {
  std::string id;
  std::string question;
  std::vector<Option> options;
  Option gold;
  std::optional<std::string> image_ref;  // opaque; never dereferenced here
  std::optional<SplitTag> split;

  friend bool operator==(const Problem&, const Problem&) = default;

  const Option* find_option(char letter) const noexcept {
    for (const auto& o : options) {
      if (o.letter == letter) return &o;
    }
    return nullptr;
  }
};

/// Throws DatasetError naming the record id when an invariant is violated.
inline void validate_problem(const Problem& p) {
  auto fail = [&](const std::string& why) {
    throw DatasetError("record '" + p.id + "': " + why);
  };
  if (p.id.empty()) throw DatasetError("record with empty id");
  if (p.options.size() < kMinOptions || p.options.size() > kMaxOptions) {
    fail("expected 2..8 options, got " + std::to_string(p.options.size()));
  }
  for (std::size_t i = 0; i < p.options.size(); ++i) {
    const char expected = static_cast<char>('A' + i);
    if (p.options[i].letter != expected) {
      fail(std::string("option letters must run consecutively from 'A'; position ") +
           std::to_string(i) + " has '" + p.options[i].letter + "'");
    }
  }
  const Option* match = p.find_option(p.gold.letter);
  if (match == nullptr) {
    fail(std::string("gold letter '") + p.gold.letter + "' is not among the options");
  }
  if (match->content != p.gold.content) {
    fail(std::string("gold content does not equal option ") + p.gold.letter + " content");
  }
}

namespace detail {

inline char letter_from_json(const nlohmann::json& j, const std::string& id) {
  const auto& s = j.get_ref<const std::string&>();
  if (s.size() != 1 || s[0] < 'A' || s[0] > 'Z') {
    throw DatasetError("record '" + id + "': letter must be a single uppercase character, got '" +
                       s + "'");
  }
  return s[0];
}

inline Option option_from_json(const nlohmann::json& j, const std::string& id) {
  return Option{letter_from_json(j.at("letter"), id), j.at("content").get<std::string>()};
}

inline nlohmann::json option_to_json(const Option& o) {
  return {{"letter", std::string(1, o.letter)}, {"content", o.content}};
}

}  // namespace detail

/// Parses and validates one record.
inline Problem problem_from_json(const nlohmann::json& j) {
  Problem p;
  p.id = j.at("id").get<std::string>();
  p.question = j.at("question").get<std::string>();
  for (const auto& o : j.at("options")) p.options.push_back(detail::option_from_json(o, p.id));
  p.gold = detail::option_from_json(j.at("gold"), p.id);
  if (auto it = j.find("image_ref"); it != j.end() && !it->is_null()) {
    p.image_ref = it->get<std::string>();
  }
  if (auto it = j.find("split"); it != j.end() && !it->is_null()) {
    p.split = parse_split_tag(it->get<std::string>());
  }
  validate_problem(p);
  return p;
}

inline nlohmann::json problem_to_json(const Problem& p) {
  nlohmann::json opts = nlohmann::json::array();
  for (const auto& o : p.options) opts.push_back(detail::option_to_json(o));
  nlohmann::json j = {{"id", p.id},
                      {"question", p.question},
                      {"options", std::move(opts)},
                      {"gold", detail::option_to_json(p.gold)},
                      {"image_ref", p.image_ref ? nlohmann::json(*p.image_ref) : nlohmann::json()}};
  if (p.split) j["split"] = std::string(split_tag_name(*p.split));
  return j;
}

struct DatasetManifest {
  std::string path;
  std::map<std::string, std::size_t> counts;  // keys: sft, rl, test, unassigned
  std::string checksum;                       // FNV-1a 64 of the file bytes

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, c] : counts) n += c;
    return n;
  }
};

struct Dataset {
  std::vector<Problem> problems;
  DatasetManifest manifest;
};

/// Parses line-delimited JSON records from an in-memory buffer. Blank lines
/// are skipped. Errors name the 1-based line number or the offending id.
inline Dataset parse_dataset(std::string_view content, std::string path_label = "<memory>") {
  Dataset ds;
  ds.manifest.path = std::move(path_label);
  ds.manifest.checksum = to_hex(fnv1a64(content));
  ds.manifest.counts = {{"sft", 0}, {"rl", 0}, {"test", 0}, {"unassigned", 0}};

  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == content.size()) break;
      continue;
    }
    Problem p;
    try {
      p = problem_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError(ds.manifest.path + ":" + std::to_string(line_no) +
                         ": malformed record: " + e.what());
    } catch (const DatasetError& e) {
      throw DatasetError(ds.manifest.path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(p.id).second) {
      throw DatasetError(ds.manifest.path + ":" + std::to_string(line_no) +
                         ": duplicate id '" + p.id + "'");
    }
    ++ds.manifest.counts[p.split ? std::string(split_tag_name(*p.split)) : "unassigned"];
    ds.problems.push_back(std::move(p));
    if (end == content.size()) break;
  }
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read dataset '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path);
}

inline std::string serialize_dataset(const std::vector<Problem>& problems) {
  std::string out;
  for (const auto& p : problems) {
    out += problem_to_json(p).dump();
    out += '\n';
  }
  return out;
}

inline void write_dataset(const std::string& path, const std::vector<Problem>& problems) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write dataset '" + path + "'");
  out << serialize_dataset(problems);
}

/// Problems carrying the given split tag, in file order.
inline std::vector<Problem> select_split(const std::vector<Problem>& problems, SplitTag tag) {
  std::vector<Problem> out;
  for (const auto& p : problems) {
    if (p.split == tag) out.push_back(p);
  }
  return out;
}

/// Uniform draw in [0, bound) from a 64-bit engine by rejection. Used instead
/// of std::uniform_int_distribution so results do not depend on the standard
/// library implementation.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

template <class T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[bounded_draw(rng, i)]);
  }
}

struct SplitSizes {
  std::size_t sft = 3000;
  std::size_t rl = 1000;
  std::size_t test = 1385;
};

struct SplitResult {
  std::vector<Problem> sft;
  std::vector<Problem> rl;
  std::vector<Problem> test;
};

/// Seeded shuffle, then prefix slicing. Leftover problems are dropped.
inline SplitResult split(const std::vector<Problem>& problems, std::uint64_t seed,
                         SplitSizes sizes) {
  if (sizes.sft + sizes.rl + sizes.test > problems.size()) {
    throw DatasetError("split sizes " + std::to_string(sizes.sft) + "/" +
                       std::to_string(sizes.rl) + "/" + std::to_string(sizes.test) +
                       " exceed problem count " + std::to_string(problems.size()));
  }
  std::vector<std::size_t> order(problems.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  seeded_shuffle(order, rng);

  SplitResult r;
  std::size_t cursor = 0;
  auto take = [&](std::vector<Problem>& dst, std::size_t n, SplitTag tag) {
    for (std::size_t k = 0; k < n; ++k, ++cursor) {
      Problem p = problems[order[cursor]];
      p.split = tag;
      dst.push_back(std::move(p));
    }
  };
  take(r.sft, sizes.sft, SplitTag::sft);
  take(r.rl, sizes.rl, SplitTag::rl);
  take(r.test, sizes.test, SplitTag::test);
  return r;
}

}  // namespace pathgrpo
