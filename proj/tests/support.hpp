#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "pathgrpo/dataset.hpp"
#include "pathgrpo/synthetic.hpp"

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pathgrpo-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline pathgrpo::Problem make_problem(std::string id, std::string question,
                                      std::vector<std::string> contents, char gold) {
  pathgrpo::Problem p;
  p.id = std::move(id);
  p.question = std::move(question);
  for (std::size_t i = 0; i < contents.size(); ++i) {
    p.options.push_back({static_cast<char>('A' + i), contents[i]});
  }
  p.gold = p.options.at(static_cast<std::size_t>(gold - 'A'));
  return p;
}

/// `n_sft` problems tagged sft followed by `n_rl` tagged rl.
inline std::vector<pathgrpo::Problem> tagged_fixture(std::size_t n_sft, std::size_t n_rl,
                                                     std::uint64_t seed) {
  auto probs = pathgrpo::make_synthetic_problems(n_sft + n_rl, seed);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i].split = i < n_sft ? pathgrpo::SplitTag::sft : pathgrpo::SplitTag::rl;
  }
  return probs;
}

/// All problems tagged with one split.
inline std::vector<pathgrpo::Problem> single_split_fixture(std::size_t n, std::uint64_t seed,
                                                           pathgrpo::SplitTag tag) {
  auto probs = pathgrpo::make_synthetic_problems(n, seed);
  for (auto& p : probs) p.split = tag;
  return probs;
}

}  // namespace testsupport
