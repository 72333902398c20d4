#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "ncq/llm_gateway.hpp"

namespace ncq::test {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ncq-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<size_t>(range(0, static_cast<int>(v.size()) - 1))];
  }
  std::string word(int min_len = 1, int max_len = 8) {
    static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
    std::string w;
    const int n = range(min_len, max_len);
    for (int i = 0; i < n; ++i) w += letters[static_cast<size_t>(range(0, 25))];
    return w;
  }
  std::string phrase(int min_words = 1, int max_words = 6) {
    std::string s;
    const int n = range(min_words, max_words);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + word();
    return s;
  }
  template <typename T>
  void shuffle(std::vector<T>& v) { std::shuffle(v.begin(), v.end(), rng_); }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline nlohmann::json mock_default(std::vector<std::string> completions) {
  return {{"default", true}, {"completions", std::move(completions)}};
}

inline nlohmann::json mock_contains(const std::string& needle, std::vector<std::string> completions) {
  return {{"prompt_contains", needle}, {"completions", std::move(completions)}};
}

inline std::string mock_script(const std::vector<nlohmann::json>& entries) {
  std::string out;
  for (const auto& e : entries) out += e.dump() + "\n";
  return out;
}

inline std::unique_ptr<Gateway> mock_gateway(const std::vector<nlohmann::json>& entries, RateLimit limit = {},
                                             RetryPolicy retry = {}) {
  auto backend = std::make_unique<ScriptedMockBackend>(ScriptedMockBackend::parse_script(mock_script(entries)));
  return std::make_unique<Gateway>(std::move(backend), limit, retry, [](std::chrono::milliseconds) {});
}

inline ScriptedMockBackend& mock_of(Gateway& g) { return dynamic_cast<ScriptedMockBackend&>(g.backend()); }

}  // namespace ncq::test
