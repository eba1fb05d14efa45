#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "snipsearch/common.hpp"

namespace snipsearch {

/// Token <-> index map with fixed reserved indices.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kCls = 4;
  static constexpr int kSep = 5;
  static constexpr int kReserved = 6;

  Vocabulary();

  /// Keeps tokens seen at least `min_frequency` times, most frequent first
  /// (ties lexicographic), truncated to `max_size` entries including reserved.
  static Vocabulary build(const std::vector<Tokens>& corpus, std::size_t min_frequency,
                          std::size_t max_size = 0);

  int index(const std::string& token) const;
  const std::string& token(int index) const;
  std::vector<int> encode(const Tokens& tokens) const;
  // Stops at EOS; skips PAD/BOS.
  Tokens decode(const std::vector<int>& ids) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return index_.contains(token); }

  // One token per line; the line number is the index.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace snipsearch
