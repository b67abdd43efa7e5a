#pragma once

#include <cstdint>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace zipftok::tok {

/// Code-point trie mapping piece strings to ids; used for longest-match and
/// lattice construction.
class PieceTrie {
 public:
  static constexpr std::int32_t kNoPiece = -1;

  PieceTrie() : terminal_(1, kNoPiece) {}

  void insert(std::u32string_view piece, std::int32_t id) {
    std::uint32_t node = 0;
    for (char32_t c : piece) {
      auto [it, inserted] = children_.try_emplace(edge(node, c), static_cast<std::uint32_t>(terminal_.size()));
      if (inserted) terminal_.push_back(kNoPiece);
      node = it->second;
    }
    terminal_[node] = id;
  }

  /// Calls fn(end, id) for every piece that is a prefix of text[begin..).
  template <class Fn>
  void for_each_prefix(std::u32string_view text, std::size_t begin, Fn&& fn) const {
    std::uint32_t node = 0;
    for (std::size_t i = begin; i < text.size(); ++i) {
      auto it = children_.find(edge(node, text[i]));
      if (it == children_.end()) return;
      node = it->second;
      if (terminal_[node] != kNoPiece) fn(i + 1, terminal_[node]);
    }
  }

 private:
  static std::uint64_t edge(std::uint32_t node, char32_t c) noexcept {
    return (static_cast<std::uint64_t>(node) << 21) | static_cast<std::uint64_t>(c);
  }

  std::unordered_map<std::uint64_t, std::uint32_t> children_;
  std::vector<std::int32_t> terminal_;
};

}  // namespace zipftok::tok
