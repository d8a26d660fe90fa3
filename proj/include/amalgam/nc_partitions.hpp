#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "amalgam/core.hpp"

namespace amalgam {

/// A non-crossing partition of {1..n}. Blocks are ascending lists of
/// positions, ordered by their minimal element.
struct NonCrossingPartition {
  int n = 0;
  std::vector<std::vector<int>> blocks;

  bool operator==(const NonCrossingPartition&) const = default;
};

/// Nesting structure of a non-crossing partition: one node per block,
/// children are the blocks nested directly inside, each annotated with the
/// 1-based local index of the parent element it follows. Flattening the
/// forest in order recovers the partition.
struct NestingForest {
  struct Node {
    std::vector<int> block;
    // (insert_after, node id): subtree sits between parent elements
    // insert_after and insert_after+1.
    std::vector<std::pair<int, int>> children;
  };
  std::vector<Node> nodes;
  std::vector<int> roots;
};

inline constexpr int kMaxEnumerateN = 14;
inline constexpr int kMaxEnumerateN2 = 16;

namespace detail {

// Depth-first generation over canonical bracket strings. Per element the
// string holds one 'm', preceded by '(' when its block opens and followed
// by ')' runs as blocks close. Symbols are tried in the fixed order
// '(' < 'm' < ')', so partitions stream out in lexicographic order of
// their opener/closer encoding. A child block may open only after its
// parent holds an element, and a block may close only when its last event
// was an own element; this makes the string canonical (one string per
// partition).
template <bool PairsOnly, class Visitor>
class NcGenerator {
 public:
  NcGenerator(int n, Visitor& visit) : n_(n), visit_(visit) {}

  void run() {
    if (n_ == 0) {
      NonCrossingPartition empty;
      visit_(empty);
      return;
    }
    blocks_.clear();
    stack_.clear();
    placed_ = 0;
    step();
  }

 private:
  struct Open {
    int block_index;
    bool last_was_element = false;
  };

  bool can_finish() const {
    // Minimal elements still required to legally close every open block:
    // one per block below the top (each sees a child close and must take an
    // element before closing), plus the top's own demand.
    if (stack_.empty()) return true;
    int need = static_cast<int>(stack_.size()) - 1;
    if constexpr (PairsOnly) {
      need += 2 - static_cast<int>(blocks_[stack_.back().block_index].size());
    } else {
      need += stack_.back().last_was_element ? 0 : 1;
    }
    return n_ - placed_ >= need;
  }

  void step() {
    if (placed_ == n_ && stack_.empty()) {
      visit_(NonCrossingPartition{n_, blocks_});
      return;
    }
    if (!can_finish()) return;

    // '(' — open a new block (forces an 'm' next). Legal once the enclosing
    // block holds an element, so an opener is always followed directly by
    // the new block's first element. A full pair block is skipped: a child
    // under it could never let it close after an own element again.
    if (placed_ < n_ &&
        (stack_.empty() || !blocks_[stack_.back().block_index].empty())) {
      bool ok = true;
      if constexpr (PairsOnly) {
        if (!stack_.empty() && blocks_[stack_.back().block_index].size() == 2) ok = false;
      }
      if (ok) {
        blocks_.emplace_back();
        stack_.push_back(Open{static_cast<int>(blocks_.size()) - 1, false});
        step();
        stack_.pop_back();
        blocks_.pop_back();
      }
    }

    // 'm' — place the next element into the innermost open block. blocks_
    // may reallocate during the recursion, so re-index instead of holding a
    // reference across the call.
    if (placed_ < n_ && !stack_.empty()) {
      const int bi = stack_.back().block_index;
      const bool room = !PairsOnly || blocks_[bi].size() < 2;
      if (room) {
        const bool prev = stack_.back().last_was_element;
        blocks_[bi].push_back(++placed_);
        stack_.back().last_was_element = true;
        step();
        stack_.back().last_was_element = prev;
        blocks_[bi].pop_back();
        --placed_;
      }
    }

    // ')' — close the innermost open block.
    if (!stack_.empty() && stack_.back().last_was_element) {
      const std::vector<int>& blk = blocks_[stack_.back().block_index];
      const bool sized = PairsOnly ? blk.size() == 2 : !blk.empty();
      if (sized) {
        Open closed = stack_.back();
        stack_.pop_back();
        const bool prev = stack_.empty() ? false : stack_.back().last_was_element;
        if (!stack_.empty()) stack_.back().last_was_element = false;
        step();
        if (!stack_.empty()) stack_.back().last_was_element = prev;
        stack_.push_back(closed);
      }
    }
  }

  int n_;
  Visitor& visit_;
  std::vector<std::vector<int>> blocks_;  // in opening order == order by min
  std::vector<Open> stack_;
  int placed_ = 0;
};

}  // namespace detail

/// Visit every partition in NC(n) in the canonical enumeration order
/// without materializing the list. No size cap; memory is O(n).
template <class Visitor>
void for_each_nc(int n, Visitor&& visit) {
  if (n < 0) throw SizeLimitError("for_each_nc: n must be non-negative");
  detail::NcGenerator<false, Visitor> gen(n, visit);
  gen.run();
}

/// Visit every non-crossing pair partition of {1..n} (empty for odd n).
template <class Visitor>
void for_each_nc2(int n, Visitor&& visit) {
  if (n < 0) throw SizeLimitError("for_each_nc2: n must be non-negative");
  if (n % 2 != 0) return;
  detail::NcGenerator<true, Visitor> gen(n, visit);
  gen.run();
}

/// All of NC(n), Catalan(n) partitions, in canonical order. n <= 14.
inline std::vector<NonCrossingPartition> enumerate_nc(int n) {
  if (n < 0 || n > kMaxEnumerateN)
    throw SizeLimitError("enumerate_nc: n out of range [0, 14]");
  std::vector<NonCrossingPartition> out;
  for_each_nc(n, [&](const NonCrossingPartition& p) { out.push_back(p); });
  return out;
}

/// All non-crossing pair partitions of {1..n}; Catalan(n/2) of them for
/// even n, none for odd n. n <= 16.
inline std::vector<NonCrossingPartition> enumerate_nc2(int n) {
  if (n < 0 || n > kMaxEnumerateN2)
    throw SizeLimitError("enumerate_nc2: n out of range [0, 16]");
  std::vector<NonCrossingPartition> out;
  for_each_nc2(n, [&](const NonCrossingPartition& p) { out.push_back(p); });
  return out;
}

inline long long count_nc(int n) {
  long long c = 0;
  for_each_nc(n, [&](const NonCrossingPartition&) { ++c; });
  return c;
}

inline long long count_nc2(int n) {
  long long c = 0;
  for_each_nc2(n, [&](const NonCrossingPartition&) { ++c; });
  return c;
}

/// Structural validation: blocks partition {1..n}, ascending, ordered by
/// minimum, and no crossing a<b<c<d with a,c and b,d in distinct blocks.
/// The crossing test is a single stack scan.
inline bool is_valid_nc(const NonCrossingPartition& p) {
  std::vector<int> owner(static_cast<std::size_t>(p.n) + 1, -1);
  int prev_min = 0;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& blk = p.blocks[b];
    if (blk.empty()) return false;
    if (blk.front() <= prev_min) return false;
    prev_min = blk.front();
    int prev = 0;
    for (int x : blk) {
      if (x <= prev || x < 1 || x > p.n) return false;
      if (owner[static_cast<std::size_t>(x)] != -1) return false;
      owner[static_cast<std::size_t>(x)] = static_cast<int>(b);
      prev = x;
    }
  }
  for (int x = 1; x <= p.n; ++x)
    if (owner[static_cast<std::size_t>(x)] == -1) return false;

  // Non-crossing: an open block must sit on top of the stack whenever one
  // of its elements appears.
  std::vector<int> remaining(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b)
    remaining[b] = static_cast<int>(p.blocks[b].size());
  std::vector<int> stack;
  for (int x = 1; x <= p.n; ++x) {
    const int b = owner[static_cast<std::size_t>(x)];
    if (stack.empty() || stack.back() != b) {
      if (std::find(stack.begin(), stack.end(), b) != stack.end()) return false;
      stack.push_back(b);
    }
    if (--remaining[static_cast<std::size_t>(b)] == 0) stack.pop_back();
  }
  return stack.empty();
}

/// Decompose a partition into its nesting forest. Children attach after the
/// parent element they directly follow; blocks whose elements fall after a
/// block's maximum belong to the enclosing block (or the root level), never
/// to that block.
inline NestingForest nesting_forest(const NonCrossingPartition& p) {
  NestingForest f;
  f.nodes.resize(p.blocks.size());
  std::vector<int> owner(static_cast<std::size_t>(p.n) + 1, -1);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    f.nodes[b].block = p.blocks[b];
    for (int x : p.blocks[b]) owner[static_cast<std::size_t>(x)] = static_cast<int>(b);
  }
  struct OpenBlock {
    int id;
    int elements_seen = 0;
  };
  std::vector<OpenBlock> stack;
  std::vector<int> seen(p.blocks.size(), 0);
  for (int x = 1; x <= p.n; ++x) {
    const int b = owner[static_cast<std::size_t>(x)];
    if (seen[static_cast<std::size_t>(b)] == 0) {
      if (stack.empty()) {
        f.roots.push_back(b);
      } else {
        f.nodes[static_cast<std::size_t>(stack.back().id)].children.emplace_back(
            stack.back().elements_seen, b);
      }
      stack.push_back(OpenBlock{b, 0});
    }
    // non-crossing guarantees the block of x is the innermost open one
    ++stack.back().elements_seen;
    ++seen[static_cast<std::size_t>(b)];
    if (seen[static_cast<std::size_t>(b)] ==
        static_cast<int>(p.blocks[static_cast<std::size_t>(b)].size()))
      stack.pop_back();
  }
  return f;
}

/// Rebuild the partition a forest describes, ignoring the stored positions
/// and using only block sizes and attachment points. Inverse of
/// nesting_forest on valid input.
inline NonCrossingPartition reconstruct(const NestingForest& f) {
  NonCrossingPartition p;
  std::vector<std::vector<int>> blocks(f.nodes.size());
  int next = 0;
  auto emit = [&](auto&& self, int id) -> void {
    const NestingForest::Node& node = f.nodes[static_cast<std::size_t>(id)];
    std::size_t child = 0;
    for (int j = 1; j <= static_cast<int>(node.block.size()); ++j) {
      blocks[static_cast<std::size_t>(id)].push_back(++next);
      while (child < node.children.size() && node.children[child].first == j) {
        self(self, node.children[child].second);
        ++child;
      }
    }
  };
  for (int r : f.roots) emit(emit, r);
  p.n = next;
  p.blocks = std::move(blocks);
  std::sort(p.blocks.begin(), p.blocks.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return p;
}

/// The canonical opener/closer word of a partition: per element an 'm',
/// with '(' where a block opens and ')' where one closes. Enumeration
/// order is lexicographic in this encoding under '(' < 'm' < ')'.
inline std::string opener_closer_encoding(const NonCrossingPartition& p) {
  std::vector<int> open_at(static_cast<std::size_t>(p.n) + 1, 0);
  std::vector<int> close_at(static_cast<std::size_t>(p.n) + 1, 0);
  for (const auto& blk : p.blocks) {
    ++open_at[static_cast<std::size_t>(blk.front())];
    ++close_at[static_cast<std::size_t>(blk.back())];
  }
  std::string s;
  for (int x = 1; x <= p.n; ++x) {
    s.append(static_cast<std::size_t>(open_at[static_cast<std::size_t>(x)]), '(');
    s.push_back('m');
    s.append(static_cast<std::size_t>(close_at[static_cast<std::size_t>(x)]), ')');
  }
  return s;
}

/// Block notation, e.g. "{{1,3},{2}}". The empty partition prints "{}".
inline std::string to_block_notation(const NonCrossingPartition& p) {
  std::ostringstream os;
  os << '{';
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    if (b) os << ',';
    os << '{';
    for (std::size_t i = 0; i < p.blocks[b].size(); ++i) {
      if (i) os << ',';
      os << p.blocks[b][i];
    }
    os << '}';
  }
  os << '}';
  return os.str();
}

/// Parse block notation produced by to_block_notation. Also accepts blocks
/// in any order and normalizes them.
inline NonCrossingPartition parse_block_notation(const std::string& text) {
  NonCrossingPartition p;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto expect = [&](char c) {
    skip_ws();
    if (i >= text.size() || text[i] != c)
      throw ConfigError("parse_block_notation: expected '" + std::string(1, c) + "'");
    ++i;
  };
  expect('{');
  skip_ws();
  int max_pos = 0;
  while (i < text.size() && text[i] == '{') {
    ++i;
    std::vector<int> blk;
    skip_ws();
    while (i < text.size() && text[i] != '}') {
      std::size_t used = 0;
      int v = std::stoi(text.substr(i), &used);
      i += used;
      blk.push_back(v);
      max_pos = std::max(max_pos, v);
      skip_ws();
      if (i < text.size() && text[i] == ',') {
        ++i;
        skip_ws();
      }
    }
    expect('}');
    std::sort(blk.begin(), blk.end());
    p.blocks.push_back(std::move(blk));
    skip_ws();
    if (i < text.size() && text[i] == ',') {
      ++i;
      skip_ws();
    }
  }
  expect('}');
  p.n = max_pos;
  std::sort(p.blocks.begin(), p.blocks.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  if (!is_valid_nc(p)) throw ConfigError("parse_block_notation: not a valid non-crossing partition");
  return p;
}

}  // namespace amalgam
