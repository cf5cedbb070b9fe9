#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "apg/nn/network.hpp"

namespace apg::attacks {

/// Which way JSMA-style attacks push the selected features.
enum class Direction {
  decrease,  // features driven to 0; admissible pairs have alpha < 0, beta > 0
  increase,  // features driven to 1; admissible pairs have alpha > 0, beta < 0
};

/// Ordered set of feature indices still eligible for perturbation.
class SearchSpace {
 public:
  SearchSpace() = default;
  /// Takes any index list; duplicates are dropped and order normalised.
  explicit SearchSpace(std::vector<std::uint32_t> indices);

  /// Features that can still move: x_i > 0 when decreasing, x_i < 1 when increasing.
  static SearchSpace from_image(std::span<const float> x, Direction direction);

  std::span<const std::uint32_t> indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool contains(std::uint32_t i) const;
  void erase(std::uint32_t i);

 private:
  std::vector<std::uint32_t> indices_;
};

/// Winning feature pair. p1 < p2; score = -alpha * beta > 0.
struct PairSelection {
  std::size_t p1 = 0;
  std::size_t p2 = 0;
  double score = 0.0;
  double alpha = 0.0;  // summed target-class derivative over {p1, p2}
  double beta = 0.0;   // summed other-class derivative over {p1, p2}

  friend bool operator==(const PairSelection&, const PairSelection&) = default;
};

/// Selection plus the number of candidate pairs examined.
struct PairSearch {
  std::optional<PairSelection> pair;
  std::uint64_t candidates = 0;
};

/// Every unordered pair of the search space: |G| (|G| - 1) / 2 candidates.
/// Ties on score go to the lexicographically smallest (p1, p2).
PairSearch select_pair_exhaustive(const nn::Jacobian& jacobian, const SearchSpace& gamma,
                                  std::size_t target, Direction direction = Direction::decrease);

/// The min(k, |G|) search-space features whose target-class derivative points
/// most strongly in the attack direction (most negative when decreasing), ties
/// to the smaller index. Returned in rank order. Uses selection, not a full sort.
std::vector<std::size_t> select_top_k(const nn::Jacobian& jacobian, const SearchSpace& gamma,
                                      std::size_t target, std::size_t k,
                                      Direction direction = Direction::decrease);

/// Apriori variant: first coordinate restricted to select_top_k, second
/// ranging over the whole search space, |K| (|G| - 1) candidates.
/// Same admissibility, score and tie-break as the exhaustive search, so with
/// k >= |G| the two return identical selections.
PairSearch select_pair_apriori(const nn::Jacobian& jacobian, const SearchSpace& gamma,
                               std::size_t target, std::size_t k,
                               Direction direction = Direction::decrease);

}  // namespace apg::attacks
