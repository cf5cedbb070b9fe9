#include "apg/attacks/saliency.hpp"

#include <algorithm>
#include <tuple>

#include "apg/error.hpp"

namespace apg::attacks {
namespace {

// Per-feature derivative sums restricted to the search space, so every pair
// costs two additions and a multiply.
struct FeatureSums {
  std::vector<double> target;  // d F_t / d x_i
  std::vector<double> others;  // sum over j != t of d F_j / d x_i
};

FeatureSums gather(const nn::Jacobian& jacobian, const SearchSpace& gamma, std::size_t target) {
  if (target >= jacobian.classes()) {
    throw ArgumentError("target", "class " + std::to_string(target) + " out of range");
  }
  const auto idx = gamma.indices();
  FeatureSums sums{std::vector<double>(idx.size()), std::vector<double>(idx.size(), 0.0)};
  for (std::size_t n = 0; n < idx.size(); ++n) {
    if (idx[n] >= jacobian.features()) {
      throw ArgumentError("gamma", "feature " + std::to_string(idx[n]) + " out of range");
    }
    sums.target[n] = jacobian(target, idx[n]);
  }
  for (std::size_t j = 0; j < jacobian.classes(); ++j) {
    if (j == target) continue;
    const auto row = jacobian.row(j);
    for (std::size_t n = 0; n < idx.size(); ++n) sums.others[n] += row[idx[n]];
  }
  return sums;
}

// Scores one pair given positions lo < hi in the search space. Returns a
// non-positive score when the pair is not admissible.
struct Candidate {
  double score;
  double alpha;
  double beta;
};

inline Candidate score_pair(const FeatureSums& s, std::size_t lo, std::size_t hi, Direction dir) {
  const double alpha = s.target[lo] + s.target[hi];
  const double beta = s.others[lo] + s.others[hi];
  const bool admissible =
      dir == Direction::decrease ? (alpha < 0.0 && beta > 0.0) : (alpha > 0.0 && beta < 0.0);
  return {admissible ? -alpha * beta : 0.0, alpha, beta};
}

// Position order used for the top-k ranking: larger key first, then smaller index.
std::vector<std::size_t> top_k_positions(const FeatureSums& s, const SearchSpace& gamma,
                                         std::size_t k, Direction dir) {
  const auto idx = gamma.indices();
  std::vector<std::size_t> pos(idx.size());
  for (std::size_t n = 0; n < pos.size(); ++n) pos[n] = n;
  const auto key = [&](std::size_t n) {
    return dir == Direction::decrease ? -s.target[n] : s.target[n];
  };
  const auto before = [&](std::size_t a, std::size_t b) {
    const double ka = key(a);
    const double kb = key(b);
    if (ka != kb) return ka > kb;
    return idx[a] < idx[b];
  };
  k = std::min(k, pos.size());
  if (k < pos.size()) {
    std::nth_element(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(k), pos.end(), before);
    pos.resize(k);
  }
  std::sort(pos.begin(), pos.end(), before);
  return pos;
}

}  // namespace

SearchSpace::SearchSpace(std::vector<std::uint32_t> indices) : indices_(std::move(indices)) {
  std::sort(indices_.begin(), indices_.end());
  indices_.erase(std::unique(indices_.begin(), indices_.end()), indices_.end());
}

SearchSpace SearchSpace::from_image(std::span<const float> x, Direction direction) {
  std::vector<std::uint32_t> idx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool movable = direction == Direction::decrease ? x[i] > 0.0f : x[i] < 1.0f;
    if (movable) idx.push_back(static_cast<std::uint32_t>(i));
  }
  SearchSpace out;
  out.indices_ = std::move(idx);
  return out;
}

bool SearchSpace::contains(std::uint32_t i) const {
  return std::binary_search(indices_.begin(), indices_.end(), i);
}

void SearchSpace::erase(std::uint32_t i) {
  const auto it = std::lower_bound(indices_.begin(), indices_.end(), i);
  if (it != indices_.end() && *it == i) indices_.erase(it);
}

PairSearch select_pair_exhaustive(const nn::Jacobian& jacobian, const SearchSpace& gamma,
                                  std::size_t target, Direction direction) {
  PairSearch out;
  const FeatureSums sums = gather(jacobian, gamma, target);
  const std::size_t n = gamma.size();
  if (n < 2) return out;

  double best = 0.0;
  std::size_t best_lo = 0;
  std::size_t best_hi = 0;
  Candidate best_c{};
  for (std::size_t lo = 0; lo + 1 < n; ++lo) {
    for (std::size_t hi = lo + 1; hi < n; ++hi) {
      const Candidate c = score_pair(sums, lo, hi, direction);
      // Strict '>' keeps the first (lexicographically smallest) maximiser.
      if (c.score > best) {
        best = c.score;
        best_lo = lo;
        best_hi = hi;
        best_c = c;
      }
    }
  }
  out.candidates = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (best > 0.0) {
    const auto idx = gamma.indices();
    out.pair = PairSelection{idx[best_lo], idx[best_hi], best_c.score, best_c.alpha, best_c.beta};
  }
  return out;
}

std::vector<std::size_t> select_top_k(const nn::Jacobian& jacobian, const SearchSpace& gamma,
                                      std::size_t target, std::size_t k, Direction direction) {
  if (k == 0) throw ArgumentError("k", "must be at least 1");
  const FeatureSums sums = gather(jacobian, gamma, target);
  const auto positions = top_k_positions(sums, gamma, k, direction);
  std::vector<std::size_t> out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(gamma.indices()[p]);
  return out;
}

PairSearch select_pair_apriori(const nn::Jacobian& jacobian, const SearchSpace& gamma,
                               std::size_t target, std::size_t k, Direction direction) {
  if (k == 0) throw ArgumentError("k", "must be at least 1");
  PairSearch out;
  const FeatureSums sums = gather(jacobian, gamma, target);
  const std::size_t n = gamma.size();
  if (n < 2) return out;
  const auto firsts = top_k_positions(sums, gamma, k, direction);

  double best = 0.0;
  std::size_t best_lo = 0;
  std::size_t best_hi = 0;
  Candidate best_c{};
  for (std::size_t p : firsts) {
    for (std::size_t q = 0; q < n; ++q) {
      if (q == p) continue;
      const std::size_t lo = std::min(p, q);
      const std::size_t hi = std::max(p, q);
      const Candidate c = score_pair(sums, lo, hi, direction);
      if (c.score > best ||
          (c.score == best && c.score > 0.0 && std::tie(lo, hi) < std::tie(best_lo, best_hi))) {
        best = c.score;
        best_lo = lo;
        best_hi = hi;
        best_c = c;
      }
    }
  }
  out.candidates = static_cast<std::uint64_t>(firsts.size()) * (n - 1);
  if (best > 0.0) {
    const auto idx = gamma.indices();
    out.pair = PairSelection{idx[best_lo], idx[best_hi], best_c.score, best_c.alpha, best_c.beta};
  }
  return out;
}

}  // namespace apg::attacks
