#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "apg/attacks/saliency.hpp"
#include "apg/nn/network.hpp"

namespace apg::attacks {

enum class Algorithm { fgsm, jsma, fjsma };

std::string_view to_string(Algorithm algorithm);
/// Accepts "fgsm", "jsma", "fjsma" (case-insensitive).
std::optional<Algorithm> parse_algorithm(std::string_view name);
std::string_view to_string(Direction direction);
std::optional<Direction> parse_direction(std::string_view name);

struct AttackSpec {
  Algorithm algorithm = Algorithm::fgsm;
  /// Required for JSMA/FJSMA; optional for FGSM (untargeted when absent).
  std::optional<std::size_t> target;
  /// FGSM: L-infinity step epsilon in [0, 1].
  /// JSMA/FJSMA: maximum share of features changed, in percent, (0, 100].
  double strength = 0.0;
  /// FJSMA only: candidate first coordinates as a percent of the feature count.
  std::optional<double> k_percent;
  Direction direction = Direction::decrease;
  nn::JacobianMode saliency = nn::JacobianMode::probabilities;
};

/// Throws ArgumentError naming the offending field.
void validate(const AttackSpec& spec, std::size_t num_classes);

struct Distances {
  std::size_t l0 = 0;
  double l2 = 0.0;
  double linf = 0.0;

  friend bool operator==(const Distances&, const Distances&) = default;
};

/// ArgumentError when lengths differ.
Distances distances(std::span<const float> original, std::span<const float> adversarial);

/// One JSMA/FJSMA iteration, recorded for inspection.
struct SearchStep {
  std::size_t gamma_size = 0;      // |search space| when the pair was chosen
  std::size_t first_choices = 0;   // |G| for JSMA, min(k, |G|) for FJSMA
  std::uint64_t candidates = 0;    // pairs examined
  std::size_t p1 = 0;
  std::size_t p2 = 0;

  friend bool operator==(const SearchStep&, const SearchStep&) = default;
};

struct AttackOutcome {
  nn::Image adversarial;
  nn::ClassProbs original_probs;
  nn::ClassProbs adversarial_probs;
  std::size_t original_class = 0;
  std::size_t predicted = 0;
  bool success = false;
  std::size_t l0 = 0;
  double l2 = 0.0;
  double linf = 0.0;
  std::size_t iterations = 0;
  double elapsed_seconds = 0.0;
  std::vector<SearchStep> steps;
};

/// floor(M * upsilon / 100): the most features a JSMA-style run may change.
std::size_t feature_budget(std::size_t features, double upsilon_percent);
/// ceil(M * k_percent / 100): FJSMA's candidate count.
std::size_t apriori_k(std::size_t features, double k_percent);

/// Single-step sign-of-gradient attack. Untargeted runs ascend the loss of
/// the model's current prediction; targeted runs descend the loss of the target.
AttackOutcome fgsm(const nn::Network& model, std::span<const float> x, const AttackSpec& spec);

/// Iterative saliency-pair attack; exhaustive pair search.
AttackOutcome jsma(const nn::Network& model, std::span<const float> x, const AttackSpec& spec);

/// Iterative saliency-pair attack; first coordinate restricted to the top k.
AttackOutcome fjsma(const nn::Network& model, std::span<const float> x, const AttackSpec& spec);

/// Dispatches on spec.algorithm.
AttackOutcome run_attack(const nn::Network& model, std::span<const float> x, const AttackSpec& spec);

}  // namespace apg::attacks
