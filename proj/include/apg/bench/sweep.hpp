#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apg/attacks/attack.hpp"
#include "apg/nn/dataset.hpp"
#include "apg/nn/network.hpp"

namespace apg::bench {

enum class TargetingRule {
  next_class,  // target = (label + 1) mod C
};

struct SweepConfig {
  std::vector<double> upsilons{10, 15, 20, 25};
  std::vector<double> k_percents{10, 15, 20, 30};
  std::size_t sample_count = 200;
  TargetingRule targeting = TargetingRule::next_class;
  std::uint64_t rng_seed = 1;
  std::vector<attacks::Algorithm> algorithms{attacks::Algorithm::jsma, attacks::Algorithm::fjsma};
  /// Saliency attacks push features up to 1 by default here, the configuration
  /// whose pair search spans the whole image.
  attacks::Direction direction = attacks::Direction::increase;
  /// FGSM rows, when requested, use these epsilons in the upsilon column.
  std::vector<double> fgsm_epsilons{0.1, 0.2, 0.3};
};

struct BenchRow {
  attacks::Algorithm algorithm = attacks::Algorithm::jsma;
  double upsilon = 0.0;
  std::optional<double> k_percent;
  double evasion_rate = 0.0;
  double mean_seconds = 0.0;
  std::size_t sample_count = 0;

  friend bool operator==(const BenchRow&, const BenchRow&) = default;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  /// One line per sample whose attack threw; such samples count as failures.
  std::vector<std::string> diagnostics;
};

/// Identifies the grid cell an outcome belongs to.
struct CellKey {
  attacks::Algorithm algorithm;
  double upsilon;
  std::optional<double> k_percent;
};

using OutcomeObserver =
    std::function<void(const CellKey&, std::size_t test_index, const attacks::AttackOutcome&)>;

/// successes / n. ArgumentError on an empty list.
double evasion_rate(std::span<const attacks::AttackOutcome> outcomes);

/// Test-split indices the sweep attacks: a permutation fixed by rng_seed,
/// filtered to samples the model classifies correctly, first `count` kept.
std::vector<std::size_t> select_samples(const nn::Network& model, const nn::Dataset& test,
                                        std::size_t count, std::uint64_t rng_seed);

/// Runs every (algorithm, upsilon[, k]) cell over the same samples. Only the
/// attack call is timed. Per-sample exceptions are recorded as failures.
BenchReport run_sweep(const nn::Network& model, const nn::Dataset& test, const SweepConfig& cfg,
                      const OutcomeObserver& observer = {});

/// Fixed-width table: one column per upsilon (in row order of appearance),
/// evasion-rate rows first, then time rows.
std::string format_table(const BenchReport& report);

/// Header: algorithm,upsilon,k_percent,evasion_rate,mean_seconds,sample_count
std::string to_csv(const BenchReport& report);
BenchReport parse_csv(const std::string& text);
void write_csv(const BenchReport& report, const std::filesystem::path& path);
BenchReport read_csv(const std::filesystem::path& path);

}  // namespace apg::bench
