#include "apg/attacks/attack.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <string>

#include "apg/error.hpp"

namespace apg::attacks {
namespace {

using Clock = std::chrono::steady_clock;

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void finish(AttackOutcome& out, std::span<const float> x, Clock::time_point start) {
  const Distances d = distances(x, out.adversarial);
  out.l0 = d.l0;
  out.l2 = d.l2;
  out.linf = d.linf;
  out.elapsed_seconds = std::chrono::duration<double>(Clock::now() - start).count();
}

AttackOutcome saliency_attack(const nn::Network& model, std::span<const float> x,
                              const AttackSpec& spec, bool apriori) {
  const auto start = Clock::now();
  validate(spec, model.num_classes());
  const std::size_t target = *spec.target;
  const std::size_t features = model.input_size();
  const std::size_t budget = feature_budget(features, spec.strength);
  const std::size_t k = apriori ? apriori_k(features, *spec.k_percent) : features;
  const float extreme = spec.direction == Direction::decrease ? 0.0f : 1.0f;

  AttackOutcome out;
  out.adversarial.assign(x.begin(), x.end());
  out.original_probs = model.forward(x);
  out.original_class = nn::argmax(out.original_probs);
  out.adversarial_probs = out.original_probs;

  SearchSpace gamma = SearchSpace::from_image(x, spec.direction);
  std::size_t changed = 0;
  for (;;) {
    out.predicted = nn::argmax(out.adversarial_probs);
    if (out.predicted == target) {
      out.success = true;
      break;
    }
    // Each step changes two fresh features; stop before the budget would be exceeded.
    if (changed + 2 > budget || gamma.size() < 2) break;

    const nn::Jacobian jac = model.jacobian(out.adversarial, spec.saliency);
    const PairSearch search =
        apriori ? select_pair_apriori(jac, gamma, target, k, spec.direction)
                : select_pair_exhaustive(jac, gamma, target, spec.direction);
    if (!search.pair) break;

    const auto& pair = *search.pair;
    out.steps.push_back({gamma.size(), apriori ? std::min(k, gamma.size()) : gamma.size(),
                         search.candidates, pair.p1, pair.p2});
    for (std::size_t p : {pair.p1, pair.p2}) {
      if (out.adversarial[p] == x[p]) ++changed;
      out.adversarial[p] = extreme;
      gamma.erase(static_cast<std::uint32_t>(p));
    }
    ++out.iterations;
    out.adversarial_probs = model.forward(out.adversarial);
  }
  finish(out, x, start);
  return out;
}

}  // namespace

std::string_view to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::fgsm: return "fgsm";
    case Algorithm::jsma: return "jsma";
    case Algorithm::fjsma: return "fjsma";
  }
  return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) {
  const std::string n = lower(name);
  if (n == "fgsm") return Algorithm::fgsm;
  if (n == "jsma") return Algorithm::jsma;
  if (n == "fjsma") return Algorithm::fjsma;
  return std::nullopt;
}

std::string_view to_string(Direction direction) {
  return direction == Direction::decrease ? "decrease" : "increase";
}

std::optional<Direction> parse_direction(std::string_view name) {
  const std::string n = lower(name);
  if (n == "decrease") return Direction::decrease;
  if (n == "increase") return Direction::increase;
  return std::nullopt;
}

void validate(const AttackSpec& spec, std::size_t num_classes) {
  if (spec.target && *spec.target >= num_classes) {
    throw ArgumentError("target", "must be a class index below " + std::to_string(num_classes));
  }
  if (!std::isfinite(spec.strength)) throw ArgumentError("strength", "must be finite");
  if (spec.algorithm == Algorithm::fgsm) {
    if (spec.strength < 0.0 || spec.strength > 1.0) {
      throw ArgumentError("strength", "FGSM epsilon must lie in [0, 1]");
    }
    if (spec.k_percent) throw ArgumentError("k_percent", "only applies to FJSMA");
    return;
  }
  if (!spec.target) throw ArgumentError("target", "required for targeted saliency attacks");
  if (spec.strength <= 0.0 || spec.strength > 100.0) {
    throw ArgumentError("strength", "upsilon must lie in (0, 100]");
  }
  if (spec.algorithm == Algorithm::fjsma) {
    if (!spec.k_percent) throw ArgumentError("k_percent", "required for FJSMA");
    if (!(*spec.k_percent > 0.0 && *spec.k_percent <= 100.0)) {
      throw ArgumentError("k_percent", "must lie in (0, 100]");
    }
  } else if (spec.k_percent) {
    throw ArgumentError("k_percent", "only applies to FJSMA");
  }
}

Distances distances(std::span<const float> original, std::span<const float> adversarial) {
  if (original.size() != adversarial.size()) {
    throw ArgumentError("adversarial", "length " + std::to_string(adversarial.size()) +
                                           " differs from original length " +
                                           std::to_string(original.size()));
  }
  Distances d;
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (original[i] != adversarial[i]) ++d.l0;
    const double diff = std::abs(static_cast<double>(adversarial[i]) - original[i]);
    sum_sq += diff * diff;
    d.linf = std::max(d.linf, diff);
  }
  d.l2 = std::sqrt(sum_sq);
  return d;
}

std::size_t feature_budget(std::size_t features, double upsilon_percent) {
  return static_cast<std::size_t>(
      std::floor(static_cast<double>(features) * upsilon_percent / 100.0 + 1e-9));
}

std::size_t apriori_k(std::size_t features, double k_percent) {
  const auto k = static_cast<std::size_t>(
      std::ceil(static_cast<double>(features) * k_percent / 100.0 - 1e-9));
  return std::max<std::size_t>(k, 1);
}

AttackOutcome fgsm(const nn::Network& model, std::span<const float> x, const AttackSpec& spec) {
  const auto start = Clock::now();
  validate(spec, model.num_classes());
  AttackOutcome out;
  out.original_probs = model.forward(x);
  out.original_class = nn::argmax(out.original_probs);

  const std::size_t label = spec.target.value_or(out.original_class);
  const std::vector<float> grad = model.input_gradient(x, label);
  // Untargeted: climb the loss of the current class. Targeted: descend toward the target.
  const float step = static_cast<float>(spec.target ? -spec.strength : spec.strength);
  out.adversarial.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float sign = grad[i] > 0.0f ? 1.0f : (grad[i] < 0.0f ? -1.0f : 0.0f);
    out.adversarial[i] = std::clamp(x[i] + step * sign, 0.0f, 1.0f);
  }
  out.iterations = 1;
  out.adversarial_probs = model.forward(out.adversarial);
  out.predicted = nn::argmax(out.adversarial_probs);
  out.success = spec.target ? out.predicted == *spec.target : out.predicted != out.original_class;
  finish(out, x, start);
  return out;
}

AttackOutcome jsma(const nn::Network& model, std::span<const float> x, const AttackSpec& spec) {
  if (spec.algorithm != Algorithm::jsma) throw ArgumentError("attack", "spec is not JSMA");
  return saliency_attack(model, x, spec, false);
}

AttackOutcome fjsma(const nn::Network& model, std::span<const float> x, const AttackSpec& spec) {
  if (spec.algorithm != Algorithm::fjsma) throw ArgumentError("attack", "spec is not FJSMA");
  return saliency_attack(model, x, spec, true);
}

AttackOutcome run_attack(const nn::Network& model, std::span<const float> x, const AttackSpec& spec) {
  switch (spec.algorithm) {
    case Algorithm::fgsm: return fgsm(model, x, spec);
    case Algorithm::jsma: return jsma(model, x, spec);
    case Algorithm::fjsma: return fjsma(model, x, spec);
  }
  throw ArgumentError("attack", "unknown algorithm");
}

}  // namespace apg::attacks
