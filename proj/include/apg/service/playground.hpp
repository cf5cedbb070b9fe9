#pragma once

#include <json.hpp>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "apg/attacks/attack.hpp"
#include "apg/mnist/dataset.hpp"
#include "apg/nn/network.hpp"

namespace apg::service {

using json = nlohmann::json;

/// Status code plus JSON body, independent of the HTTP library.
struct Reply {
  int status = 200;
  json body;
};

/// Rounds to 6 significant decimal digits (the wire precision for pixels and
/// probabilities).
double round_significant(double value, int digits = 6);

/// Numeric-array view of an outcome; array lengths follow the model.
json outcome_to_wire(std::span<const float> original, const attacks::AttackOutcome& outcome);

/// Request fields after validation.
struct AttackRequest {
  attacks::AttackSpec spec;
  std::size_t seed_id = 0;
};

/// Request handlers for the playground API. Holds the model and seed set
/// read-only after construction; all methods are const and thread-safe.
class Playground {
 public:
  /// A null model makes every API call answer 503.
  Playground(std::shared_ptr<const nn::Network> model, mnist::SeedSet seeds,
             std::optional<double> model_accuracy);

  Reply config() const;
  Reply seeds() const;
  /// Parses, validates and runs one attack synchronously.
  Reply attack(std::string_view body) const;

  /// Throws ArgumentError naming the field on any schema violation.
  AttackRequest parse_request(const json& body) const;

  const mnist::Seed* find_seed(std::size_t seed_id) const;

 private:
  Reply unavailable() const;

  std::shared_ptr<const nn::Network> model_;
  mnist::SeedSet seeds_;
  std::vector<nn::ClassProbs> seed_probs_;
  std::optional<double> accuracy_;
};

}  // namespace apg::service
