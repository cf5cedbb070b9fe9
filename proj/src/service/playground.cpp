#include "apg/service/playground.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>

#include "apg/error.hpp"

namespace apg::service {
namespace {

constexpr double kDefaultKPercent = 15.0;

json numeric_array(std::span<const float> values) {
  json arr = json::array();
  for (float v : values) arr.push_back(round_significant(v));
  return arr;
}

Reply bad_request(const ArgumentError& e) {
  return {400, {{"error", e.what()}, {"field", e.field()}}};
}

std::string new_error_id() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

std::size_t integer_field(const json& body, const char* field) {
  const auto& v = body.at(field);
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer()) {
    if (v.get<long long>() < 0) throw ArgumentError(field, "must not be negative");
    return static_cast<std::size_t>(v.get<long long>());
  }
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0.0 && std::floor(d) == d && d < 1e15) return static_cast<std::size_t>(d);
  }
  throw ArgumentError(field, "must be a non-negative integer");
}

}  // namespace

double round_significant(double value, int digits) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, value);
  return std::strtod(buf, nullptr);
}

json outcome_to_wire(std::span<const float> original, const attacks::AttackOutcome& outcome) {
  return {
      {"original_pixels", numeric_array(original)},
      {"adversarial_pixels", numeric_array(outcome.adversarial)},
      {"original_probs", numeric_array(outcome.original_probs)},
      {"adversarial_probs", numeric_array(outcome.adversarial_probs)},
      {"predicted_class", outcome.predicted},
      {"success", outcome.success},
      {"l0", outcome.l0},
      {"l2", round_significant(outcome.l2)},
      {"linf", round_significant(outcome.linf)},
      {"iterations", outcome.iterations},
      {"elapsed_ms", round_significant(outcome.elapsed_seconds * 1000.0)},
  };
}

Playground::Playground(std::shared_ptr<const nn::Network> model, mnist::SeedSet seeds,
                       std::optional<double> model_accuracy)
    : model_(std::move(model)), seeds_(std::move(seeds)), accuracy_(model_accuracy) {
  if (model_) {
    seed_probs_.reserve(seeds_.size());
    for (const auto& s : seeds_) seed_probs_.push_back(model_->forward(s.image));
  }
}

Reply Playground::unavailable() const { return {503, {{"error", "model not loaded"}}}; }

const mnist::Seed* Playground::find_seed(std::size_t seed_id) const {
  for (const auto& s : seeds_) {
    if (s.seed_id == seed_id) return &s;
  }
  return nullptr;
}

Reply Playground::config() const {
  if (!model_) return unavailable();
  json attacks = json::array();
  attacks.push_back({{"name", "fgsm"},
                     {"label", "FGSM"},
                     {"target", "optional"},
                     {"strength", {{"name", "epsilon"}, {"min", 0.0}, {"max", 1.0},
                                   {"min_exclusive", false}, {"step", 0.01}, {"default", 0.1}}}});
  for (const char* name : {"jsma", "fjsma"}) {
    json a = {{"name", name},
              {"label", std::string(name) == "jsma" ? "JSMA" : "FJSMA"},
              {"target", "required"},
              {"strength", {{"name", "upsilon"}, {"min", 0.0}, {"max", 100.0},
                            {"min_exclusive", true}, {"step", 1.0}, {"default", 20.0},
                            {"unit", "percent"}}}};
    if (std::string(name) == "fjsma") {
      a["k_percent"] = {{"min", 1.0}, {"max", 100.0}, {"step", 1.0},
                        {"default", kDefaultKPercent}, {"unit", "percent"}};
    }
    attacks.push_back(std::move(a));
  }
  return {200,
          {{"attacks", std::move(attacks)},
           {"model_accuracy", accuracy_ ? json(*accuracy_) : json(nullptr)},
           {"M", model_->input_size()},
           {"C", model_->num_classes()},
           {"image_side", nn::kImageSide}}};
}

Reply Playground::seeds() const {
  if (!model_) return unavailable();
  json out = json::array();
  for (std::size_t i = 0; i < seeds_.size(); ++i) {
    out.push_back({{"seed_id", seeds_[i].seed_id},
                   {"label", seeds_[i].label},
                   {"pixels", numeric_array(seeds_[i].image)},
                   {"probs", numeric_array(seed_probs_[i])}});
  }
  return {200, std::move(out)};
}

AttackRequest Playground::parse_request(const json& body) const {
  if (!body.is_object()) throw ArgumentError("body", "must be a JSON object");

  if (!body.contains("attack") || !body["attack"].is_string()) {
    throw ArgumentError("attack", "must be one of \"fgsm\", \"jsma\", \"fjsma\"");
  }
  const std::string name = body["attack"].get<std::string>();
  AttackRequest req;
  if (name == "fgsm") req.spec.algorithm = attacks::Algorithm::fgsm;
  else if (name == "jsma") req.spec.algorithm = attacks::Algorithm::jsma;
  else if (name == "fjsma") req.spec.algorithm = attacks::Algorithm::fjsma;
  else throw ArgumentError("attack", "unknown attack \"" + name + "\"");

  if (!body.contains("seed_id")) throw ArgumentError("seed_id", "is required");
  req.seed_id = integer_field(body, "seed_id");
  if (find_seed(req.seed_id) == nullptr) {
    throw ArgumentError("seed_id", "unknown seed " + std::to_string(req.seed_id));
  }

  if (body.contains("target") && !body["target"].is_null()) {
    const std::size_t t = integer_field(body, "target");
    if (t >= model_->num_classes()) throw ArgumentError("target", "must lie in 0..9");
    req.spec.target = t;
  } else if (req.spec.algorithm != attacks::Algorithm::fgsm) {
    throw ArgumentError("target", "is required for " + name);
  }

  if (!body.contains("strength") || !body["strength"].is_number()) {
    throw ArgumentError("strength", "must be a number");
  }
  req.spec.strength = body["strength"].get<double>();

  if (req.spec.algorithm == attacks::Algorithm::fjsma) {
    if (body.contains("k_percent") && !body["k_percent"].is_null()) {
      if (!body["k_percent"].is_number()) throw ArgumentError("k_percent", "must be a number");
      req.spec.k_percent = body["k_percent"].get<double>();
    } else {
      req.spec.k_percent = kDefaultKPercent;
    }
  }

  if (body.contains("direction") && !body["direction"].is_null()) {
    const auto dir = body["direction"].is_string()
                         ? attacks::parse_direction(body["direction"].get<std::string>())
                         : std::nullopt;
    if (!dir) throw ArgumentError("direction", "must be \"decrease\" or \"increase\"");
    req.spec.direction = *dir;
  }

  attacks::validate(req.spec, model_->num_classes());
  return req;
}

Reply Playground::attack(std::string_view body) const {
  if (!model_) return unavailable();
  json parsed;
  try {
    parsed = json::parse(body);
  } catch (const json::parse_error&) {
    return {400, {{"error", "body is not valid JSON"}, {"field", "body"}}};
  }
  try {
    const AttackRequest req = parse_request(parsed);
    const mnist::Seed& seed = *find_seed(req.seed_id);
    const auto outcome = attacks::run_attack(*model_, seed.image, req.spec);
    return {200, outcome_to_wire(seed.image, outcome)};
  } catch (const ArgumentError& e) {
    return bad_request(e);
  } catch (const std::exception& e) {
    const std::string id = new_error_id();
    std::cerr << "error " << id << ": " << e.what() << '\n';
    return {500, {{"error", "internal error"}, {"error_id", id}}};
  }
}

}  // namespace apg::service
