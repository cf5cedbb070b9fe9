#include "apg/cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "apg/attacks/attack.hpp"
#include "apg/bench/sweep.hpp"
#include "apg/error.hpp"
#include "apg/mnist/dataset.hpp"
#include "apg/mnist/fetch.hpp"
#include "apg/nn/model_io.hpp"
#include "apg/nn/train.hpp"
#include "apg/service/server.hpp"

namespace apg::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string default_data_dir() {
  if (const char* env = std::getenv("APG_MNIST_DIR"); env != nullptr && *env != '\0') return env;
  return "data/mnist";
}

int default_port() {
  if (const char* env = std::getenv("APG_PORT"); env != nullptr && *env != '\0') {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
    }
  }
  return service::kDefaultPort;
}

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ArgumentError(flag, "bad number '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ArgumentError(flag, "list is empty");
  return values;
}

json outcome_json(const attacks::AttackOutcome& o, std::size_t seed_index, std::size_t label) {
  return {{"seed_index", seed_index},
          {"label", label},
          {"original_class", o.original_class},
          {"predicted_class", o.predicted},
          {"success", o.success},
          {"l0", o.l0},
          {"l2", o.l2},
          {"linf", o.linf},
          {"iterations", o.iterations},
          {"elapsed_seconds", o.elapsed_seconds},
          {"original_probs", o.original_probs},
          {"adversarial_probs", o.adversarial_probs},
          {"adversarial", o.adversarial}};
}

// Blocks SIGINT/SIGTERM in the calling thread (inherited by threads it
// spawns) and stops the server when either arrives.
class SignalStopper {
 public:
  explicit SignalStopper(service::Server& server) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &previous_);
    waiter_ = std::thread([this, &server] {
      const timespec tick{0, 200'000'000};
      while (!done_) {
        if (sigtimedwait(&set_, nullptr, &tick) > 0) {
          server.stop();
          return;
        }
      }
    });
  }
  ~SignalStopper() {
    done_ = true;
    waiter_.join();
    pthread_sigmask(SIG_SETMASK, &previous_, nullptr);
  }

 private:
  sigset_t set_{};
  sigset_t previous_{};
  std::atomic<bool> done_{false};
  std::thread waiter_;
};

struct TrainArgs {
  std::string data = default_data_dir();
  std::string out;
  std::size_t epochs = 3;
  std::uint64_t seed = 1;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::size_t limit = 0;
  bool mlp = false;
  bool json_output = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::is_directory(a.data) || !mnist::has_mnist(a.data)) {
    err << "error: MNIST files not found in " << a.data << '\n';
    return kUsage;
  }
  nn::Dataset train = mnist::load_split(a.data, nn::Split::train);
  const nn::Dataset test = mnist::load_split(a.data, nn::Split::test);
  if (a.limit != 0) train = train.slice(0, a.limit);

  nn::TrainConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.learning_rate = a.learning_rate;
  cfg.rng_seed = a.seed;
  cfg.architecture = a.mlp ? nn::Architecture::mlp : nn::Architecture::cnn;

  json epochs = json::array();
  nn::Network net;
  try {
    net = nn::train(train, cfg, [&](const nn::EpochReport& r) {
      err << "epoch " << r.epoch << ": loss " << r.mean_loss << ", train accuracy "
          << r.train_accuracy << '\n';
      epochs.push_back({{"epoch", r.epoch}, {"loss", r.mean_loss}, {"train_accuracy", r.train_accuracy}});
    });
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kDiverged;
  }
  nn::save_model(net, a.out);
  const double accuracy = nn::evaluate(net, test);
  if (a.json_output) {
    out << json{{"model", a.out},
                {"architecture", a.mlp ? "mlp" : "cnn"},
                {"test_accuracy", accuracy},
                {"epochs", epochs}}
               .dump()
        << '\n';
  } else {
    out << "test accuracy: " << std::fixed << std::setprecision(4) << accuracy << '\n'
        << "model written to " << a.out << '\n';
  }
  return kOk;
}

struct AttackArgs {
  std::string model;
  std::string data = default_data_dir();
  std::string algorithm = "fjsma";
  std::size_t seed_index = 0;
  std::optional<std::size_t> target;
  double strength = 20.0;
  std::optional<double> k;
  std::string direction = "decrease";
  bool json_output = false;
};

int cmd_attack(const AttackArgs& a, std::ostream& out, std::ostream& err) {
  attacks::AttackSpec spec;
  const auto algorithm = attacks::parse_algorithm(a.algorithm);
  const auto direction = attacks::parse_direction(a.direction);
  if (!algorithm) {
    err << "error: --algorithm must be fgsm, jsma or fjsma\n";
    return kUsage;
  }
  if (!direction) {
    err << "error: --direction must be decrease or increase\n";
    return kUsage;
  }
  spec.algorithm = *algorithm;
  spec.direction = *direction;
  spec.target = a.target;
  spec.strength = a.strength;
  spec.k_percent = a.k;
  if (spec.algorithm == attacks::Algorithm::fjsma && !spec.k_percent) spec.k_percent = 15.0;
  try {
    attacks::validate(spec, nn::kClasses);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  const nn::Network model = nn::load_model(a.model);
  if (!mnist::has_mnist(a.data)) {
    err << "error: MNIST files not found in " << a.data << '\n';
    return kUsage;
  }
  const nn::Dataset test = mnist::load_split(a.data, nn::Split::test);
  if (a.seed_index >= test.size()) {
    err << "error: --seed-index must be below " << test.size() << '\n';
    return kUsage;
  }
  const auto x = test.image(a.seed_index);
  const auto outcome = attacks::run_attack(model, x, spec);

  if (a.json_output) {
    out << outcome_json(outcome, a.seed_index, test.labels[a.seed_index]).dump() << '\n';
  } else {
    out << "algorithm      " << attacks::to_string(spec.algorithm) << '\n'
        << "seed index     " << a.seed_index << " (label " << int{test.labels[a.seed_index]} << ")\n"
        << "original class " << outcome.original_class << '\n'
        << "predicted      " << outcome.predicted << '\n'
        << "success        " << (outcome.success ? "yes" : "no") << '\n'
        << "l0 / l2 / linf " << outcome.l0 << " / " << outcome.l2 << " / " << outcome.linf << '\n'
        << "iterations     " << outcome.iterations << '\n'
        << "elapsed        " << outcome.elapsed_seconds << " s\n\n"
        << "original\n" << ascii_image({x.begin(), x.end()}) << '\n'
        << "adversarial\n" << ascii_image(outcome.adversarial);
  }
  return outcome.success ? kOk : kAttackFailed;
}

struct BenchArgs {
  std::string model;
  std::string data = default_data_dir();
  std::size_t samples = 200;
  std::string upsilons = "10,15,20,25";
  std::string ks = "10,15,20,30";
  std::string algorithms = "jsma,fjsma";
  std::string direction = "increase";
  std::uint64_t seed = 1;
  std::string csv;
  bool json_output = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  bench::SweepConfig cfg;
  try {
    cfg.upsilons = parse_list(a.upsilons, "--upsilons");
    cfg.k_percents = parse_list(a.ks, "--ks");
    for (double v : cfg.upsilons) {
      if (!(v > 0 && v <= 100)) throw ArgumentError("--upsilons", "values must lie in (0, 100]");
    }
    for (double v : cfg.k_percents) {
      if (!(v > 0 && v <= 100)) throw ArgumentError("--ks", "values must lie in (0, 100]");
    }
    cfg.algorithms.clear();
    std::stringstream ss(a.algorithms);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto alg = attacks::parse_algorithm(item);
      if (!alg) throw ArgumentError("--algorithms", "unknown algorithm '" + item + "'");
      cfg.algorithms.push_back(*alg);
    }
    if (cfg.algorithms.empty()) throw ArgumentError("--algorithms", "list is empty");
    const auto dir = attacks::parse_direction(a.direction);
    if (!dir) throw ArgumentError("--direction", "must be decrease or increase");
    cfg.direction = *dir;
    if (a.samples == 0) throw ArgumentError("--samples", "must be at least 1");
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  cfg.sample_count = a.samples;
  cfg.rng_seed = a.seed;

  const nn::Network model = nn::load_model(a.model);
  if (!mnist::has_mnist(a.data)) {
    err << "error: MNIST files not found in " << a.data << '\n';
    return kUsage;
  }
  const nn::Dataset test = mnist::load_split(a.data, nn::Split::test);
  const auto report = bench::run_sweep(model, test, cfg);
  for (const auto& d : report.diagnostics) err << "warning: " << d << '\n';
  if (!a.csv.empty()) bench::write_csv(report, a.csv);

  if (a.json_output) {
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back({{"algorithm", attacks::to_string(r.algorithm)},
                      {"upsilon", r.upsilon},
                      {"k_percent", r.k_percent ? json(*r.k_percent) : json(nullptr)},
                      {"evasion_rate", r.evasion_rate},
                      {"mean_seconds", r.mean_seconds},
                      {"sample_count", r.sample_count}});
    }
    out << json{{"rows", rows}, {"direction", attacks::to_string(cfg.direction)}}.dump() << '\n';
  } else {
    out << bench::format_table(report);
  }
  return kOk;
}

struct ServeArgs {
  std::string model;
  std::string data = default_data_dir();
  std::string host = "localhost";
  int port = default_port();
  std::size_t seeds_per_class = 1;
  std::uint64_t seed = 1;
  std::string static_dir;
  std::size_t workers = 0;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  auto model = std::make_shared<const nn::Network>(nn::load_model(a.model));
  if (!mnist::has_mnist(a.data)) {
    err << "error: MNIST files not found in " << a.data << '\n';
    return kUsage;
  }
  const nn::Dataset test = mnist::load_split(a.data, nn::Split::test);
  const double accuracy = nn::evaluate(*model, test);
  auto seeds = mnist::select_seeds(test, a.seeds_per_class, a.seed, model.get());
  auto playground = std::make_shared<const service::Playground>(model, std::move(seeds), accuracy);

  service::ServerOptions options;
  options.host = a.host;
  options.port = a.port;
  options.workers = a.workers;
  if (!a.static_dir.empty()) options.static_dir = a.static_dir;
  service::Server server(playground, options);
  if (!server.bind()) {
    err << "error: cannot bind " << a.host << ":" << a.port << " (port busy?)\n";
    return kUsage;
  }
  err << "serving on http://" << a.host << ":" << server.port() << " (model accuracy " << accuracy
      << ")\n";
  out.flush();
  {
    SignalStopper stopper(server);
    server.listen();
  }
  err << "shut down\n";
  return kOk;
}

struct FetchArgs {
  std::string out = default_data_dir();
  std::string base_url = std::string(mnist::kDefaultMirror);
};

int cmd_fetch(const FetchArgs& a, std::ostream&, std::ostream& err) {
  try {
    mnist::fetch_mnist(a.base_url, a.out, [&](const std::string& line) { err << line << '\n'; });
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kAttackFailed;
  }
  return kOk;
}

}  // namespace

std::string ascii_image(const std::vector<float>& pixels) {
  static constexpr std::string_view ramp = " .:-=+*#%@";
  const std::size_t side = nn::kImageSide;
  std::string out;
  for (std::size_t y = 0; y < side && y * side < pixels.size(); ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const float v = std::clamp(pixels[y * side + x], 0.0f, 1.0f);
      out += ramp[static_cast<std::size_t>(v * static_cast<float>(ramp.size() - 1) + 0.5f)];
    }
    out += '\n';
  }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial example workbench for MNIST classifiers", "apg"};
  app.require_subcommand(1, 1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a classifier and write a model file");
  t->add_option("--data", train.data, "Directory with the MNIST IDX files");
  t->add_option("--out", train.out, "Output model path")->required();
  t->add_option("--epochs", train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  t->add_option("--seed", train.seed, "RNG seed");
  t->add_option("--batch-size", train.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  t->add_option("--lr", train.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber);
  t->add_option("--limit", train.limit, "Train on the first N samples only (0 = all)");
  t->add_flag("--mlp", train.mlp, "Use the small fully-connected architecture");
  t->add_flag("--json", train.json_output, "Emit a JSON summary");

  AttackArgs attack;
  auto* a = app.add_subcommand("attack", "Run one attack on a test image");
  a->add_option("--model", attack.model, "Model file")->required()->check(CLI::ExistingFile);
  a->add_option("--data", attack.data, "Directory with the MNIST IDX files");
  a->add_option("--algorithm", attack.algorithm, "fgsm | jsma | fjsma");
  a->add_option("--seed-index", attack.seed_index, "Test-set index of the seed image");
  a->add_option("--target", attack.target, "Target class (required for jsma/fjsma)");
  a->add_option("--strength", attack.strength, "FGSM epsilon, or upsilon percent for jsma/fjsma");
  a->add_option("--k", attack.k, "FJSMA k as a percent of the feature count (default 15)");
  a->add_option("--direction", attack.direction, "decrease | increase");
  a->add_flag("--json", attack.json_output, "Emit the outcome as JSON");

  BenchArgs bench_args;
  auto* b = app.add_subcommand("bench", "JSMA vs FJSMA evasion-rate and timing sweep");
  b->add_option("--model", bench_args.model, "Model file")->required()->check(CLI::ExistingFile);
  b->add_option("--data", bench_args.data, "Directory with the MNIST IDX files");
  b->add_option("--samples", bench_args.samples, "Correctly classified seeds per cell");
  b->add_option("--upsilons", bench_args.upsilons, "Comma-separated upsilon percents");
  b->add_option("--ks", bench_args.ks, "Comma-separated FJSMA k percents");
  b->add_option("--algorithms", bench_args.algorithms, "Comma-separated subset of jsma,fjsma,fgsm");
  b->add_option("--direction", bench_args.direction, "decrease | increase");
  b->add_option("--seed", bench_args.seed, "Sample-selection seed");
  b->add_option("--csv", bench_args.csv, "Also write the report as CSV");
  b->add_flag("--json", bench_args.json_output, "Emit the report as JSON");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Serve the playground API and static UI");
  s->add_option("--model", serve.model, "Model file")->required()->check(CLI::ExistingFile);
  s->add_option("--data", serve.data, "Directory with the MNIST IDX files");
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (env APG_PORT, default 9000)");
  s->add_option("--seeds-per-class", serve.seeds_per_class, "Seed images per class")
      ->check(CLI::PositiveNumber);
  s->add_option("--seed", serve.seed, "Seed-selection RNG seed");
  s->add_option("--static", serve.static_dir, "Directory with the built UI bundle");
  s->add_option("--workers", serve.workers, "Worker threads (0 = hardware threads)");

  FetchArgs fetch;
  auto* f = app.add_subcommand("fetch-data", "Download and verify the MNIST files");
  f->add_option("--out", fetch.out, "Destination directory");
  f->add_option("--base-url", fetch.base_url, "Mirror URL prefix (file:// allowed)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (t->parsed()) return cmd_train(train, out, err);
    if (a->parsed()) return cmd_attack(attack, out, err);
    if (b->parsed()) return cmd_bench(bench_args, out, err);
    if (s->parsed()) return cmd_serve(serve, out, err);
    if (f->parsed()) return cmd_fetch(fetch, out, err);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace apg::cli
