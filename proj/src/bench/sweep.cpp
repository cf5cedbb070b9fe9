#include "apg/bench/sweep.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "apg/error.hpp"
#include "apg/nn/train.hpp"

namespace apg::bench {
namespace {

constexpr const char* kCsvHeader = "algorithm,upsilon,k_percent,evasion_rate,mean_seconds,sample_count";

void check_percent(double v, const char* field) {
  if (!(v > 0.0 && v <= 100.0)) {
    throw ArgumentError(field, "percent values must lie in (0, 100]");
  }
}

std::string full_precision(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string percent_label(double v) {
  std::ostringstream os;
  os << v << "%";
  return os.str();
}

double parse_double(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw FormatError("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct Cell {
  CellKey key;
  attacks::AttackSpec spec;
};

std::vector<Cell> build_cells(const SweepConfig& cfg) {
  std::vector<Cell> cells;
  for (const auto algorithm : cfg.algorithms) {
    attacks::AttackSpec base;
    base.algorithm = algorithm;
    base.direction = cfg.direction;
    switch (algorithm) {
      case attacks::Algorithm::jsma:
        for (double u : cfg.upsilons) {
          auto s = base;
          s.strength = u;
          cells.push_back({{algorithm, u, std::nullopt}, s});
        }
        break;
      case attacks::Algorithm::fjsma:
        for (double k : cfg.k_percents) {
          for (double u : cfg.upsilons) {
            auto s = base;
            s.strength = u;
            s.k_percent = k;
            cells.push_back({{algorithm, u, k}, s});
          }
        }
        break;
      case attacks::Algorithm::fgsm:
        for (double eps : cfg.fgsm_epsilons) {
          auto s = base;
          s.strength = eps;
          cells.push_back({{algorithm, eps, std::nullopt}, s});
        }
        break;
    }
  }
  return cells;
}

}  // namespace

double evasion_rate(std::span<const attacks::AttackOutcome> outcomes) {
  if (outcomes.empty()) throw ArgumentError("outcomes", "cannot rate an empty outcome list");
  const auto hits = std::count_if(outcomes.begin(), outcomes.end(),
                                  [](const auto& o) { return o.success; });
  return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

std::vector<std::size_t> select_samples(const nn::Network& model, const nn::Dataset& test,
                                        std::size_t count, std::uint64_t rng_seed) {
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(rng_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto predicted = nn::predict_all(model, test);
  std::vector<std::size_t> picked;
  for (std::size_t idx : order) {
    if (picked.size() == count) break;
    if (predicted[idx] == test.labels[idx]) picked.push_back(idx);
  }
  if (picked.size() < count) {
    throw DataError("only " + std::to_string(picked.size()) +
                    " correctly classified samples available, " + std::to_string(count) +
                    " requested");
  }
  return picked;
}

BenchReport run_sweep(const nn::Network& model, const nn::Dataset& test, const SweepConfig& cfg,
                      const OutcomeObserver& observer) {
  if (cfg.sample_count < 1) throw ArgumentError("sample_count", "must be at least 1");
  if (test.empty()) throw ArgumentError("test", "dataset is empty");
  for (double u : cfg.upsilons) check_percent(u, "upsilons");
  for (double k : cfg.k_percents) check_percent(k, "k_percents");
  for (double e : cfg.fgsm_epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) throw ArgumentError("fgsm_epsilons", "must lie in [0, 1]");
  }

  const auto samples = select_samples(model, test, cfg.sample_count, cfg.rng_seed);
  BenchReport report;
  for (const Cell& cell : build_cells(cfg)) {
    std::size_t successes = 0;
    double seconds = 0.0;
    for (std::size_t idx : samples) {
      auto spec = cell.spec;
      spec.target = (std::size_t{test.labels[idx]} + 1) % model.num_classes();
      const auto x = test.image(idx);
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto outcome = attacks::run_attack(model, x, spec);
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (outcome.success) ++successes;
        if (observer) observer(cell.key, idx, outcome);
      } catch (const std::exception& e) {
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.diagnostics.push_back(std::string(attacks::to_string(cell.key.algorithm)) +
                                     " sample " + std::to_string(idx) + ": " + e.what());
      }
    }
    const auto n = static_cast<double>(samples.size());
    report.rows.push_back({cell.key.algorithm, cell.key.upsilon, cell.key.k_percent,
                           static_cast<double>(successes) / n,
                           std::max(seconds / n, std::numeric_limits<double>::min()),
                           samples.size()});
  }
  return report;
}

std::string format_table(const BenchReport& report) {
  std::vector<double> columns;
  for (const auto& row : report.rows) {
    if (std::find(columns.begin(), columns.end(), row.upsilon) == columns.end()) {
      columns.push_back(row.upsilon);
    }
  }
  struct Group {
    attacks::Algorithm algorithm;
    std::optional<double> k;
  };
  std::vector<Group> groups;
  for (const auto& row : report.rows) {
    const bool seen = std::any_of(groups.begin(), groups.end(), [&](const Group& g) {
      return g.algorithm == row.algorithm && g.k == row.k_percent;
    });
    if (!seen) groups.push_back({row.algorithm, row.k_percent});
  }
  const auto find = [&](const Group& g, double u) -> const BenchRow* {
    for (const auto& row : report.rows) {
      if (row.algorithm == g.algorithm && row.k_percent == g.k && row.upsilon == u) return &row;
    }
    return nullptr;
  };
  const auto name = [](const Group& g) {
    std::string n(attacks::to_string(g.algorithm));
    std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::toupper(c); });
    return n;
  };
  const auto k_tag = [](const Group& g) {
    return g.k ? " [k = " + percent_label(*g.k) + "]" : std::string();
  };

  std::vector<std::pair<std::string, std::vector<std::string>>> lines;
  std::vector<std::string> header_cells;
  for (double u : columns) header_cells.push_back(percent_label(u));
  lines.emplace_back("Upsilon", header_cells);
  const auto fmt = [](double v, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
  };
  for (const auto& g : groups) {
    std::vector<std::string> cells;
    for (double u : columns) {
      const auto* row = find(g, u);
      cells.push_back(row ? fmt(row->evasion_rate, 3) : "-");
    }
    lines.emplace_back(name(g) + " Evasion Rate" + k_tag(g), cells);
  }
  for (const auto& g : groups) {
    std::vector<std::string> cells;
    for (double u : columns) {
      const auto* row = find(g, u);
      cells.push_back(row ? fmt(row->mean_seconds, 4) : "-");
    }
    lines.emplace_back(name(g) + " Time" + k_tag(g) + " (s)", cells);
  }

  std::size_t label_width = 0;
  std::size_t cell_width = 6;
  for (const auto& [label, cells] : lines) {
    label_width = std::max(label_width, label.size());
    for (const auto& c : cells) cell_width = std::max(cell_width, c.size());
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    os << std::left << std::setw(static_cast<int>(label_width)) << lines[i].first;
    for (const auto& c : lines[i].second) {
      os << " | " << std::right << std::setw(static_cast<int>(cell_width)) << c;
    }
    os << '\n';
    if (i == 0) {
      os << std::string(label_width + lines[i].second.size() * (cell_width + 3), '-') << '\n';
    }
  }
  return os.str();
}

std::string to_csv(const BenchReport& report) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& row : report.rows) {
    out += std::string(attacks::to_string(row.algorithm)) + "," + full_precision(row.upsilon) + "," +
           (row.k_percent ? full_precision(*row.k_percent) : std::string()) + "," +
           full_precision(row.evasion_rate) + "," + full_precision(row.mean_seconds) + "," +
           std::to_string(row.sample_count) + "\n";
  }
  return out;
}

BenchReport parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) {
    throw FormatError("csv line 1: expected header '" + std::string(kCsvHeader) + "'");
  }
  BenchReport report;
  std::size_t number = 1;
  while (std::getline(is, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 6) {
      throw FormatError("csv line " + std::to_string(number) + ": expected 6 fields");
    }
    BenchRow row;
    const auto algorithm = attacks::parse_algorithm(f[0]);
    if (!algorithm) throw FormatError("csv line " + std::to_string(number) + ": unknown algorithm");
    row.algorithm = *algorithm;
    row.upsilon = parse_double(f[1], number);
    if (!f[2].empty()) row.k_percent = parse_double(f[2], number);
    row.evasion_rate = parse_double(f[3], number);
    row.mean_seconds = parse_double(f[4], number);
    std::size_t count = 0;
    const auto [ptr, ec] = std::from_chars(f[5].data(), f[5].data() + f[5].size(), count);
    if (ec != std::errc{} || ptr != f[5].data() + f[5].size()) {
      throw FormatError("csv line " + std::to_string(number) + ": bad sample_count");
    }
    row.sample_count = count;
    report.rows.push_back(row);
  }
  return report;
}

void write_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_csv(report);
  if (!out) throw IoError("failed writing " + path.string());
}

BenchReport read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_csv({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
}

}  // namespace apg::bench
