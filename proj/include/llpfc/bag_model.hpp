#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llpfc/common.hpp"
#include "llpfc/simplex.hpp"

namespace llpfc {

// ---------------------------------------------------------------------------
// Data containers
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<double> features;  // n x d, row-major
  std::vector<int> labels;       // values in {0..C-1}
  int n = 0;
  int d = 0;
  int C = 0;

  std::span<const double> row(int i) const {
    return {features.data() + static_cast<std::size_t>(i) * d,
            static_cast<std::size_t>(d)};
  }

  void validate() const {
    if (n < 1) throw DataError("Dataset: needs at least one point");
    if (d < 1 || C < 1) throw DataError("Dataset: bad dimensions");
    if (static_cast<int>(labels.size()) != n ||
        features.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(d))
      throw DataError("Dataset: inconsistent sizes");
    for (int y : labels)
      if (y < 0 || y >= C) throw DataError("Dataset: label out of range");
  }
};

/// A bag of instances annotated with its observed label proportion.
/// gamma_true is the governing proportion, retained on synthetic data for
/// the ideal reduction and diagnostics only.
struct Bag {
  std::vector<int> indices;
  ProbVector gamma_hat;
  std::optional<ProbVector> gamma_true;

  int size() const { return static_cast<int>(indices.size()); }
};

struct LLPInstance {
  Dataset dataset;
  std::vector<Bag> bags;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// CSV ingestion: numeric feature columns followed by an integer label
// column, optional header row.
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_double(const std::string& cell, double* out) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end != nullptr && (*end == ' ' || *end == '\t' || *end == '\r')) ++end;
  if (end == begin || end == nullptr || *end != '\0') return false;
  if (!std::isfinite(v)) return false;
  *out = v;
  return true;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  for (std::string& c : cells) {
    const std::size_t a = c.find_first_not_of(" \t");
    const std::size_t b = c.find_last_not_of(" \t");
    c = (a == std::string::npos) ? std::string() : c.substr(a, b - a + 1);
  }
  return cells;
}

}  // namespace detail

inline Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);

  Dataset ds;
  std::string line;
  int row_number = 0;
  int data_rows = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++row_number;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (!header_checked) {
      header_checked = true;
      double probe;
      if (!detail::parse_double(cells[0], &probe)) continue;  // header row
    }
    if (ds.d == 0) {
      if (cells.size() < 2)
        throw DataError(path + ": row " + std::to_string(row_number) +
                        ": need at least one feature column and a label column");
      ds.d = static_cast<int>(cells.size()) - 1;
    } else if (static_cast<int>(cells.size()) != ds.d + 1) {
      throw DataError(path + ": row " + std::to_string(row_number) +
                      ": expected " + std::to_string(ds.d + 1) + " columns, got " +
                      std::to_string(cells.size()));
    }
    for (int j = 0; j < ds.d; ++j) {
      double v;
      if (!detail::parse_double(cells[static_cast<std::size_t>(j)], &v))
        throw DataError(path + ": row " + std::to_string(row_number) + ", column " +
                        std::to_string(j + 1) + ": non-numeric cell '" +
                        cells[static_cast<std::size_t>(j)] + "'");
      ds.features.push_back(v);
    }
    const std::string& label_cell = cells[static_cast<std::size_t>(ds.d)];
    double label_value;
    if (!detail::parse_double(label_cell, &label_value) ||
        label_value != std::floor(label_value) || label_value < 0.0)
      throw DataError(path + ": row " + std::to_string(row_number) + ", column " +
                      std::to_string(ds.d + 1) + ": label must be a nonnegative integer, got '" +
                      label_cell + "'");
    ds.labels.push_back(static_cast<int>(label_value));
    ++data_rows;
  }
  if (data_rows == 0) throw DataError(path + ": no data rows");
  ds.n = data_rows;
  ds.C = 0;
  for (int y : ds.labels) ds.C = std::max(ds.C, y + 1);
  ds.validate();
  return ds;
}

inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  out.precision(17);
  for (int i = 0; i < ds.n; ++i) {
    for (int j = 0; j < ds.d; ++j)
      out << ds.features[static_cast<std::size_t>(i) * ds.d + j] << ',';
    out << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Bag generation: gamma ~ uniform on the simplex, then a multinomial draw
// without replacement from the labeled pool.
// ---------------------------------------------------------------------------

/// Uniform sample on the C-simplex by exponential spacings, i.e.
/// Dirichlet(1, ..., 1).
inline ProbVector sample_gamma_uniform(int c, Rng& rng) {
  if (c < 2) throw ConfigError("sample_gamma_uniform: C must be >= 2");
  return dirichlet_uniform(c, rng);
}

/// Multinomial(bag_size, gamma) truncated to per-class availability.
/// Overflow beyond a class's remaining pool is redistributed in proportion
/// to the gamma mass on classes that still have capacity; when that mass is
/// zero the remaining capacity itself is used as the weight.
inline std::vector<int> sample_truncated_multinomial(const ProbVector& gamma, int bag_size,
                                                     std::span<const int> available,
                                                     Rng& rng) {
  const int c = gamma.size();
  if (static_cast<int>(available.size()) != c)
    throw ConfigError("sample_truncated_multinomial: size mismatch");
  std::vector<int> counts(static_cast<std::size_t>(c), 0);
  for (int draw = 0; draw < bag_size; ++draw)
    ++counts[static_cast<std::size_t>(rng.categorical(gamma.span()))];

  int overflow = 0;
  int first_truncated = -1;
  for (int k = 0; k < c; ++k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    if (counts[ks] > available[ks]) {
      overflow += counts[ks] - available[ks];
      counts[ks] = available[ks];
      if (first_truncated < 0) first_truncated = k;
    }
  }
  while (overflow > 0) {
    std::vector<double> weights(static_cast<std::size_t>(c), 0.0);
    double mass = 0.0;
    int spare_total = 0;
    for (int k = 0; k < c; ++k) {
      const std::size_t ks = static_cast<std::size_t>(k);
      const int spare = available[ks] - counts[ks];
      if (spare > 0) {
        weights[ks] = gamma[k];
        mass += gamma[k];
        spare_total += spare;
      }
    }
    if (spare_total == 0)
      throw DataError("bag generation: class " + std::to_string(first_truncated) +
                      " exhausted with unredistributable overflow");
    if (mass <= 0.0)
      for (int k = 0; k < c; ++k) {
        const std::size_t ks = static_cast<std::size_t>(k);
        weights[ks] = static_cast<double>(std::max(available[ks] - counts[ks], 0));
      }
    const int k = rng.categorical(weights);
    ++counts[static_cast<std::size_t>(k)];
    if (counts[static_cast<std::size_t>(k)] > available[static_cast<std::size_t>(k)])
      throw DataError("bag generation: internal overflow bookkeeping error");
    --overflow;
  }
  return counts;
}

inline LLPInstance generate_bags(Dataset ds, int bag_size, int n_bags, std::uint64_t seed) {
  ds.validate();
  if (bag_size < 1) throw ConfigError("generate_bags: bag_size must be >= 1");
  if (n_bags < 1) throw ConfigError("generate_bags: n_bags must be >= 1");
  if (ds.C < 2) throw DataError("generate_bags: dataset must have at least two classes");
  if (static_cast<long long>(bag_size) * n_bags > ds.n)
    throw DataError("generate_bags: insufficient data (" + std::to_string(ds.n) +
                    " points for " + std::to_string(n_bags) + " bags of " +
                    std::to_string(bag_size) + ")");

  Rng rng(mix_seed(seed, 0xba65ULL));

  // per-class pools of unused indices; points are never reused across bags
  std::vector<std::vector<int>> pools(static_cast<std::size_t>(ds.C));
  for (int i = 0; i < ds.n; ++i)
    pools[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

  LLPInstance inst;
  inst.seed = seed;
  inst.bags.reserve(static_cast<std::size_t>(n_bags));

  std::vector<int> available(static_cast<std::size_t>(ds.C));
  for (int b = 0; b < n_bags; ++b) {
    for (int k = 0; k < ds.C; ++k)
      available[static_cast<std::size_t>(k)] =
          static_cast<int>(pools[static_cast<std::size_t>(k)].size());
    const ProbVector gamma = sample_gamma_uniform(ds.C, rng);
    const std::vector<int> counts =
        sample_truncated_multinomial(gamma, bag_size, available, rng);

    Bag bag{std::vector<int>{}, ProbVector::uniform(ds.C), gamma};
    bag.indices.reserve(static_cast<std::size_t>(bag_size));
    std::vector<double> hist(static_cast<std::size_t>(ds.C), 0.0);
    for (int k = 0; k < ds.C; ++k) {
      std::vector<int>& pool = pools[static_cast<std::size_t>(k)];
      for (int taken = 0; taken < counts[static_cast<std::size_t>(k)]; ++taken) {
        const int pos = rng.uniform_int(static_cast<int>(pool.size()));
        bag.indices.push_back(pool[static_cast<std::size_t>(pos)]);
        pool[static_cast<std::size_t>(pos)] = pool.back();
        pool.pop_back();
      }
      hist[static_cast<std::size_t>(k)] =
          static_cast<double>(counts[static_cast<std::size_t>(k)]) / bag_size;
    }
    std::sort(bag.indices.begin(), bag.indices.end());
    bag.gamma_hat = ProbVector(hist);
    inst.bags.push_back(std::move(bag));
  }
  inst.dataset = std::move(ds);
  return inst;
}

/// Size-weighted average of the observed proportions: the pooled estimate
/// of the clean prior.
inline ProbVector pooled_prior(std::span<const Bag> bags) {
  if (bags.empty()) throw DataError("pooled_prior: needs at least one bag");
  const int c = bags[0].gamma_hat.size();
  std::vector<double> acc(static_cast<std::size_t>(c), 0.0);
  double total = 0.0;
  for (const Bag& b : bags) {
    if (b.gamma_hat.size() != c) throw DataError("pooled_prior: inconsistent C across bags");
    for (int k = 0; k < c; ++k) acc[static_cast<std::size_t>(k)] += b.size() * b.gamma_hat[k];
    total += b.size();
  }
  for (double& v : acc) v /= total;
  return ProbVector(acc);
}

inline ProbVector pooled_prior(const LLPInstance& inst) { return pooled_prior(inst.bags); }

// ---------------------------------------------------------------------------
// Bags file: JSON lines with a leading metadata record.
// ---------------------------------------------------------------------------

inline void write_bags_jsonl(const std::string& path, const LLPInstance& inst,
                             const std::string& config_hash = "") {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write bags file: " + path);
  const int c = inst.bags.empty() ? inst.dataset.C : inst.bags[0].gamma_hat.size();
  nlohmann::json meta{{"n_bags", inst.bags.size()}, {"C", c}, {"seed", inst.seed}};
  if (!config_hash.empty()) meta["config_hash"] = config_hash;
  out << meta.dump() << '\n';
  for (std::size_t i = 0; i < inst.bags.size(); ++i) {
    const Bag& b = inst.bags[i];
    nlohmann::json rec{{"bag_id", i},
                       {"indices", b.indices},
                       {"gamma_hat", b.gamma_hat.values()}};
    if (b.gamma_true.has_value())
      rec["gamma_true"] = b.gamma_true->values();
    else
      rec["gamma_true"] = nullptr;
    out << rec.dump() << '\n';
  }
}

struct BagsFile {
  int n_bags = 0;
  int C = 0;
  std::uint64_t seed = 0;
  std::vector<Bag> bags;
};

inline BagsFile read_bags_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open bags file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing metadata line");
  BagsFile file;
  try {
    const nlohmann::json meta = nlohmann::json::parse(line);
    file.n_bags = meta.at("n_bags").get<int>();
    file.C = meta.at("C").get<int>();
    file.seed = meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad metadata line: " + e.what());
  }
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const nlohmann::json rec = nlohmann::json::parse(line);
      Bag bag{rec.at("indices").get<std::vector<int>>(),
              ProbVector(rec.at("gamma_hat").get<std::vector<double>>()), std::nullopt};
      if (rec.contains("gamma_true") && !rec.at("gamma_true").is_null())
        bag.gamma_true = ProbVector(rec.at("gamma_true").get<std::vector<double>>());
      if (bag.gamma_hat.size() != file.C)
        throw DataError(path + ": line " + std::to_string(line_number) +
                        ": gamma_hat length disagrees with metadata C");
      if (bag.indices.empty())
        throw DataError(path + ": line " + std::to_string(line_number) + ": empty bag");
      file.bags.push_back(std::move(bag));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  if (static_cast<int>(file.bags.size()) != file.n_bags)
    throw DataError(path + ": bag count disagrees with metadata");
  return file;
}

}  // namespace llpfc
