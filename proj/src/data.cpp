#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "frl/dataset.hpp"
#include "frl/errors.hpp"

namespace frl {

namespace {

bool ParseDouble(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() &&
         (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> SplitCommas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

void Validate(const DatasetShard& data) {
  if (data.empty()) throw ValidationError("dataset is empty");
  if (data.dim == 0) throw ValidationError("dataset has zero feature columns");
  if (data.features.size() != data.rows() * data.dim) {
    throw ValidationError("feature matrix size does not match rows * dim");
  }
  for (int label : data.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= data.num_classes) {
      throw ValidationError("label " + std::to_string(label) +
                            " outside [0, " +
                            std::to_string(data.num_classes) + ")");
    }
  }
}

DatasetShard Subset(const DatasetShard& data, std::span<const std::size_t> rows,
                    int owner) {
  DatasetShard out;
  out.dim = data.dim;
  out.num_classes = data.num_classes;
  out.owner = owner;
  out.features.reserve(rows.size() * data.dim);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    const auto row = data.row(r);
    out.features.insert(out.features.end(), row.begin(), row.end());
    out.labels.push_back(data.labels[r]);
  }
  return out;
}

DatasetShard Concat(std::span<const DatasetShard> parts, int owner) {
  DatasetShard out;
  out.owner = owner;
  for (const DatasetShard& p : parts) {
    if (p.empty()) continue;
    if (out.dim == 0) {
      out.dim = p.dim;
    } else if (p.dim != out.dim) {
      throw ValidationError("cannot concatenate shards of different width");
    }
    out.num_classes = std::max(out.num_classes, p.num_classes);
    out.features.insert(out.features.end(), p.features.begin(),
                        p.features.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

DatasetShard LoadCsv(const std::filesystem::path& path,
                     std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  DatasetShard data;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = SplitCommas(line);
    if (cells.size() < 2) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected feature columns and a label");
    }
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t c = 0; c < cells.size() && numeric; ++c) {
      numeric = ParseDouble(cells[c], values[c]);
    }
    if (!numeric) {
      if (data.empty() && line_no == 1) continue;  // header
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": non-numeric cell");
    }
    const std::size_t dim = cells.size() - 1;
    if (data.dim == 0) data.dim = dim;
    if (dim != data.dim) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(data.dim + 1) +
                            " columns");
    }
    const double label = values.back();
    if (label != std::floor(label) || label < 0) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": label must be a non-negative integer");
    }
    data.features.insert(data.features.end(), values.begin(),
                         values.end() - 1);
    data.labels.push_back(static_cast<int>(label));
    max_label = std::max(max_label, data.labels.back());
  }
  data.num_classes =
      num_classes > 0 ? num_classes : static_cast<std::size_t>(max_label + 1);
  Validate(data);
  return data;
}

DatasetShard SynthDataset(std::uint64_t seed, std::size_t num_classes,
                          std::size_t dim, std::size_t samples_per_class,
                          double separation) {
  if (num_classes == 0 || dim == 0 || samples_per_class == 0) {
    throw ParameterError("synthetic dataset needs classes, dim and samples");
  }
  if (separation < 0.0) throw ParameterError("separation must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> means(num_classes * dim);
  for (std::size_t c = 0; c < num_classes; ++c) {
    double norm = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      means[c * dim + d] = gauss(rng);
      norm += means[c * dim + d] * means[c * dim + d];
    }
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < dim; ++d) {
      means[c * dim + d] *= separation / norm;
    }
  }

  const std::size_t total = num_classes * samples_per_class;
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  DatasetShard data;
  data.dim = dim;
  data.num_classes = num_classes;
  data.features.resize(total * dim);
  data.labels.resize(total);
  for (std::size_t s = 0; s < total; ++s) {
    const std::size_t c = s / samples_per_class;
    const std::size_t slot = order[s];
    data.labels[slot] = static_cast<int>(c);
    for (std::size_t d = 0; d < dim; ++d) {
      data.features[slot * dim + d] = means[c * dim + d] + gauss(rng);
    }
  }
  return data;
}

std::vector<std::vector<std::size_t>> DirichletPartitionRows(
    const DatasetShard& data, std::size_t num_clients, double beta,
    std::mt19937_64& rng) {
  Validate(data);
  if (!(beta > 0.0)) throw ParameterError("dirichlet beta must be positive");
  if (num_clients == 0) throw ConfigError("partition needs at least one client");
  if (data.rows() < num_clients) {
    throw ConfigError("cannot give " + std::to_string(num_clients) +
                      " clients a sample each from " +
                      std::to_string(data.rows()) + " rows");
  }

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    by_class[static_cast<std::size_t>(data.labels[r])].push_back(r);
  }

  std::vector<std::vector<std::size_t>> assigned(num_clients);
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<double> props(num_clients);
  for (auto& rows : by_class) {
    if (rows.empty()) continue;
    std::shuffle(rows.begin(), rows.end(), rng);
    double sum = 0.0;
    for (double& p : props) {
      p = gamma(rng);
      sum += p;
    }
    if (!(sum > 0.0)) {
      // Every draw underflowed (tiny beta): the class goes to one client.
      std::fill(props.begin(), props.end(), 0.0);
      props[std::uniform_int_distribution<std::size_t>(0, num_clients - 1)(rng)] = 1.0;
      sum = 1.0;
    }
    const double n = static_cast<double>(rows.size());
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
      cumulative += props[c] / sum;
      std::size_t end = c + 1 == num_clients
                            ? rows.size()
                            : std::min(rows.size(), static_cast<std::size_t>(
                                                        std::floor(cumulative * n)));
      end = std::max(end, begin);
      assigned[c].insert(assigned[c].end(), rows.begin() + static_cast<std::ptrdiff_t>(begin),
                         rows.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }
  }

  for (std::size_t c = 0; c < num_clients; ++c) {
    if (!assigned[c].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t j = 1; j < num_clients; ++j) {
      if (assigned[j].size() > assigned[largest].size()) largest = j;
    }
    auto& donor = assigned[largest];
    const std::size_t pick =
        std::uniform_int_distribution<std::size_t>(0, donor.size() - 1)(rng);
    assigned[c].push_back(donor[pick]);
    donor.erase(donor.begin() + static_cast<std::ptrdiff_t>(pick));
  }

  for (auto& rows : assigned) std::sort(rows.begin(), rows.end());
  return assigned;
}

std::vector<DatasetShard> DirichletPartition(const DatasetShard& data,
                                             std::size_t num_clients,
                                             double beta, std::mt19937_64& rng) {
  const auto assigned = DirichletPartitionRows(data, num_clients, beta, rng);
  std::vector<DatasetShard> shards;
  shards.reserve(num_clients);
  for (std::size_t c = 0; c < num_clients; ++c) {
    shards.push_back(Subset(data, assigned[c], static_cast<int>(c)));
  }
  return shards;
}

}  // namespace frl
