#ifndef FRL_DATASET_HPP_
#define FRL_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace frl {

// Row-major feature matrix with one integer class label per row. Used both
// for whole datasets and for the per-client shards cut from them.
struct DatasetShard {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // rows() * dim values
  std::vector<int> labels;
  int owner = -1;  // client ID, or -1 for server-held data

  std::size_t rows() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
};

// Throws ValidationError on empty data, ragged rows or labels outside
// [0, num_classes).
void Validate(const DatasetShard& data);

// Copies the given rows, in order, into a new shard.
DatasetShard Subset(const DatasetShard& data, std::span<const std::size_t> rows,
                    int owner = -1);

// Concatenates shards of equal dimension.
DatasetShard Concat(std::span<const DatasetShard> parts, int owner = -1);

// Reads feature columns followed by an integer label column. A non-numeric
// first line is treated as a header. `num_classes` of 0 infers max label + 1.
DatasetShard LoadCsv(const std::filesystem::path& path,
                     std::size_t num_classes = 0);

// Gaussian class blobs: class means are `separation` times random unit
// directions, samples add unit-variance isotropic noise. Rows are shuffled.
DatasetShard SynthDataset(std::uint64_t seed, std::size_t num_classes,
                          std::size_t dim, std::size_t samples_per_class,
                          double separation);

// Non-IID split: for each class, client proportions are drawn from a
// symmetric Dirichlet(beta) and the class rows are dealt out accordingly.
// Clients left empty receive one random row from the current largest shard.
// Shards are disjoint and together cover every row of `data`.
std::vector<std::vector<std::size_t>> DirichletPartitionRows(
    const DatasetShard& data, std::size_t num_clients, double beta,
    std::mt19937_64& rng);
std::vector<DatasetShard> DirichletPartition(const DatasetShard& data,
                                             std::size_t num_clients,
                                             double beta, std::mt19937_64& rng);

}  // namespace frl

#endif  // FRL_DATASET_HPP_
