#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedefc/matrix.hpp"

namespace fedefc::data {

/// Features plus ground-truth and observed labels. `observed_labels` starts as
/// a copy of `clean_labels` and is overwritten by label-noise injection.
struct Dataset {
  RowMatrix features;
  std::vector<int> clean_labels;
  std::vector<int> observed_labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return clean_labels.size(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
};

Dataset gen_gaussian_mixture(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                             double separation, std::uint64_t seed);

/// Center of class `c` used by gen_gaussian_mixture. Every center lies at
/// distance `separation` from the origin.
std::vector<double> mixture_center(std::size_t c, std::size_t num_classes, std::size_t dim,
                                   double separation);

// IDX loading errors. Each failure mode has its own type.
class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxOpenError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxBadMagicError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxCountMismatchError : public IdxError {
 public:
  using IdxError::IdxError;
};

/// Reads an IDX image file (magic 0x00000803) and label file (magic
/// 0x00000801). Pixels are scaled to [0,1]; num_classes is max label + 1
/// (at least 2). `limit` > 0 keeps only the first `limit` examples.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, std::size_t limit = 0);

struct PartitionSpec {
  std::size_t num_clients = 1;
  double alpha_dir = 1.0;
  double p = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Partition {
  std::vector<std::vector<std::size_t>> assignments;

  std::size_t num_clients() const { return assignments.size(); }
  std::size_t total() const;
};

/// Non-IID allocation. For every class (by observed label): a Bernoulli(p)
/// indicator per client picks the participating clients, a Dirichlet(alpha)
/// draw over them gives shares, and the class's indices are split by
/// largest-remainder rounding of those shares.
Partition partition(const Dataset& dataset, const PartitionSpec& spec);

/// Splits `total` into integer counts proportional to `shares` (summing to
/// exactly `total`). Remainders are handed out largest first, ties to the
/// lower index.
std::vector<std::size_t> largest_remainder(const std::vector<double>& shares, std::size_t total);

}  // namespace fedefc::data
