#include "fedefc/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>

#include "fedefc/rng.hpp"

namespace fedefc::data {

void Dataset::validate() const {
  if (size() == 0) throw std::invalid_argument("Dataset: empty");
  if (num_classes < 2) throw std::invalid_argument("Dataset: need at least two classes");
  if (features.rows() != size() || observed_labels.size() != size()) {
    throw std::invalid_argument("Dataset: feature/label lengths differ");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    const auto c = static_cast<std::size_t>(clean_labels[i]);
    const auto o = static_cast<std::size_t>(observed_labels[i]);
    if (clean_labels[i] < 0 || observed_labels[i] < 0 || c >= num_classes || o >= num_classes) {
      throw std::invalid_argument("Dataset: label out of range at row " + std::to_string(i));
    }
  }
  for (double v : features.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("Dataset: non-finite feature");
  }
}

std::vector<double> mixture_center(std::size_t c, std::size_t num_classes, std::size_t dim,
                                   double separation) {
  std::vector<double> center(dim, 0.0);
  if (dim >= num_classes) {
    center[c] = separation;
  } else if (dim >= 2) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) /
                         static_cast<double>(num_classes);
    center[0] = separation * std::cos(angle);
    center[1] = separation * std::sin(angle);
  } else if (num_classes == 2) {
    center[0] = c == 0 ? separation : -separation;
  } else {
    throw std::invalid_argument("gen_gaussian_mixture: dim 1 supports only two classes");
  }
  return center;
}

Dataset gen_gaussian_mixture(std::size_t num_classes, std::size_t dim, std::size_t per_class,
                             double separation, std::uint64_t seed) {
  if (num_classes < 2 || dim == 0 || per_class == 0 || !(separation > 0.0)) {
    throw std::invalid_argument("gen_gaussian_mixture: arguments must be positive (num_classes >= 2)");
  }
  const std::size_t n = num_classes * per_class;
  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = RowMatrix(n, dim);
  ds.clean_labels.resize(n);
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto center = mixture_center(c, num_classes, dim, separation);
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t r = c * per_class + k;
      auto row = ds.features.row(r);
      for (std::size_t d = 0; d < dim; ++d) row[d] = center[d] + noise(rng);
      ds.clean_labels[r] = static_cast<int>(c);
    }
  }
  ds.observed_labels = ds.clean_labels;
  return ds;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxOpenError("cannot open IDX file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off) {
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, std::size_t limit) {
  const auto images = read_all(images_path);
  const auto labels = read_all(labels_path);

  if (images.size() < 4) throw IdxTruncatedError("image file too short for magic: " + images_path.string());
  if (read_be32(images, 0) != kImageMagic) {
    throw IdxBadMagicError("bad image magic in " + images_path.string());
  }
  if (images.size() < 16) throw IdxTruncatedError("image header truncated: " + images_path.string());
  const std::size_t n_images = read_be32(images, 4);
  const std::size_t rows = read_be32(images, 8);
  const std::size_t cols = read_be32(images, 12);
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + n_images * dim) {
    throw IdxTruncatedError("image data truncated: " + images_path.string());
  }

  if (labels.size() < 4) throw IdxTruncatedError("label file too short for magic: " + labels_path.string());
  if (read_be32(labels, 0) != kLabelMagic) {
    throw IdxBadMagicError("bad label magic in " + labels_path.string());
  }
  if (labels.size() < 8) throw IdxTruncatedError("label header truncated: " + labels_path.string());
  const std::size_t n_labels = read_be32(labels, 4);
  if (labels.size() < 8 + n_labels) {
    throw IdxTruncatedError("label data truncated: " + labels_path.string());
  }
  if (n_labels != n_images) {
    throw IdxCountMismatchError("image count " + std::to_string(n_images) +
                                " != label count " + std::to_string(n_labels));
  }
  if (dim == 0) throw IdxError("IDX images have zero size");

  const std::size_t n = limit > 0 ? std::min(limit, n_images) : n_images;
  Dataset ds;
  ds.features = RowMatrix(n, dim);
  ds.clean_labels.resize(n);
  int max_label = 1;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.features.row(i);
    const unsigned char* px = images.data() + 16 + i * dim;
    for (std::size_t d = 0; d < dim; ++d) row[d] = static_cast<double>(px[d]) / 255.0;
    ds.clean_labels[i] = labels[8 + i];
    max_label = std::max(max_label, ds.clean_labels[i]);
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  ds.observed_labels = ds.clean_labels;
  return ds;
}

void PartitionSpec::validate() const {
  if (num_clients == 0) throw std::invalid_argument("PartitionSpec: num_clients must be positive");
  if (!(alpha_dir > 0.0)) throw std::invalid_argument("PartitionSpec: alpha_dir must be positive");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("PartitionSpec: p must be in (0,1]");
}

std::size_t Partition::total() const {
  std::size_t s = 0;
  for (const auto& a : assignments) s += a.size();
  return s;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& shares, std::size_t total) {
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<std::size_t> counts(shares.size(), 0);
  if (shares.empty() || !(sum > 0.0)) return counts;
  std::vector<double> rem(shares.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < shares.size(); ++k) {
    const double exact = shares[k] / sum * static_cast<double>(total);
    const double fl = std::floor(exact);
    counts[k] = static_cast<std::size_t>(fl);
    rem[k] = exact - fl;
    assigned += counts[k];
  }
  // Float error can push the floor sum past the target; trim from the smallest remainders.
  std::vector<std::size_t> order(shares.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  while (assigned > total) {
    for (auto it = order.rbegin(); it != order.rend() && assigned > total; ++it) {
      if (counts[*it] > 0) {
        --counts[*it];
        --assigned;
      }
    }
  }
  for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

Partition partition(const Dataset& dataset, const PartitionSpec& spec) {
  spec.validate();
  if (dataset.size() == 0) throw std::invalid_argument("partition: empty dataset");
  const std::size_t n_clients = spec.num_clients;
  Partition out;
  out.assignments.resize(n_clients);

  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.observed_labels[i])].push_back(i);
  }

  Rng rng(spec.seed);
  std::bernoulli_distribution coin(spec.p);
  std::gamma_distribution<double> gamma(spec.alpha_dir, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n_clients - 1);

  for (auto& indices : by_class) {
    std::shuffle(indices.begin(), indices.end(), rng);

    std::vector<std::size_t> members;
    for (std::size_t k = 0; k < n_clients; ++k) {
      if (coin(rng)) members.push_back(k);
    }
    if (members.empty()) members.push_back(pick(rng));

    std::vector<double> shares(members.size());
    double sum = 0.0;
    for (auto& s : shares) {
      s = gamma(rng);
      sum += s;
    }
    if (!(sum > 0.0)) {
      // every gamma draw underflowed (tiny alpha): one member takes the class
      std::fill(shares.begin(), shares.end(), 0.0);
      shares[std::uniform_int_distribution<std::size_t>(0, shares.size() - 1)(rng)] = 1.0;
    }

    const auto counts = largest_remainder(shares, indices.size());
    std::size_t pos = 0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      auto& dst = out.assignments[members[m]];
      dst.insert(dst.end(), indices.begin() + static_cast<std::ptrdiff_t>(pos),
                 indices.begin() + static_cast<std::ptrdiff_t>(pos + counts[m]));
      pos += counts[m];
    }
  }
  for (auto& a : out.assignments) std::sort(a.begin(), a.end());
  return out;
}

}  // namespace fedefc::data
