#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "fedefc/datagen.hpp"
#include "fedefc/nn.hpp"

using namespace fedefc;
namespace fs = std::filesystem;

namespace {

void put_be32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

struct IdxFiles {
  fs::path dir;
  fs::path images;
  fs::path labels;

  explicit IdxFiles(const std::string& name)
      : dir(fs::temp_directory_path() / ("fedefc_idx_" + name)),
        images(dir / "images.idx"),
        labels(dir / "labels.idx") {
    fs::create_directories(dir);
  }
  ~IdxFiles() { fs::remove_all(dir); }

  static void write(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  void write_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                    const std::vector<unsigned char>& pixels) const {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    b.insert(b.end(), pixels.begin(), pixels.end());
    write(images, b);
  }
  void write_labels(std::uint32_t magic, std::uint32_t n, const std::vector<unsigned char>& ls) const {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, n);
    b.insert(b.end(), ls.begin(), ls.end());
    write(labels, b);
  }
};

std::vector<std::size_t> class_histogram(const data::Dataset& d, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> h(d.num_classes, 0);
  for (auto i : idx) ++h[static_cast<std::size_t>(d.observed_labels[i])];
  return h;
}

}  // namespace

TEST_CASE("gaussian mixture shape and balance") {
  const auto d = data::gen_gaussian_mixture(3, 2, 100, 4.0, 1);
  CHECK(d.size() == 300);
  CHECK(d.dim() == 2);
  CHECK(d.observed_labels == d.clean_labels);
  std::vector<int> h(3, 0);
  for (int y : d.clean_labels) ++h[static_cast<std::size_t>(y)];
  CHECK(h == std::vector<int>{100, 100, 100});
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("gaussian mixture is deterministic") {
  const auto a = data::gen_gaussian_mixture(4, 5, 50, 3.0, 9);
  const auto b = data::gen_gaussian_mixture(4, 5, 50, 3.0, 9);
  CHECK(a.features == b.features);
  CHECK(a.clean_labels == b.clean_labels);
  CHECK(data::gen_gaussian_mixture(4, 5, 50, 3.0, 10).features != a.features);
}

TEST_CASE("mixture centers sit at the requested radius and are distinct") {
  for (std::size_t dim : {1u, 2u, 3u, 10u}) {
    for (std::size_t c_count : {2u, 3u, 5u, 10u}) {
      if (dim == 1 && c_count > 2) {
        CHECK_THROWS(data::mixture_center(0, c_count, dim, 4.0));
        continue;
      }
      std::vector<std::vector<double>> centers;
      for (std::size_t c = 0; c < c_count; ++c) {
        auto v = data::mixture_center(c, c_count, dim, 4.0);
        double r = 0.0;
        for (double x : v) r += x * x;
        CHECK(std::sqrt(r) == doctest::Approx(4.0).epsilon(1e-12));
        centers.push_back(v);
      }
      for (std::size_t a = 0; a < centers.size(); ++a) {
        for (std::size_t b = a + 1; b < centers.size(); ++b) {
          double d2 = 0.0;
          for (std::size_t k = 0; k < dim; ++k) d2 += std::pow(centers[a][k] - centers[b][k], 2);
          CHECK(d2 > 1e-6);
        }
      }
    }
  }
}

TEST_CASE("well separated mixture is linearly separable in practice") {
  const auto d = data::gen_gaussian_mixture(3, 10, 200, 6.0, 3);
  const nn::ModelSpec spec{10, {}, 3};
  auto p = nn::init_params(spec, 0);
  auto st = nn::OptimizerState::fresh(p.size(), 0.1, 0.5);
  const std::size_t bs = 20;
  for (int epoch = 0; epoch < 20; ++epoch) {
    for (std::size_t s = 0; s < d.size(); s += bs) {
      const nn::Batch b{d.features.values().subspan(s * 10, bs * 10),
                        std::span<const int>(d.observed_labels).subspan(s, bs)};
      nn::sgd_step(p, nn::loss_and_grad(p, b, nn::CrossEntropyLoss{}).grad, st);
    }
  }
  std::size_t correct = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    if (static_cast<int>(nn::argmax(nn::forward(p, d.features.row(r)))) == d.clean_labels[r]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(d.size()) >= 0.98);
}

TEST_CASE("load_idx reads an all-zero single image") {
  IdxFiles f("zero");
  f.write_images(0x803, 1, 2, 3, std::vector<unsigned char>(6, 0));
  f.write_labels(0x801, 1, {7});
  const auto d = data::load_idx(f.images, f.labels);
  CHECK(d.size() == 1);
  CHECK(d.dim() == 6);
  for (double v : d.features.values()) CHECK(v == 0.0);
  CHECK(d.clean_labels[0] == 7);
  CHECK(d.observed_labels[0] == 7);
  CHECK(d.num_classes == 8);
}

TEST_CASE("load_idx scales pixels and honours the limit") {
  IdxFiles f("scale");
  f.write_images(0x803, 3, 1, 2, {0, 255, 51, 102, 1, 2});
  f.write_labels(0x801, 3, {0, 1, 0});
  const auto d = data::load_idx(f.images, f.labels);
  CHECK(d.features(0, 1) == 1.0);
  CHECK(d.features(1, 0) == doctest::Approx(0.2));
  CHECK(d.num_classes == 2);
  CHECK(data::load_idx(f.images, f.labels, 2).size() == 2);
}

TEST_CASE("load_idx error paths are distinct") {
  IdxFiles f("errors");
  SUBCASE("missing file") {
    CHECK_THROWS_AS(data::load_idx(f.dir / "nope", f.dir / "nope2"), data::IdxOpenError);
  }
  SUBCASE("bad image magic") {
    f.write_images(0x802, 1, 1, 1, {0});
    f.write_labels(0x801, 1, {0});
    CHECK_THROWS_AS(data::load_idx(f.images, f.labels), data::IdxBadMagicError);
  }
  SUBCASE("bad label magic") {
    f.write_images(0x803, 1, 1, 1, {0});
    f.write_labels(0x803, 1, {0});
    CHECK_THROWS_AS(data::load_idx(f.images, f.labels), data::IdxBadMagicError);
  }
  SUBCASE("truncated pixels") {
    f.write_images(0x803, 2, 2, 2, {1, 2, 3, 4, 5});
    f.write_labels(0x801, 2, {0, 1});
    CHECK_THROWS_AS(data::load_idx(f.images, f.labels), data::IdxTruncatedError);
  }
  SUBCASE("truncated header") {
    IdxFiles::write(f.images, {0, 0, 8, 3, 0, 0});
    f.write_labels(0x801, 1, {0});
    CHECK_THROWS_AS(data::load_idx(f.images, f.labels), data::IdxTruncatedError);
  }
  SUBCASE("truncated labels") {
    f.write_images(0x803, 2, 1, 1, {1, 2});
    f.write_labels(0x801, 2, {0});
    CHECK_THROWS_AS(data::load_idx(f.images, f.labels), data::IdxTruncatedError);
  }
  SUBCASE("count mismatch") {
    f.write_images(0x803, 2, 1, 1, {1, 2});
    f.write_labels(0x801, 3, {0, 1, 1});
    CHECK_THROWS_AS(data::load_idx(f.images, f.labels), data::IdxCountMismatchError);
  }
}

TEST_CASE("official t10k files when available") {
  const char* dir = std::getenv("FEDEFC_MNIST_DIR");
  if (dir == nullptr) return;
  const fs::path base(dir);
  const auto d = data::load_idx(base / "t10k-images-idx3-ubyte", base / "t10k-labels-idx1-ubyte");
  CHECK(d.size() == 10000);
  CHECK(d.dim() == 784);
  CHECK(d.num_classes == 10);
}

TEST_CASE("largest_remainder sums exactly") {
  CHECK(data::largest_remainder({0.5, 0.5}, 3) == std::vector<std::size_t>{2, 1});
  CHECK(data::largest_remainder({0.2, 0.3, 0.5}, 10) == std::vector<std::size_t>{2, 3, 5});
  CHECK(data::largest_remainder({1.0}, 7) == std::vector<std::size_t>{7});
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + t % 12);
    double sum = 0.0;
    for (auto& v : s) sum += (v = e(rng));
    for (auto& v : s) v /= sum;
    const std::size_t total = static_cast<std::size_t>(t * 7);
    const auto c = data::largest_remainder(s, total);
    CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == total);
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(std::abs(static_cast<double>(c[i]) - s[i] * static_cast<double>(total)) < 1.0);
    }
  }
}

TEST_CASE("near-IID limit with p=1 and huge alpha") {
  const auto d = data::gen_gaussian_mixture(3, 2, 500, 2.0, 4);
  const auto part = data::partition(d, {10, 1e6, 1.0, 5});
  REQUIRE(part.num_clients() == 10);
  for (const auto& a : part.assignments) {
    for (auto count : class_histogram(d, a)) {
      CHECK(std::abs(static_cast<double>(count) - 50.0) <= 1.0);
    }
  }
}

TEST_CASE("single client receives everything") {
  const auto d = data::gen_gaussian_mixture(4, 3, 30, 2.0, 1);
  for (double p : {0.1, 0.5, 1.0}) {
    for (double alpha : {0.1, 10.0}) {
      const auto part = data::partition(d, {1, alpha, p, 3});
      std::vector<std::size_t> all(d.size());
      std::iota(all.begin(), all.end(), 0);
      CHECK(part.assignments[0] == all);
    }
  }
}

TEST_CASE("partition is disjoint and covering for random specs") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int t = 0; t < 40; ++t) {
    const auto d = data::gen_gaussian_mixture(2 + t % 5, 2, 20 + t, 2.0, static_cast<std::uint64_t>(t));
    const data::PartitionSpec spec{static_cast<std::size_t>(1 + t % 17), u(rng) * 20, u(rng),
                                   static_cast<std::uint64_t>(t)};
    const auto part = data::partition(d, spec);
    CHECK(part.num_clients() == spec.num_clients);
    CHECK(part.total() == d.size());
    std::set<std::size_t> seen;
    for (const auto& a : part.assignments) {
      for (auto i : a) {
        CHECK(i < d.size());
        CHECK(seen.insert(i).second);
      }
    }
    CHECK(seen.size() == d.size());
    CHECK(data::partition(d, spec).assignments == part.assignments);
  }
}

TEST_CASE("distinct seeds give distinct partitions") {
  const auto d = data::gen_gaussian_mixture(3, 2, 100, 2.0, 0);
  std::set<std::vector<std::vector<std::size_t>>> seen;
  for (std::uint64_t s = 0; s < 10; ++s) seen.insert(data::partition(d, {10, 1.0, 0.5, s}).assignments);
  CHECK(seen.size() == 10);
}

TEST_CASE("partition spec validation") {
  CHECK_THROWS(data::PartitionSpec({0, 1.0, 0.5, 0}).validate());
  CHECK_THROWS(data::PartitionSpec({2, 0.0, 0.5, 0}).validate());
  CHECK_THROWS(data::PartitionSpec({2, 1.0, 0.0, 0}).validate());
  CHECK_THROWS(data::PartitionSpec({2, 1.0, 1.5, 0}).validate());
}
