#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dpgn/episodes.hpp"
#include "dpgn/io.hpp"
#include "testutil.hpp"

using namespace dpgn;
namespace fs = std::filesystem;

namespace {

bool same_tensor(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

bool same_episode(const Episode& a, const Episode& b) {
  if (a.support_y != b.support_y || a.query_y != b.query_y ||
      a.support_labeled != b.support_labeled || a.class_remap != b.class_remap)
    return false;
  for (std::size_t i = 0; i < a.support_x.size(); ++i)
    if (!same_tensor(a.support_x[i], b.support_x[i])) return false;
  for (std::size_t i = 0; i < a.query_x.size(); ++i)
    if (!same_tensor(a.query_x[i], b.query_x[i])) return false;
  return true;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("dpgn_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic clusters: split counts and separation") {
  Rng rng(7);
  SyntheticOptions opts;
  opts.samples_per_class = 60;
  opts.train_classes = 12;
  opts.val_classes = 4;
  opts.test_classes = 4;
  DatasetSource src = make_synthetic_clusters(20, 16, 6.0, rng, opts);
  CHECK(src.num_classes() == 20);
  CHECK(src.classes_in(Split::train).size() == 12);
  CHECK(src.classes_in(Split::val).size() == 4);
  CHECK(src.classes_in(Split::test).size() == 4);
  CHECK(src.input_shape == std::vector<std::size_t>{16});

  // Class sample means should sit at least ~separation apart (sample noise
  // shifts each mean by O(1/sqrt(n)) per coordinate).
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < src.num_classes(); ++c) {
    std::vector<double> mu(16, 0.0);
    for (const auto& s : src.samples[c])
      for (std::size_t q = 0; q < 16; ++q) mu[q] += s[q];
    for (auto& v : mu) v /= static_cast<double>(src.samples[c].size());
    centroids.push_back(std::move(mu));
  }
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t q = 0; q < 16; ++q)
        d2 += (centroids[a][q] - centroids[b][q]) * (centroids[a][q] - centroids[b][q]);
      CHECK(std::sqrt(d2) > 4.5);
    }

  CHECK_THROWS(make_synthetic_clusters(20, 16, -1.0, rng));
  CHECK_THROWS(make_synthetic_clusters(1, 16, 1.0, rng));
}

TEST_CASE("nearest-centroid oracle tops 99% on a well-separated source") {
  Rng rng(11);
  SyntheticOptions opts;
  opts.samples_per_class = 100;
  opts.train_classes = 20;  // keep everything in one split for this check
  DatasetSource src = make_synthetic_clusters(20, 16, 6.0, rng, opts);

  // Centroids from the first half of each class pool, evaluation on the rest.
  std::vector<std::vector<double>> centroids(20, std::vector<double>(16, 0.0));
  for (std::size_t c = 0; c < 20; ++c) {
    for (std::size_t i = 0; i < 50; ++i)
      for (std::size_t q = 0; q < 16; ++q) centroids[c][q] += src.samples[c][i][q];
    for (auto& v : centroids[c]) v /= 50.0;
  }
  std::size_t correct = 0, total = 0;
  for (std::size_t c = 0; c < 20 && total < 1000; ++c)
    for (std::size_t i = 50; i < 100 && total < 1000; ++i) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t cc = 0; cc < 20; ++cc) {
        double d2 = 0.0;
        for (std::size_t q = 0; q < 16; ++q) {
          const double d = src.samples[c][i][q] - centroids[cc][q];
          d2 += d * d;
        }
        if (d2 < best_d) {
          best_d = d2;
          best = cc;
        }
      }
      total++;
      if (best == c) correct++;
    }
  CHECK(total == 1000);
  CHECK(static_cast<double>(correct) / static_cast<double>(total) > 0.99);
}

TEST_CASE("episode sampling: layout, disjointness, determinism") {
  Rng rng(21);
  SyntheticOptions opts;
  opts.samples_per_class = 30;
  opts.train_classes = 20;
  DatasetSource src = make_synthetic_clusters(20, 8, 4.0, rng, opts);

  EpisodeSpec spec;
  spec.n_way = 5;
  spec.k_shot = 1;
  spec.n_query = 5;

  Rng e1(7), e2(7);
  Episode a = sample_episode(src, Split::train, spec, e1);
  Episode b = sample_episode(src, Split::train, spec, e2);
  CHECK(a.total() == 10);
  CHECK(a.support_x.size() == 5);
  CHECK(a.query_x.size() == 5);
  CHECK(same_episode(a, b));  // identical seeds, identical episodes

  // Episode sequences also match seed-for-seed.
  Episode a2 = sample_episode(src, Split::train, spec, e1);
  Episode b2 = sample_episode(src, Split::train, spec, e2);
  CHECK(same_episode(a2, b2));

  // class-major support ordering
  spec.k_shot = 3;
  spec.n_query = 7;
  Rng e3(5);
  Episode c = sample_episode(src, Split::train, spec, e3);
  for (int i = 0; i < c.num_support(); ++i) CHECK(c.support_y[i] == i / c.k_shot);
  for (int y : c.query_y) {
    CHECK(y >= 0);
    CHECK(y < 5);
  }
  // supports and queries draw distinct samples
  for (const auto& s : c.support_x)
    for (const auto& q : c.query_x) CHECK(!same_tensor(s, q));
  // all supports labeled at ratio 1
  for (auto f : c.support_labeled) CHECK(f == 1);
}

TEST_CASE("semi-supervised masking") {
  Rng rng(22);
  SyntheticOptions opts;
  opts.samples_per_class = 40;
  opts.train_classes = 12;
  DatasetSource src = make_synthetic_clusters(12, 8, 4.0, rng, opts);

  EpisodeSpec spec;
  spec.n_way = 5;
  spec.k_shot = 10;
  spec.n_query = 5;
  spec.labeled_ratio = 0.2;
  CHECK(spec.labeled_per_class() == 2);

  Rng erng(3);
  Episode ep = sample_episode(src, Split::train, spec, erng);
  for (int c = 0; c < 5; ++c) {
    int labeled = 0;
    for (int k = 0; k < 10; ++k) labeled += ep.support_labeled[c * 10 + k];
    CHECK(labeled == 2);  // 2 labeled + 8 unlabeled per class
  }

  spec.labeled_ratio = 0.05;  // would floor to zero; clamps to one per class
  CHECK(spec.labeled_per_class() == 1);

  spec.labeled_ratio = 0.0;
  CHECK_THROWS(spec.validate());
  spec.labeled_ratio = 1.2;
  CHECK_THROWS(spec.validate());
}

TEST_CASE("episode errors") {
  Rng rng(23);
  SyntheticOptions opts;
  opts.samples_per_class = 4;
  opts.train_classes = 3;
  DatasetSource src = make_synthetic_clusters(3, 4, 3.0, rng, opts);

  EpisodeSpec spec;
  spec.n_way = 5;  // more ways than classes
  Rng erng(1);
  CHECK_THROWS(sample_episode(src, Split::train, spec, erng));

  spec.n_way = 3;
  spec.k_shot = 4;  // no room left for queries
  spec.n_query = 3;
  CHECK_THROWS(sample_episode(src, Split::train, spec, erng));

  spec.k_shot = 0;
  CHECK_THROWS(sample_episode(src, Split::train, spec, erng));
}

TEST_CASE("balanced queries flag") {
  Rng rng(24);
  SyntheticOptions opts;
  opts.samples_per_class = 20;
  opts.train_classes = 8;
  DatasetSource src = make_synthetic_clusters(8, 4, 3.0, rng, opts);
  EpisodeSpec spec;
  spec.n_way = 4;
  spec.k_shot = 1;
  spec.n_query = 8;
  spec.balanced_queries = true;
  Rng erng(2);
  Episode ep = sample_episode(src, Split::train, spec, erng);
  std::vector<int> counts(4, 0);
  for (int y : ep.query_y) counts[static_cast<std::size_t>(y)]++;
  for (int c : counts) CHECK(c == 2);
}

TEST_CASE("feature archive round trip with split manifest") {
  Rng rng(25);
  SyntheticOptions opts;
  opts.samples_per_class = 5;
  opts.train_classes = 64;
  opts.val_classes = 16;
  opts.test_classes = 20;
  DatasetSource src = make_synthetic_clusters(100, 6, 3.0, rng, opts);

  const fs::path root = temp_dir("features");
  write_feature_dataset(root.string(), src);
  write_split_manifest((root / "split.txt").string(), src);

  DatasetSource loaded = load_dataset(root.string(), (root / "split.txt").string());
  CHECK(loaded.num_classes() == 100);
  CHECK(loaded.classes_in(Split::train).size() == 64);
  CHECK(loaded.classes_in(Split::val).size() == 16);
  CHECK(loaded.classes_in(Split::test).size() == 20);
  CHECK(loaded.input_shape == std::vector<std::size_t>{6});
  // float32 on disk: values agree to float precision
  CHECK(std::abs(loaded.samples[3][2][1] - src.samples[3][2][1]) < 1e-6);

  // manifest naming an unknown class is rejected
  std::ofstream bad((root / "bad.txt").string());
  bad << "no_such_class test\n";
  bad.close();
  CHECK_THROWS(load_dataset(root.string(), (root / "bad.txt").string()));

  CHECK_THROWS(load_dataset("/nonexistent/dpgn/root", ""));
}

TEST_CASE("image directory layout and empty class error") {
  Rng rng(26);
  SyntheticOptions opts;
  opts.samples_per_class = 3;
  opts.train_classes = 4;
  DatasetSource src = make_synthetic_images(4, rng, opts);
  CHECK(src.input_shape == std::vector<std::size_t>({1, 28, 28}));

  const fs::path root = temp_dir("images");
  write_image_dataset(root.string(), src);
  DatasetSource loaded = load_dataset(root.string(), "");
  CHECK(loaded.num_classes() == 4);
  CHECK(loaded.samples[0].size() == 3);
  CHECK(loaded.input_shape == std::vector<std::size_t>({1, 28, 28}));
  // 8-bit round trip
  CHECK(std::abs(loaded.samples[1][0][14 * 28 + 14] - src.samples[1][0][14 * 28 + 14]) < 1e-2);

  fs::create_directories(root / "empty_class");
  CHECK_THROWS_WITH_AS(load_dataset(root.string(), ""), doctest::Contains("empty class"),
                       std::runtime_error);
}

TEST_CASE("pgm io round trip") {
  const fs::path root = temp_dir("pgm");
  Tensor img({1, 5, 7});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = (i % 13) / 12.0;
  io::write_pgm((root / "x.pgm").string(), img);
  Tensor back = io::read_pgm((root / "x.pgm").string());
  CHECK(back.shape() == img.shape());
  CHECK(testutil::max_abs_diff(back, img) < 1.0 / 255.0 + 1e-9);
}
