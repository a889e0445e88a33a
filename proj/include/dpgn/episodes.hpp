#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpgn/tensor.hpp"

namespace dpgn {

enum class Split { train, val, test };

Split split_from_string(const std::string& s);
std::string to_string(Split s);

// Read-only after construction; episode sampling never mutates it.
struct DatasetSource {
  std::vector<std::string> class_names;
  std::vector<std::vector<Tensor>> samples;  // per class, each sample shaped input_shape
  std::vector<Split> splits;                 // per class
  std::vector<std::size_t> input_shape;      // {dim} for vectors, {c,h,w} for images

  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> classes_in(Split s) const;
};

struct EpisodeSpec {
  int n_way = 5;
  int k_shot = 1;
  int n_query = 5;           // total query count for the episode
  double labeled_ratio = 1.0;
  bool balanced_queries = false;

  void validate() const;
  // Labeled supports per class: floor(ratio*K) clamped to [1, K].
  int labeled_per_class() const;
};

// Support ordering is class-major: index i in [c*K, (c+1)*K) holds class c.
// The distribution-node init relies on this layout.
struct Episode {
  int n_way = 0, k_shot = 0, n_query = 0;
  std::vector<Tensor> support_x;
  std::vector<int> support_y;               // remapped to 0..N-1
  std::vector<std::uint8_t> support_labeled;
  std::vector<Tensor> query_x;
  std::vector<int> query_y;                 // remapped to 0..N-1
  std::vector<std::size_t> class_remap;     // episode class -> original class index

  int num_support() const { return n_way * k_shot; }
  int total() const { return num_support() + n_query; }
};

struct SyntheticOptions {
  std::size_t samples_per_class = 100;
  std::size_t train_classes = 0;  // 0 -> 60/20/20 proportional split
  std::size_t val_classes = 0;
  std::size_t test_classes = 0;
};

// Layout on disk: either root/<class_name>/<sample>.pgm or
// root/features.bin + root/index.txt (lines: class<TAB>offset<TAB>length,
// float32 payload, offsets/lengths in bytes). Manifest: "<class> <split>".
DatasetSource load_dataset(const std::string& root, const std::string& split_manifest);

Episode sample_episode(const DatasetSource& src, Split split, const EpisodeSpec& spec, Rng& rng);

// Gaussian clusters with identity covariance; class means are rejection
// sampled until all pairwise distances reach `separation`.
DatasetSource make_synthetic_clusters(std::size_t num_classes, std::size_t dim, double separation,
                                      Rng& rng, const SyntheticOptions& opts = {});

// Procedural 28x28 grayscale blobs, one blob location per class; exercises
// the convolutional backbone without external data.
DatasetSource make_synthetic_images(std::size_t num_classes, Rng& rng,
                                    const SyntheticOptions& opts = {});

// Writers for the on-disk layouts (used by tests and export tooling).
void write_feature_dataset(const std::string& root, const DatasetSource& src);
void write_image_dataset(const std::string& root, const DatasetSource& src);
void write_split_manifest(const std::string& path, const DatasetSource& src);

}  // namespace dpgn
