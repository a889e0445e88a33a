#include "dpgn/episodes.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "dpgn/io.hpp"

namespace fs = std::filesystem;

namespace dpgn {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

std::vector<std::size_t> DatasetSource::classes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < splits.size(); ++c)
    if (splits[c] == s) out.push_back(c);
  return out;
}

void EpisodeSpec::validate() const {
  if (n_way < 2) throw std::invalid_argument("episode spec: n_way must be >= 2");
  if (k_shot < 1) throw std::invalid_argument("episode spec: k_shot must be >= 1");
  if (n_query < 1) throw std::invalid_argument("episode spec: n_query must be >= 1");
  if (labeled_ratio <= 0.0 || labeled_ratio > 1.0)
    throw std::invalid_argument("episode spec: labeled_ratio must be in (0,1]");
}

int EpisodeSpec::labeled_per_class() const {
  int n = static_cast<int>(labeled_ratio * k_shot + 1e-9);
  if (n < 1) {
    std::cerr << "warning: labeled_ratio " << labeled_ratio << " with k_shot " << k_shot
              << " clamped to 1 labeled shot per class\n";
    n = 1;
  }
  return std::min(n, k_shot);
}

namespace {

std::map<std::string, Split> read_manifest(const std::string& path) {
  std::map<std::string, Split> out;
  std::istringstream ss(io::read_text_file(path));
  std::string line;
  while (std::getline(ss, line)) {
    auto toks = io::split_ws(line);
    if (toks.empty() || toks[0][0] == '#') continue;
    if (toks.size() != 2) throw std::runtime_error("split manifest: bad line '" + line + "'");
    out[toks[0]] = split_from_string(toks[1]);
  }
  return out;
}

DatasetSource load_feature_archive(const std::string& root,
                                   const std::map<std::string, Split>& manifest) {
  const std::string bin_path = root + "/features.bin";
  const std::string idx_path = root + "/index.txt";
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path);

  DatasetSource src;
  std::map<std::string, std::size_t> class_ids;
  std::istringstream ss(io::read_text_file(idx_path));
  std::string line;
  std::size_t dim = 0;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string cls;
    std::uint64_t offset = 0, length = 0;
    if (!std::getline(ls, cls, '\t') || !(ls >> offset >> length))
      throw std::runtime_error("index.txt: bad line '" + line + "'");
    if (length == 0 || length % sizeof(float) != 0)
      throw std::runtime_error("index.txt: length must be a positive multiple of 4");
    const std::size_t n = length / sizeof(float);
    if (dim == 0) dim = n;
    if (n != dim) throw std::runtime_error("index.txt: inconsistent sample dimension");

    auto [it, inserted] = class_ids.try_emplace(cls, src.class_names.size());
    if (inserted) {
      src.class_names.push_back(cls);
      src.samples.emplace_back();
    }
    std::vector<float> buf(n);
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(length));
    if (!bin) throw std::runtime_error("features.bin: truncated read at offset " +
                                       std::to_string(offset));
    Tensor t({dim});
    for (std::size_t i = 0; i < n; ++i) t[i] = buf[i];
    src.samples[it->second].push_back(std::move(t));
  }
  src.input_shape = {dim};
  src.splits.resize(src.num_classes(), Split::train);
  for (const auto& [cls, split] : manifest) {
    auto it = class_ids.find(cls);
    if (it == class_ids.end())
      throw std::runtime_error("split manifest references unknown class '" + cls + "'");
    src.splits[it->second] = split;
  }
  return src;
}

DatasetSource load_class_dirs(const std::string& root,
                              const std::map<std::string, Split>& manifest) {
  DatasetSource src;
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw std::runtime_error("dataset root has no class directories: " + root);

  for (const auto& cls : dirs) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(root + "/" + cls))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("empty class '" + cls + "'");
    std::vector<Tensor> samples;
    for (const auto& f : files) {
      Tensor img = io::read_pgm(f);
      if (src.input_shape.empty())
        src.input_shape = img.shape();
      else if (img.shape() != src.input_shape)
        throw std::runtime_error("sample shape mismatch in class '" + cls + "'");
      samples.push_back(std::move(img));
    }
    src.class_names.push_back(cls);
    src.samples.push_back(std::move(samples));
  }
  src.splits.resize(src.num_classes(), Split::train);
  std::map<std::string, std::size_t> ids;
  for (std::size_t c = 0; c < src.num_classes(); ++c) ids[src.class_names[c]] = c;
  for (const auto& [cls, split] : manifest) {
    auto it = ids.find(cls);
    if (it == ids.end())
      throw std::runtime_error("split manifest references unknown class '" + cls + "'");
    src.splits[it->second] = split;
  }
  return src;
}

void apply_split_counts(DatasetSource& src, const SyntheticOptions& opts) {
  std::size_t n = src.num_classes();
  std::size_t tr = opts.train_classes, va = opts.val_classes, te = opts.test_classes;
  if (tr + va + te == 0) {
    tr = (n * 3) / 5;
    va = n / 5;
    te = n - tr - va;
  }
  if (tr + va + te != n)
    throw std::invalid_argument("split counts do not sum to the class count");
  for (std::size_t c = 0; c < n; ++c)
    src.splits[c] = c < tr ? Split::train : (c < tr + va ? Split::val : Split::test);
}

}  // namespace

DatasetSource load_dataset(const std::string& root, const std::string& split_manifest) {
  if (!fs::exists(root)) throw std::runtime_error("dataset root does not exist: " + root);
  auto manifest = split_manifest.empty() ? std::map<std::string, Split>{}
                                         : read_manifest(split_manifest);
  DatasetSource src = fs::exists(root + "/features.bin") ? load_feature_archive(root, manifest)
                                                         : load_class_dirs(root, manifest);
  for (std::size_t c = 0; c < src.num_classes(); ++c)
    if (src.samples[c].empty()) throw std::runtime_error("empty class '" + src.class_names[c] + "'");
  return src;
}

Episode sample_episode(const DatasetSource& src, Split split, const EpisodeSpec& spec, Rng& rng) {
  spec.validate();
  const auto classes = src.classes_in(split);
  const std::size_t n = static_cast<std::size_t>(spec.n_way);
  if (classes.size() < n)
    throw std::runtime_error("split '" + to_string(split) + "' has " +
                             std::to_string(classes.size()) + " classes, need " +
                             std::to_string(n));

  // Draw N distinct classes.
  std::vector<std::size_t> pool = classes;
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> d(i, pool.size() - 1);
    std::swap(pool[i], pool[d(rng)]);
  }
  pool.resize(n);

  // Assign query counts per class.
  std::vector<int> queries_per_class(n, 0);
  if (spec.balanced_queries) {
    for (int q = 0; q < spec.n_query; ++q) queries_per_class[q % n]++;
  } else {
    for (int q = 0; q < spec.n_query; ++q) {
      std::uniform_int_distribution<std::size_t> d(0, n - 1);
      std::size_t c = d(rng);
      // Skip classes whose pools cannot host another query.
      for (std::size_t tries = 0;
           src.samples[pool[c]].size() < static_cast<std::size_t>(spec.k_shot) +
                                             static_cast<std::size_t>(queries_per_class[c]) + 1;
           c = (c + 1) % n)
        if (++tries > n) throw std::runtime_error("not enough samples to place queries");
      queries_per_class[c]++;
    }
  }

  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t need =
        static_cast<std::size_t>(spec.k_shot) + static_cast<std::size_t>(queries_per_class[c]);
    if (src.samples[pool[c]].size() < need)
      throw std::runtime_error("class '" + src.class_names[pool[c]] + "' has " +
                               std::to_string(src.samples[pool[c]].size()) + " samples, need " +
                               std::to_string(need));
  }

  Episode ep;
  ep.n_way = spec.n_way;
  ep.k_shot = spec.k_shot;
  ep.n_query = spec.n_query;
  ep.class_remap.assign(pool.begin(), pool.end());
  const int labeled = spec.labeled_per_class();

  std::vector<std::pair<Tensor, int>> queries;  // gathered before shuffling
  for (std::size_t c = 0; c < n; ++c) {
    const auto& all = src.samples[pool[c]];
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t take =
        static_cast<std::size_t>(spec.k_shot) + static_cast<std::size_t>(queries_per_class[c]);
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
      std::swap(idx[i], idx[d(rng)]);
    }
    for (int k = 0; k < spec.k_shot; ++k) {
      ep.support_x.push_back(all[idx[static_cast<std::size_t>(k)]]);
      ep.support_y.push_back(static_cast<int>(c));
      ep.support_labeled.push_back(k < labeled ? 1 : 0);
    }
    for (int q = 0; q < queries_per_class[c]; ++q)
      queries.emplace_back(all[idx[static_cast<std::size_t>(spec.k_shot + q)]],
                           static_cast<int>(c));
  }

  // Shuffle query order so class identity is not encoded in the position.
  for (std::size_t i = 0; i + 1 < queries.size(); ++i) {
    std::uniform_int_distribution<std::size_t> d(i, queries.size() - 1);
    std::swap(queries[i], queries[d(rng)]);
  }
  for (auto& [x, y] : queries) {
    ep.query_x.push_back(std::move(x));
    ep.query_y.push_back(y);
  }
  return ep;
}

DatasetSource make_synthetic_clusters(std::size_t num_classes, std::size_t dim, double separation,
                                      Rng& rng, const SyntheticOptions& opts) {
  if (num_classes < 2) throw std::invalid_argument("synthetic clusters: need >= 2 classes");
  if (dim < 2) throw std::invalid_argument("synthetic clusters: need dim >= 2");
  if (separation <= 0.0) throw std::invalid_argument("synthetic clusters: separation must be > 0");

  // Sample means until pairwise distances reach the separation; widen the
  // candidate radius on repeated failures so this terminates for any input.
  std::vector<Tensor> means;
  double radius = std::max(2.0 * separation, 4.0);
  std::size_t failures = 0;
  while (means.size() < num_classes) {
    Tensor cand = randn({dim}, rng, radius / std::sqrt(static_cast<double>(dim)));
    bool ok = true;
    for (const auto& m : means) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = cand[i] - m[i];
        d2 += d * d;
      }
      if (d2 < separation * separation) {
        ok = false;
        break;
      }
    }
    if (ok) {
      means.push_back(std::move(cand));
    } else if (++failures % 64 == 0) {
      radius *= 1.5;
    }
  }

  DatasetSource src;
  src.input_shape = {dim};
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::ostringstream name;
    name << "cluster" << (c < 10 ? "0" : "") << c;
    src.class_names.push_back(name.str());
    std::vector<Tensor> samples;
    for (std::size_t i = 0; i < opts.samples_per_class; ++i) {
      Tensor x = randn({dim}, rng);
      for (std::size_t q = 0; q < dim; ++q) x[q] += means[c][q];
      samples.push_back(std::move(x));
    }
    src.samples.push_back(std::move(samples));
  }
  src.splits.resize(num_classes, Split::train);
  apply_split_counts(src, opts);
  return src;
}

DatasetSource make_synthetic_images(std::size_t num_classes, Rng& rng,
                                    const SyntheticOptions& opts) {
  if (num_classes < 2) throw std::invalid_argument("synthetic images: need >= 2 classes");
  const std::size_t h = 28, w = 28;
  DatasetSource src;
  src.input_shape = {1, h, w};
  std::uniform_real_distribution<double> jitter(-1.5, 1.5);
  for (std::size_t c = 0; c < num_classes; ++c) {
    // Class identity is the blob location on a ring.
    const double ang = 2.0 * 3.14159265358979 * static_cast<double>(c) / num_classes;
    const double cy = 14.0 + 8.0 * std::sin(ang), cx = 14.0 + 8.0 * std::cos(ang);
    std::ostringstream name;
    name << "blob" << (c < 10 ? "0" : "") << c;
    src.class_names.push_back(name.str());
    std::vector<Tensor> samples;
    for (std::size_t i = 0; i < opts.samples_per_class; ++i) {
      const double jy = cy + jitter(rng), jx = cx + jitter(rng);
      Tensor img({1, h, w});
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cc = 0; cc < w; ++cc) {
          const double d2 = (r - jy) * (r - jy) + (cc - jx) * (cc - jx);
          img[r * w + cc] = std::exp(-d2 / 18.0);
        }
      samples.push_back(std::move(img));
    }
    src.samples.push_back(std::move(samples));
  }
  src.splits.resize(num_classes, Split::train);
  apply_split_counts(src, opts);
  return src;
}

void write_feature_dataset(const std::string& root, const DatasetSource& src) {
  if (src.input_shape.size() != 1)
    throw std::invalid_argument("write_feature_dataset: vector datasets only");
  fs::create_directories(root);
  std::ofstream bin(root + "/features.bin", std::ios::binary);
  std::ofstream idx(root + "/index.txt");
  std::uint64_t offset = 0;
  for (std::size_t c = 0; c < src.num_classes(); ++c)
    for (const auto& s : src.samples[c]) {
      std::vector<float> buf(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) buf[i] = static_cast<float>(s[i]);
      const std::uint64_t len = buf.size() * sizeof(float);
      bin.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(len));
      idx << src.class_names[c] << "\t" << offset << "\t" << len << "\n";
      offset += len;
    }
}

void write_image_dataset(const std::string& root, const DatasetSource& src) {
  if (src.input_shape.size() != 3)
    throw std::invalid_argument("write_image_dataset: image datasets only");
  for (std::size_t c = 0; c < src.num_classes(); ++c) {
    const std::string dir = root + "/" + src.class_names[c];
    fs::create_directories(dir);
    for (std::size_t i = 0; i < src.samples[c].size(); ++i) {
      std::ostringstream name;
      name << dir << "/s" << (i < 10 ? "00" : i < 100 ? "0" : "") << i << ".pgm";
      io::write_pgm(name.str(), src.samples[c][i]);
    }
  }
}

void write_split_manifest(const std::string& path, const DatasetSource& src) {
  std::ostringstream ss;
  for (std::size_t c = 0; c < src.num_classes(); ++c)
    ss << src.class_names[c] << " " << to_string(src.splits[c]) << "\n";
  io::write_text_file(path, ss.str());
}

}  // namespace dpgn
