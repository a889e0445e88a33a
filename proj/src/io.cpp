#include "dpgn/io.hpp"

#include <fstream>
#include <sstream>

namespace dpgn::io {

Tensor read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw std::runtime_error(path + ": not a binary PGM");
  auto next_int = [&]() {
    int v;
    f >> std::ws;
    while (f.peek() == '#') {
      std::string skip;
      std::getline(f, skip);
      f >> std::ws;
    }
    f >> v;
    return v;
  };
  const int w = next_int(), h = next_int(), maxv = next_int();
  if (w <= 0 || h <= 0 || maxv <= 0 || maxv > 255)
    throw std::runtime_error(path + ": unsupported PGM header");
  f.get();  // single whitespace after header
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw std::runtime_error(path + ": truncated PGM payload");
  Tensor img({1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < raw.size(); ++i) img[i] = raw[i] / static_cast<double>(maxv);
  return img;
}

void write_pgm(const std::string& path, const Tensor& img) {
  std::size_t h, w;
  if (img.rank() == 3 && img.dim(0) == 1) {
    h = img.dim(1);
    w = img.dim(2);
  } else if (img.rank() == 2) {
    h = img.dim(0);
    w = img.dim(1);
  } else {
    throw std::invalid_argument("write_pgm: expected {1,h,w} or {h,w}");
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    double v = img[i];
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    f.put(static_cast<char>(static_cast<int>(v * 255.0 + 0.5)));
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows, const std::string& comment) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  if (!comment.empty()) f << "# " << comment << "\n";
  f << header << "\n";
  f.precision(10);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << row[i];
    f << "\n";
  }
}

void write_matrix_csv(const std::string& path, const Tensor& m, const std::string& comment) {
  if (m.rank() != 2) throw std::invalid_argument("write_matrix_csv: rank-2 expected");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  if (!comment.empty()) f << "# " << comment << "\n";
  f.precision(12);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) f << (j ? "," : "") << m.at2(i, j);
    f << "\n";
  }
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace dpgn::io
