#pragma once

#include <string>
#include <vector>

#include "dpgn/tensor.hpp"

namespace dpgn::io {

// Binary PGM (P5), 8-bit. Pixels are mapped to [0,1] on read.
Tensor read_pgm(const std::string& path);                     // -> {1,h,w}
void write_pgm(const std::string& path, const Tensor& img);   // {1,h,w} or {h,w}

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// CSV with an optional leading "# key=value" comment line.
void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows, const std::string& comment = "");
void write_matrix_csv(const std::string& path, const Tensor& m, const std::string& comment = "");

std::vector<std::string> split_ws(const std::string& line);

}  // namespace dpgn::io
