#pragma once

#include <string>
#include <vector>

#include "dpgn/tensor.hpp"

// Minimal raster plots so sweep results render without external tooling.
// Plots are derived artifacts; the CSVs next to them are the real outputs.
namespace dpgn::plot {

struct Series {
  std::vector<double> x, y;
};

void write_png_rgb(const std::string& path, const std::vector<unsigned char>& rgb,
                   std::size_t width, std::size_t height);

// Line plot with axes, tick labels, and one polyline per series.
void line_plot(const std::string& path, const std::vector<Series>& series,
               const std::string& x_label, const std::string& y_label);

// Grayscale heatmap (dark = high), scaled up by `cell` pixels per entry.
void heatmap(const std::string& path, const Tensor& m, std::size_t cell = 24);

}  // namespace dpgn::plot
