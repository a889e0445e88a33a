#include "dpgn/plot.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dpgn::plot {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::ofstream& f, const char type[4], const std::string& payload) {
  std::string head;
  put_u32(head, static_cast<std::uint32_t>(payload.size()));
  head.append(type, 4);
  std::string crc_input = head.substr(4) + payload;
  const auto crc = crc32(0, reinterpret_cast<const Bytef*>(crc_input.data()),
                         static_cast<uInt>(crc_input.size()));
  std::string tail;
  put_u32(tail, static_cast<std::uint32_t>(crc));
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  f.write(tail.data(), static_cast<std::streamsize>(tail.size()));
}

// 5x7 glyphs for the characters plots need; each row is 5 bits.
const char* glyph(char c) {
  switch (c) {
    case '0': return "\x0e\x11\x13\x15\x19\x11\x0e";
    case '1': return "\x04\x0c\x04\x04\x04\x04\x0e";
    case '2': return "\x0e\x11\x01\x06\x08\x10\x1f";
    case '3': return "\x0e\x11\x01\x06\x01\x11\x0e";
    case '4': return "\x02\x06\x0a\x12\x1f\x02\x02";
    case '5': return "\x1f\x10\x1e\x01\x01\x11\x0e";
    case '6': return "\x0e\x10\x1e\x11\x11\x11\x0e";
    case '7': return "\x1f\x01\x02\x04\x08\x08\x08";
    case '8': return "\x0e\x11\x11\x0e\x11\x11\x0e";
    case '9': return "\x0e\x11\x11\x0f\x01\x01\x0e";
    case '.': return "\x00\x00\x00\x00\x00\x0c\x0c";
    case '-': return "\x00\x00\x00\x1f\x00\x00\x00";
    case '%': return "\x19\x1a\x02\x04\x08\x0b\x13";
    case '_': return "\x00\x00\x00\x00\x00\x00\x1f";
    default: return nullptr;
  }
}

struct Canvas {
  std::size_t w, h;
  std::vector<unsigned char> rgb;
  Canvas(std::size_t width, std::size_t height) : w(width), h(height), rgb(w * h * 3, 255) {}
  void set(std::ptrdiff_t x, std::ptrdiff_t y, unsigned char r, unsigned char g,
           unsigned char b) {
    if (x < 0 || y < 0 || x >= static_cast<std::ptrdiff_t>(w) ||
        y >= static_cast<std::ptrdiff_t>(h))
      return;
    const std::size_t i = (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3;
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
  void line(double x0, double y0, double x1, double y1, unsigned char r, unsigned char g,
            unsigned char b) {
    const double steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1.0;
    for (double s = 0.0; s <= steps; ++s) {
      const double t = s / steps;
      set(static_cast<std::ptrdiff_t>(std::lround(x0 + t * (x1 - x0))),
          static_cast<std::ptrdiff_t>(std::lround(y0 + t * (y1 - y0))), r, g, b);
    }
  }
  void text(std::ptrdiff_t x, std::ptrdiff_t y, const std::string& s) {
    for (char c : s) {
      if (const char* g = glyph(c)) {
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (g[row] & (1 << (4 - col))) set(x + col, y + row, 40, 40, 40);
      }
      x += 6;
    }
  }
};

std::string format_tick(double v) {
  std::ostringstream ss;
  if (std::abs(v) >= 100.0 || v == std::floor(v))
    ss << static_cast<long long>(std::llround(v));
  else
    ss.precision(3), ss << v;
  return ss.str();
}

}  // namespace

void write_png_rgb(const std::string& path, const std::vector<unsigned char>& rgb,
                   std::size_t width, std::size_t height) {
  if (rgb.size() != width * height * 3) throw std::invalid_argument("write_png_rgb: buffer size");
  // Filtered scanlines (filter 0), zlib-compressed.
  std::string raw;
  raw.reserve(height * (1 + width * 3));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(rgb.data() + y * width * 3), width * 3);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::string comp(comp_len, '\0');
  if (compress(reinterpret_cast<Bytef*>(comp.data()), &comp_len,
               reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size())) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  comp.resize(comp_len);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(f, "IHDR", ihdr);
  put_chunk(f, "IDAT", comp);
  put_chunk(f, "IEND", "");
}

void line_plot(const std::string& path, const std::vector<Series>& series,
               const std::string& x_label, const std::string& y_label) {
  (void)x_label;
  (void)y_label;
  const std::size_t W = 640, H = 420, ml = 64, mr = 24, mt = 24, mb = 48;
  Canvas c(W, H);
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  c.line(ml, mt, ml, H - mb, 0, 0, 0);
  c.line(ml, H - mb, W - mr, H - mb, 0, 0, 0);
  for (int tick = 0; tick <= 4; ++tick) {
    const double ty = ymin + (ymax - ymin) * tick / 4.0;
    c.line(ml - 4, py(ty), ml, py(ty), 0, 0, 0);
    c.text(4, static_cast<std::ptrdiff_t>(py(ty)) - 3, format_tick(ty));
    const double tx = xmin + (xmax - xmin) * tick / 4.0;
    c.line(px(tx), H - mb, px(tx), H - mb + 4, 0, 0, 0);
    c.text(static_cast<std::ptrdiff_t>(px(tx)) - 8, H - mb + 8, format_tick(tx));
  }

  const unsigned char colors[4][3] = {{30, 80, 200}, {200, 60, 40}, {30, 150, 60}, {150, 60, 180}};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& col = colors[s % 4];
    for (std::size_t i = 0; i + 1 < series[s].x.size(); ++i)
      c.line(px(series[s].x[i]), py(series[s].y[i]), px(series[s].x[i + 1]),
             py(series[s].y[i + 1]), col[0], col[1], col[2]);
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      for (int dx = -2; dx <= 2; ++dx)
        for (int dy = -2; dy <= 2; ++dy)
          if (dx * dx + dy * dy <= 4)
            c.set(static_cast<std::ptrdiff_t>(px(series[s].x[i])) + dx,
                  static_cast<std::ptrdiff_t>(py(series[s].y[i])) + dy, col[0], col[1], col[2]);
  }
  write_png_rgb(path, c.rgb, W, H);
}

void heatmap(const std::string& path, const Tensor& m, std::size_t cell) {
  if (m.rank() != 2) throw std::invalid_argument("heatmap: rank-2 expected");
  double lo = m[0], hi = m[0];
  for (std::size_t i = 0; i < m.size(); ++i) {
    lo = std::min(lo, m[i]);
    hi = std::max(hi, m[i]);
  }
  if (hi <= lo) hi = lo + 1.0;
  const std::size_t w = m.dim(1) * cell, h = m.dim(0) * cell;
  std::vector<unsigned char> rgb(w * h * 3);
  for (std::size_t r = 0; r < m.dim(0); ++r)
    for (std::size_t cc = 0; cc < m.dim(1); ++cc) {
      const double v = (m.at2(r, cc) - lo) / (hi - lo);
      // Dark = high score.
      const auto shade = static_cast<unsigned char>(std::lround(255.0 * (1.0 - v)));
      for (std::size_t y = r * cell; y < (r + 1) * cell; ++y)
        for (std::size_t x = cc * cell; x < (cc + 1) * cell; ++x) {
          const std::size_t i = (y * w + x) * 3;
          rgb[i] = shade;
          rgb[i + 1] = shade;
          rgb[i + 2] = static_cast<unsigned char>(std::min(255, shade + 30));
        }
    }
  write_png_rgb(path, rgb, w, h);
}

}  // namespace dpgn::plot
