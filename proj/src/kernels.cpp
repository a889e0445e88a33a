#include "dpgn/kernels.hpp"

namespace dpgn::kern {

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  const std::size_t work = n * k * m;
#pragma omp parallel for if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    double* ci = c + i * m;
    if (!accumulate)
      for (std::size_t j = 0; j < m; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                 std::size_t k) {
  const std::size_t work = n * m * k;
#pragma omp parallel for if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const double* ai = a + i * m;
    double* ci = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double* bj = b + j * m;
      double s = 0.0;
      for (std::size_t p = 0; p < m; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m) {
  const std::size_t work = n * k * m;
#pragma omp parallel for if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
    double* cp = c + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = a[i * k + p];
      const double* bi = b + i * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

void pairwise_sqdiff(const double* v, double* d, std::size_t t, std::size_t f) {
  const std::size_t work = t * t * f;
#pragma omp parallel for collapse(2) if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(t); ++i) {
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(t); ++j) {
      const double* vi = v + i * f;
      const double* vj = v + j * f;
      double* dr = d + (i * t + j) * f;
      for (std::size_t q = 0; q < f; ++q) {
        const double diff = vi[q] - vj[q];
        dr[q] = diff * diff;
      }
    }
  }
}

void pairwise_sqdiff_back(const double* v, const double* g, double* dv, std::size_t t,
                          std::size_t f) {
  // Parallel over rows i: row i receives contributions from pairs (i,j) and (j,i).
  const std::size_t work = t * t * f;
#pragma omp parallel for if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(t); ++i) {
    double* dvi = dv + i * f;
    const double* vi = v + i * f;
    for (std::size_t j = 0; j < t; ++j) {
      const double* vj = v + j * f;
      const double* gij = g + (i * t + j) * f;
      const double* gji = g + (j * t + i) * f;
      for (std::size_t q = 0; q < f; ++q) {
        const double diff = vi[q] - vj[q];
        dvi[q] += 2.0 * diff * (gij[q] + gji[q]);
      }
    }
  }
}

void conv2d_3x3(const double* x, const double* w, const double* bias, double* y, std::size_t b,
                std::size_t cin, std::size_t h, std::size_t wd, std::size_t cout) {
  const std::size_t work = b * cout * h * wd * cin;
#pragma omp parallel for collapse(2) if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(b); ++n) {
    for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(cout); ++oc) {
      double* yp = y + (n * cout + oc) * h * wd;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cidx = 0; cidx < wd; ++cidx) {
          double s = bias ? bias[oc] : 0.0;
          for (std::size_t ic = 0; ic < cin; ++ic) {
            const double* xp = x + (n * cin + ic) * h * wd;
            const double* wp = w + ((oc * cin + ic) * 9);
            for (int dr = -1; dr <= 1; ++dr) {
              const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + dr;
              if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
              for (int dc = -1; dc <= 1; ++dc) {
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(cidx) + dc;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(wd)) continue;
                s += wp[(dr + 1) * 3 + (dc + 1)] * xp[rr * wd + cc];
              }
            }
          }
          yp[r * wd + cidx] = s;
        }
    }
  }
}

void conv2d_3x3_back(const double* x, const double* w, const double* gy, double* dx, double* dw,
                     double* db, std::size_t b, std::size_t cin, std::size_t h, std::size_t wd,
                     std::size_t cout) {
  // dx: parallel over (n, ic); dw/db accumulated serially afterwards to keep
  // the accumulation deterministic.
  const std::size_t work = b * cout * h * wd * cin;
#pragma omp parallel for collapse(2) if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(b); ++n) {
    for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(cin); ++ic) {
      double* dxp = dx + (n * cin + ic) * h * wd;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cidx = 0; cidx < wd; ++cidx) {
          double s = 0.0;
          for (std::size_t oc = 0; oc < cout; ++oc) {
            const double* gp = gy + (n * cout + oc) * h * wd;
            const double* wp = w + ((oc * cin + ic) * 9);
            for (int dr = -1; dr <= 1; ++dr) {
              const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) - dr;
              if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
              for (int dc = -1; dc <= 1; ++dc) {
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(cidx) - dc;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(wd)) continue;
                s += wp[(dr + 1) * 3 + (dc + 1)] * gp[rr * wd + cc];
              }
            }
          }
          dxp[r * wd + cidx] += s;
        }
    }
  }
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t oc = 0; oc < cout; ++oc) {
      const double* gp = gy + (n * cout + oc) * h * wd;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cidx = 0; cidx < wd; ++cidx) {
          const double g = gp[r * wd + cidx];
          db[oc] += g;
          for (std::size_t ic = 0; ic < cin; ++ic) {
            const double* xp = x + (n * cin + ic) * h * wd;
            double* wp = dw + ((oc * cin + ic) * 9);
            for (int dr = -1; dr <= 1; ++dr) {
              const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + dr;
              if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(h)) continue;
              for (int dc = -1; dc <= 1; ++dc) {
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(cidx) + dc;
                if (cc < 0 || cc >= static_cast<std::ptrdiff_t>(wd)) continue;
                wp[(dr + 1) * 3 + (dc + 1)] += g * xp[rr * wd + cc];
              }
            }
          }
        }
    }
}

void maxpool2(const double* x, double* y, int* arg, std::size_t n, std::size_t h, std::size_t w) {
  const std::size_t oh = h / 2, ow = w / 2;
  const std::size_t work = n * oh * ow;
#pragma omp parallel for if (work > kMinWork) schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n); ++p) {
    const double* xp = x + p * h * w;
    double* yp = y + p * oh * ow;
    int* ap = arg + p * oh * ow;
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        std::size_t best = (2 * r) * w + 2 * c;
        double bv = xp[best];
        for (int dr = 0; dr < 2; ++dr)
          for (int dc = 0; dc < 2; ++dc) {
            const std::size_t idx = (2 * r + dr) * w + (2 * c + dc);
            if (xp[idx] > bv) {
              bv = xp[idx];
              best = idx;
            }
          }
        yp[r * ow + c] = bv;
        ap[r * ow + c] = static_cast<int>(best);
      }
  }
}

void maxpool2_back(const double* gy, const int* arg, double* dx, std::size_t n, std::size_t h,
                   std::size_t w) {
  const std::size_t oh = h / 2, ow = w / 2;
#pragma omp parallel for if (n * oh * ow > kMinWork) schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n); ++p) {
    const double* gp = gy + p * oh * ow;
    const int* ap = arg + p * oh * ow;
    double* dxp = dx + p * h * w;
    for (std::size_t i = 0; i < oh * ow; ++i) dxp[ap[i]] += gp[i];
  }
}

void col_mean_var(const double* x, std::size_t n, std::size_t c, double* mean, double* var) {
#pragma omp parallel for if (n * c > kMinWork) schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(c); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i * c + j];
    const double mu = s / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i * c + j] - mu;
      v += d * d;
    }
    mean[j] = mu;
    var[j] = v / static_cast<double>(n);
  }
}

}  // namespace dpgn::kern
