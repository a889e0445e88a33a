#pragma once

#include "dpgn/tensor.hpp"

// Hot inner loops, shared by the autodiff ops. Each kernel is data-parallel
// over independent output elements and carries an OpenMP pragma gated on the
// amount of work, so small episode graphs stay on one thread.
namespace dpgn::kern {

// Work threshold below which the pragmas stay serial.
inline constexpr std::size_t kMinWork = 1 << 13;

// C = A(n,k) * B(k,m), or C += ... when accumulate.
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
// C += A(n,m) * B(k,m)^T  -> (n,k)
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                 std::size_t k);
// C += A(n,k)^T * B(n,m)  -> (k,m)
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m);

// D[(i*t+j), f] = (V[i,f] - V[j,f])^2 for V (t,f).
void pairwise_sqdiff(const double* v, double* d, std::size_t t, std::size_t f);
// dV accumulation for the above given upstream grad G (t*t, f).
void pairwise_sqdiff_back(const double* v, const double* g, double* dv, std::size_t t,
                          std::size_t f);

// 3x3 same-padding convolution, NCHW.
void conv2d_3x3(const double* x, const double* w, const double* bias, double* y, std::size_t b,
                std::size_t cin, std::size_t h, std::size_t wd, std::size_t cout);
void conv2d_3x3_back(const double* x, const double* w, const double* gy, double* dx, double* dw,
                     double* db, std::size_t b, std::size_t cin, std::size_t h, std::size_t wd,
                     std::size_t cout);

// 2x2/stride-2 max pooling; argmax indices cached for the backward pass.
void maxpool2(const double* x, double* y, int* arg, std::size_t n, std::size_t h, std::size_t w);
void maxpool2_back(const double* gy, const int* arg, double* dx, std::size_t n, std::size_t h,
                   std::size_t w);

// Column mean/variance (biased) over rows of X (n,c).
void col_mean_var(const double* x, std::size_t n, std::size_t c, double* mean, double* var);

}  // namespace dpgn::kern
