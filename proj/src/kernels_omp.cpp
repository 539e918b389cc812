#include "reid/kernels.hpp"
#include <cstddef>

// Each parallel loop owns disjoint output elements and accumulates in the
// same order as the serial reference, so outputs match it bit-for-bit.

namespace reid::kernels {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m * n > 4096)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m * n > 4096)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += a[t * m + i] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static) if (m * n > 4096)
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
      c[i * n + j] = s;
    }
  }
}

void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d) {
  const int o0 = d.o0(), o1 = d.o1();
#pragma omp parallel for collapse(2) schedule(static) if (o0 * o1 * d.cout > 2048)
  for (int p = 0; p < o0; ++p) {
    for (int q = 0; q < o1; ++q) {
      for (int co = 0; co < d.cout; ++co) {
        double s = bias ? bias[co] : 0.0;
        for (int u = 0; u < d.k; ++u) {
          const int i0 = p * d.stride + u - d.pad;
          if (i0 < 0 || i0 >= d.d0) continue;
          for (int v = 0; v < d.k; ++v) {
            const int i1 = q * d.stride + v - d.pad;
            if (i1 < 0 || i1 >= d.d1) continue;
            const double* xp = x + (static_cast<size_t>(i0) * d.d1 + i1) * d.cin;
            const double* wp = w + ((static_cast<size_t>(u) * d.k + v) * d.cin) * d.cout + co;
            for (int ci = 0; ci < d.cin; ++ci) s += xp[ci] * wp[static_cast<size_t>(ci) * d.cout];
          }
        }
        y[(static_cast<size_t>(p) * o1 + q) * d.cout + co] = s;
      }
    }
  }
}

void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d) {
  const int o0 = d.o0(), o1 = d.o1();
#pragma omp parallel for collapse(2) schedule(static) if (d.d0 * d.d1 * d.cin > 2048)
  for (int i0 = 0; i0 < d.d0; ++i0) {
    for (int i1 = 0; i1 < d.d1; ++i1) {
      for (int ci = 0; ci < d.cin; ++ci) {
        double s = 0.0;
        for (int u = 0; u < d.k; ++u) {
          const int num0 = i0 + d.pad - u;
          if (num0 < 0 || num0 % d.stride) continue;
          const int p = num0 / d.stride;
          if (p >= o0) continue;
          for (int v = 0; v < d.k; ++v) {
            const int num1 = i1 + d.pad - v;
            if (num1 < 0 || num1 % d.stride) continue;
            const int q = num1 / d.stride;
            if (q >= o1) continue;
            const double* gyp = gy + (static_cast<size_t>(p) * o1 + q) * d.cout;
            const double* wp = w + ((static_cast<size_t>(u) * d.k + v) * d.cin + ci) * d.cout;
            for (int co = 0; co < d.cout; ++co) s += gyp[co] * wp[co];
          }
        }
        gx[(static_cast<size_t>(i0) * d.d1 + i1) * d.cin + ci] = s;
      }
    }
  }
}

void conv2d_backward_weights(const double* gy, const double* x, double* gw, double* gb,
                             const Conv2dDims& d) {
  const int o0 = d.o0(), o1 = d.o1();
#pragma omp parallel for collapse(2) schedule(static) if (d.k * d.k * d.cin * d.cout > 256)
  for (int u = 0; u < d.k; ++u) {
    for (int v = 0; v < d.k; ++v) {
      for (int ci = 0; ci < d.cin; ++ci) {
        for (int co = 0; co < d.cout; ++co) {
          double s = 0.0;
          for (int p = 0; p < o0; ++p) {
            const int i0 = p * d.stride + u - d.pad;
            if (i0 < 0 || i0 >= d.d0) continue;
            for (int q = 0; q < o1; ++q) {
              const int i1 = q * d.stride + v - d.pad;
              if (i1 < 0 || i1 >= d.d1) continue;
              s += gy[(static_cast<size_t>(p) * o1 + q) * d.cout + co] *
                   x[(static_cast<size_t>(i0) * d.d1 + i1) * d.cin + ci];
            }
          }
          gw[((static_cast<size_t>(u) * d.k + v) * d.cin + ci) * d.cout + co] = s;
        }
      }
    }
  }
  if (gb) {
#pragma omp parallel for schedule(static) if (d.cout > 8)
    for (int co = 0; co < d.cout; ++co) {
      double s = 0.0;
      for (int p = 0; p < o0; ++p)
        for (int q = 0; q < o1; ++q) s += gy[(static_cast<size_t>(p) * o1 + q) * d.cout + co];
      gb[co] = s;
    }
  }
}

}  // namespace reid::kernels
