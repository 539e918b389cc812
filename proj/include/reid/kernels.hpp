#pragma once

// Dense compute kernels. The default entry points are OpenMP-parallel over
// output elements with a serial inner accumulation, so results are
// bit-identical to the kernels::serial reference for any thread count.
// The serial versions are kept for testing and for the benchmark target.

namespace reid::kernels {

struct Conv2dDims {
  int d0 = 0, d1 = 0;   // input spatial dims
  int cin = 0, cout = 0;
  int k = 1;            // square kernel
  int stride = 1;
  int pad = 0;
  int o0() const { return (d0 + 2 * pad - k) / stride + 1; }
  int o1() const { return (d1 + 2 * pad - k) / stride + 1; }
};

// C[m,n] = A[m,k] * B[k,n]
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
// C[m,n] = A^T * B with A stored [k,m]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
// C[m,n] = A * B^T with B stored [n,k]
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);

// x: [d0,d1,cin] row-major, w: [k,k,cin,cout], bias: [cout] (may be null),
// y: [o0,o1,cout]
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);
// gx accumulates nothing: it is overwritten.
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
// gw/gb are overwritten. gb may be null.
void conv2d_backward_weights(const double* gy, const double* x, double* gw, double* gb,
                             const Conv2dDims& d);

namespace serial {
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);
void conv2d_forward(const double* x, const double* w, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* w, double* gx, const Conv2dDims& d);
void conv2d_backward_weights(const double* gy, const double* x, double* gw, double* gb,
                             const Conv2dDims& d);
}  // namespace serial

}  // namespace reid::kernels
