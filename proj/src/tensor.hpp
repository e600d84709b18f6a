#pragma once

#include "common.hpp"

#include <cstdint>
#include <vector>

namespace armor {

// dense rank-2 tensor, float64, row-major. scalars are 1x1, vectors 1xn.
struct tensor {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> v;

    tensor() = default;
    tensor(int64_t r, int64_t c, double fill = 0.0) : rows(r), cols(c), v((size_t) (r * c), fill) {
        if (r < 0 || c < 0) fail(errc::invalid_argument, "tensor: negative dims");
    }

    static tensor scalar(double x) {
        tensor t(1, 1);
        t.v[0] = x;
        return t;
    }

    int64_t  numel() const { return rows * cols; }
    double * data() { return v.data(); }
    const double * data() const { return v.data(); }

    double &       at(int64_t r, int64_t c) { return v[(size_t) (r * cols + c)]; }
    const double & at(int64_t r, int64_t c) const { return v[(size_t) (r * cols + c)]; }

    double item() const {
        if (numel() != 1) fail(errc::invalid_argument, "tensor: item() on non-scalar");
        return v[0];
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool same_shape(const tensor & o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const;
};

// out = a * b
void t_matmul(const tensor & a, const tensor & b, tensor & out);
// out += a * b
void t_matmul_acc(const tensor & a, const tensor & b, tensor & out);
// out += a^T * b
void t_matmul_tn_acc(const tensor & a, const tensor & b, tensor & out);
// out += a * b^T
void t_matmul_nt_acc(const tensor & a, const tensor & b, tensor & out);

void t_add(const tensor & a, const tensor & b, tensor & out);      // elementwise
void t_axpy(double alpha, const tensor & x, tensor & out);         // out += alpha*x

double t_dot(const tensor & a, const tensor & b);
double t_sumsq(const tensor & a);

// in-place row softmax over the first `ncols` entries of each row (rest untouched)
void t_softmax_row(double * row, int64_t ncols);

}  // namespace armor
