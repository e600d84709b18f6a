#include "tensor.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace armor {

using emat  = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using map_t = Eigen::Map<emat>;
using cmap_t = Eigen::Map<const emat>;

static cmap_t cmap(const tensor & t) { return cmap_t(t.data(), t.rows, t.cols); }
static map_t  mmap(tensor & t) { return map_t(t.data(), t.rows, t.cols); }

bool tensor::all_finite() const {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void t_matmul(const tensor & a, const tensor & b, tensor & out) {
    if (a.cols != b.rows) fail(errc::invalid_argument, "matmul: inner dims mismatch");
    out = tensor(a.rows, b.cols);
    mmap(out).noalias() = cmap(a) * cmap(b);
}

void t_matmul_acc(const tensor & a, const tensor & b, tensor & out) {
    if (a.cols != b.rows || out.rows != a.rows || out.cols != b.cols)
        fail(errc::invalid_argument, "matmul_acc: dims mismatch");
    mmap(out).noalias() += cmap(a) * cmap(b);
}

void t_matmul_tn_acc(const tensor & a, const tensor & b, tensor & out) {
    if (a.rows != b.rows || out.rows != a.cols || out.cols != b.cols)
        fail(errc::invalid_argument, "matmul_tn_acc: dims mismatch");
    mmap(out).noalias() += cmap(a).transpose() * cmap(b);
}

void t_matmul_nt_acc(const tensor & a, const tensor & b, tensor & out) {
    if (a.cols != b.cols || out.rows != a.rows || out.cols != b.rows)
        fail(errc::invalid_argument, "matmul_nt_acc: dims mismatch");
    mmap(out).noalias() += cmap(a) * cmap(b).transpose();
}

void t_add(const tensor & a, const tensor & b, tensor & out) {
    if (!a.same_shape(b)) fail(errc::invalid_argument, "add: shape mismatch");
    out = tensor(a.rows, a.cols);
    for (int64_t i = 0; i < a.numel(); ++i) out.v[(size_t) i] = a.v[(size_t) i] + b.v[(size_t) i];
}

void t_axpy(double alpha, const tensor & x, tensor & out) {
    if (!x.same_shape(out)) fail(errc::invalid_argument, "axpy: shape mismatch");
    for (int64_t i = 0; i < x.numel(); ++i) out.v[(size_t) i] += alpha * x.v[(size_t) i];
}

double t_dot(const tensor & a, const tensor & b) {
    if (a.numel() != b.numel()) fail(errc::invalid_argument, "dot: size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.v[(size_t) i] * b.v[(size_t) i];
    return s;
}

double t_sumsq(const tensor & a) {
    double s = 0.0;
    for (double x : a.v) s += x * x;
    return s;
}

void t_softmax_row(double * row, int64_t ncols) {
    double mx = row[0];
    for (int64_t j = 1; j < ncols; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < ncols; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
    }
    double inv = 1.0 / z;
    for (int64_t j = 0; j < ncols; ++j) row[j] *= inv;
}

}  // namespace armor
