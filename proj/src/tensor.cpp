#include "genreg/tensor.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace genreg {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw std::invalid_argument("tensor: " + std::to_string(data_.size()) +
                                    " values do not fit shape " + genreg::shape_string(rows, cols));
    }
}

Tensor Tensor::row(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("tensor: ragged row initializer");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(r, c, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        t(i, i) = 1.0;
    }
    return t;
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw std::logic_error("tensor: item() on shape " + shape_string());
    }
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const { return genreg::shape_string(rows_, cols_); }

std::string shape_string(std::size_t rows, std::size_t cols) {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

void gemm_accumulate(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& out) {
    const std::size_t m = transpose_a ? a.cols() : a.rows();
    const std::size_t k = transpose_a ? a.rows() : a.cols();
    const std::size_t kb = transpose_b ? b.cols() : b.rows();
    const std::size_t n = transpose_b ? b.rows() : b.cols();
    if (k != kb || out.rows() != m || out.cols() != n) {
        throw std::invalid_argument("gemm: incompatible shapes " + a.shape_string() +
                                    (transpose_a ? "^T" : "") + " and " + b.shape_string() +
                                    (transpose_b ? "^T" : "") + " into " + out.shape_string());
    }
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* pc = out.values().data();

    if (!transpose_a && !transpose_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = pc + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = pa[i * k + p];
                const double* brow = pb + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    } else if (!transpose_a && transpose_b) {
        // b is n x k
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = pa + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = pb + j * k;
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    s += arow[p] * brow[p];
                }
                pc[i * n + j] += s;
            }
        }
    } else if (transpose_a && !transpose_b) {
        // a is k x m
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = pa + p * m;
            const double* brow = pb + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                double* crow = pc + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    s += pa[p * m + i] * pb[j * k + p];
                }
                pc[i * n + j] += s;
            }
        }
    }
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + a.shape_string() + " x " +
                                    b.shape_string());
    }
    Tensor out(a.rows(), b.cols());
    gemm_accumulate(a, false, b, false, out);
    return out;
}

void softmax_inplace(std::span<double> row) {
    if (row.empty()) {
        return;
    }
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : row) {
        v /= sum;
    }
}

}  // namespace genreg
