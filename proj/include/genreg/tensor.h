#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace genreg {

/// Dense row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor row(std::initializer_list<double> values);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    std::array<std::size_t, 2> shape() const { return {rows_, cols_}; }
    bool same_shape(const Tensor& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row_span(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }
    double item() const;

    void fill(double v);
    bool all_finite() const;

    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::string shape_string(std::size_t rows, std::size_t cols);

// Plain (non-recording) kernels shared by the graph ops.
void gemm_accumulate(const Tensor& a, bool transpose_a, const Tensor& b, bool transpose_b, Tensor& out);
Tensor matmul_plain(const Tensor& a, const Tensor& b);
void softmax_inplace(std::span<double> row);

}  // namespace genreg
