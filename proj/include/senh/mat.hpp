// Dense row-major F x T grids used for spectrogram-shaped data.
#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace senh {

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatF = Matrix<double>;
using MatC = Matrix<std::complex<double>>;

inline void require_same_shape(const char* what, std::size_t r1,
                               std::size_t c1, std::size_t r2,
                               std::size_t c2) {
  if (r1 != r2 || c1 != c2)
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                std::to_string(r1) + "x" + std::to_string(c1) +
                                " vs " + std::to_string(r2) + "x" +
                                std::to_string(c2) + ")");
}

template <typename A, typename B>
void require_same_shape(const char* what, const Matrix<A>& a,
                        const Matrix<B>& b) {
  require_same_shape(what, a.rows(), a.cols(), b.rows(), b.cols());
}

}  // namespace senh
