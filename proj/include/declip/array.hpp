#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace declip {

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN.
class Array {
 public:
  Array() = default;
  Array(int rows, int cols, double fill = 0.0) : rows_(rows), cols_(cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Array: negative shape");
    data_.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), fill);
  }

  static Array scalar(double v) {
    Array a(1, 1);
    a.data_[0] = v;
    return a;
  }

  static Array row(std::vector<double> v) {
    Array a;
    a.rows_ = 1;
    a.cols_ = static_cast<int>(v.size());
    a.data_ = std::move(v);
    return a;
  }

  static Array column(std::vector<double> v) {
    Array a;
    a.rows_ = static_cast<int>(v.size());
    a.cols_ = 1;
    a.data_ = std::move(v);
    return a;
  }

  static Array from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Array(0, 0);
    Array a(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
    for (int i = 0; i < a.rows_; ++i) {
      if (static_cast<int>(rows[i].size()) != a.cols_)
        throw std::invalid_argument("Array::from_rows: ragged rows");
      for (int j = 0; j < a.cols_; ++j) a.at(i, j) = rows[i][j];
    }
    return a;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Array& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  double scalar_value() const {
    if (rows_ != 1 || cols_ != 1)
      throw std::logic_error("Array: scalar_value on shape " + shape_str());
    return data_[0];
  }

  void fill(double v) { data_.assign(data_.size(), v); }

  std::vector<double> row_vector(int r) const {
    return std::vector<double>(data_.begin() + static_cast<size_t>(r) * cols_,
                               data_.begin() + static_cast<size_t>(r + 1) * cols_);
  }

  void set_row(int r, const std::vector<double>& v) {
    if (static_cast<int>(v.size()) != cols_)
      throw std::invalid_argument("Array::set_row: length " + std::to_string(v.size()) +
                                  " into shape " + shape_str());
    for (int j = 0; j < cols_; ++j) at(r, j) = v[j];
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace declip
