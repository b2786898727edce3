#include "aflab/compute/tensor.h"

#include <cmath>

#include "aflab/errors.h"

namespace aflab {

Tensor::Tensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
  if (rows < 0 || cols < 0) throw DimensionError("Tensor: negative shape");
}

Tensor::Tensor(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(data.begin(), data.end()) {
  if (rows < 0 || cols < 0) throw DimensionError("Tensor: negative shape");
  if (data_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw DimensionError("Tensor: data length " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor Tensor::FromRows(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(r) * c);
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) throw DimensionError("Tensor::FromRows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(data));
}

void Tensor::Fill(double v) {
  for (double& x : data_) x = v;
}

void Tensor::AddInPlace(const Tensor& other) {
  if (!SameShape(other)) throw DimensionError("AddInPlace: " + ShapeString() + " vs " + other.ShapeString());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::Scale(double s) {
  for (double& x : data_) x *= s;
}

bool Tensor::AllFinite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::ShapeString() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

}  // namespace aflab
