#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace aflab {

// Every buffer starts on a 64-byte boundary. Vectorized reductions peel up to the
// first aligned element, so a heap-dependent start would make sums (and whole
// training runs) depend on allocation history.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

// Dense row-major matrix of doubles. Value semantics.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0);
  Tensor(int rows, int cols, std::vector<double> data);

  static Tensor FromRows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Zeros(int rows, int cols) { return Tensor(rows, cols, 0.0); }
  static Tensor ZerosLike(const Tensor& t) { return Tensor(t.rows_, t.cols_, 0.0); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[Index(r, c)]; }
  double operator()(int r, int c) const { return data_[Index(r, c)]; }
  double& at(std::size_t i) { return data_[i]; }
  double at(std::size_t i) const { return data_[i]; }

  std::span<double> row(int r) { return {data_.data() + Index(r, 0), static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + Index(r, 0), static_cast<std::size_t>(cols_)};
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  void Fill(double v);
  // this += other (same shape).
  void AddInPlace(const Tensor& other);
  void Scale(double s);
  bool AllFinite() const;
  bool SameShape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string ShapeString() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t Index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
  }

  int rows_ = 0;
  int cols_ = 0;
  AlignedVector data_;
};

// Boolean row-major matrix, used for attention masks.
class BoolMatrix {
 public:
  BoolMatrix() = default;
  BoolMatrix(int rows, int cols, bool fill = false)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill ? 1 : 0) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c] != 0; }
  void Set(int r, int c, bool v) { data_[static_cast<std::size_t>(r) * cols_ + c] = v ? 1 : 0; }
  friend bool operator==(const BoolMatrix&, const BoolMatrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<unsigned char> data_;
};

// A named trainable (or frozen) value with its gradient accumulator.
struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::ZerosLike(value)), trainable(train) {}

  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void ZeroGrad() { grad.Fill(0.0); }
};

}  // namespace aflab
