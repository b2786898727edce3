#pragma once

#include <Eigen/Core>

#include "aflab/compute/tensor.h"

namespace aflab::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap Map(Tensor& t) { return MatrixMap(t.data().data(), t.rows(), t.cols()); }
inline ConstMatrixMap Map(const Tensor& t) { return ConstMatrixMap(t.data().data(), t.rows(), t.cols()); }

}  // namespace aflab::detail
