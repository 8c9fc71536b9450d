#pragma once

#include <Eigen/Dense>

namespace modnet {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Row-major dense matrix; all flattened tensor data in this project is
// row-major, so matrix views over it must use this layout.
using RowMatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace modnet
