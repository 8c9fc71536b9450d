#pragma once

#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "modnet/types.hpp"

namespace modnet::ad {

inline Eigen::Index shape_numel(const std::vector<int>& shape) {
  Eigen::Index n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major real tensor. The empty shape denotes a scalar (numel 1).
struct Tensor {
  std::vector<int> shape;
  Eigen::ArrayXd data;

  Tensor() = default;  // empty (no storage); not a valid value
  Tensor(std::vector<int> s, Eigen::ArrayXd d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.data = Eigen::ArrayXd::Zero(shape_numel(s));
    t.shape = std::move(s);
    return t;
  }
  static Tensor full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    t.data.setConstant(v);
    return t;
  }
  static Tensor scalar(double v) {
    Tensor t;
    t.data.resize(1);
    t.data[0] = v;
    return t;
  }

  bool empty() const { return data.size() == 0; }
  Eigen::Index numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool is_scalar() const { return shape.empty(); }
  double scalar_value() const { return data[0]; }

  Eigen::Map<RowMatX> matrix(Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<RowMatX>(data.data(), rows, cols);
  }
  Eigen::Map<const RowMatX> matrix(Eigen::Index rows, Eigen::Index cols) const {
    return Eigen::Map<const RowMatX>(data.data(), rows, cols);
  }

  void release() {
    data.resize(0);
    shape.clear();
  }
};

}  // namespace modnet::ad
