#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace ivcate {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ivcate
