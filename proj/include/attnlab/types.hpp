#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace attnlab {

// Row-major so that flattening a matrix walks it in declaration order
// (matches the checkpoint layout).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using TokenId = std::int32_t;
using LabelId = std::int32_t;

// The single random stream of a run. Consumers draw from it in a fixed order.
using Rng = std::mt19937_64;

}  // namespace attnlab
