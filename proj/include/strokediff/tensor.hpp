#pragma once

#include <Eigen/Dense>

namespace strokediff {

// Row-major so that a row is one batch item or one sequence element.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace strokediff
