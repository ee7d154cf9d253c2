#pragma once

#include <Eigen/Dense>

#include <vector>

namespace nebp {

/// Minimum-cost rectangular assignment (Hungarian method, O(n^2 m)).
///
/// Returns, for every row, the assigned column or -1. Every row of the smaller side is assigned;
/// costs must be finite.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

/// Total cost of a row->column assignment as returned by solve_assignment.
double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col);

}  // namespace nebp
