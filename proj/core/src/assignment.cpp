#include "nebp/assignment.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace nebp {

namespace {

// Potentials-based Hungarian algorithm for rows <= cols. 1-based internally.
std::vector<int> solve_wide(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    }
    return row_to_col;
}

}  // namespace

std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    if (!cost.allFinite()) throw std::invalid_argument("assignment costs must be finite");
    if (cost.rows() == 0) return {};
    if (cost.cols() == 0) return std::vector<int>(static_cast<std::size_t>(cost.rows()), -1);
    if (cost.rows() <= cost.cols()) return solve_wide(cost);

    const Eigen::MatrixXd transposed = cost.transpose();
    const std::vector<int> col_to_row = solve_wide(transposed);
    std::vector<int> row_to_col(static_cast<std::size_t>(cost.rows()), -1);
    for (std::size_t c = 0; c < col_to_row.size(); ++c) {
        if (col_to_row[c] >= 0) row_to_col[static_cast<std::size_t>(col_to_row[c])] = static_cast<int>(c);
    }
    return row_to_col;
}

double assignment_cost(const Eigen::MatrixXd& cost, const std::vector<int>& row_to_col) {
    double total = 0.0;
    for (std::size_t r = 0; r < row_to_col.size(); ++r) {
        if (row_to_col[r] >= 0) total += cost(static_cast<Eigen::Index>(r), row_to_col[r]);
    }
    return total;
}

}  // namespace nebp
