#pragma once

/// Reference computations used by the tests. They are deliberately brute force and share no code
/// with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

struct Marginals {
    Eigen::MatrixXd p_a;  ///< I x (J+1)
    Eigen::MatrixXd p_b;  ///< J x (I+1)
    double partition = 0.0;
};

/// Exact association marginals by enumerating every consistent event.
/// p(a) is proportional to prod_i beta_i(a_i) prod_{j unassociated} xi_j.
inline Marginals enumerate_marginals(const Eigen::MatrixXd& beta, const Eigen::VectorXd& xi) {
    const int I = static_cast<int>(beta.rows());
    const int J = static_cast<int>(xi.size());
    Marginals m;
    m.p_a = Eigen::MatrixXd::Zero(I, J + 1);
    m.p_b = Eigen::MatrixXd::Zero(J, I + 1);
    std::vector<int> a(static_cast<std::size_t>(I), 0);
    std::vector<int> owner(static_cast<std::size_t>(J), 0);
    double total = 0.0;
    std::function<void(int, double)> rec = [&](int i, double w) {
        if (i == I) {
            double p = w;
            for (int j = 0; j < J; ++j) {
                if (owner[static_cast<std::size_t>(j)] == 0) p *= xi(j);
            }
            total += p;
            for (int k = 0; k < I; ++k) m.p_a(k, a[static_cast<std::size_t>(k)]) += p;
            for (int j = 0; j < J; ++j) m.p_b(j, owner[static_cast<std::size_t>(j)]) += p;
            return;
        }
        for (int j = 0; j <= J; ++j) {
            if (j > 0 && owner[static_cast<std::size_t>(j - 1)] != 0) continue;
            a[static_cast<std::size_t>(i)] = j;
            if (j > 0) owner[static_cast<std::size_t>(j - 1)] = i + 1;
            rec(i + 1, w * beta(i, j));
            if (j > 0) owner[static_cast<std::size_t>(j - 1)] = 0;
        }
        a[static_cast<std::size_t>(i)] = 0;
    };
    rec(0, 1.0);
    m.p_a /= total;
    m.p_b /= total;
    m.partition = total;
    return m;
}

/// Minimum cost over all injective row->column maps of the smaller side (rows <= cols or the transpose).
inline double brute_force_assignment(const Eigen::MatrixXd& cost) {
    const Eigen::MatrixXd c = cost.rows() <= cost.cols() ? cost : Eigen::MatrixXd(cost.transpose());
    std::vector<int> cols(static_cast<std::size_t>(c.cols()));
    std::iota(cols.begin(), cols.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (Eigen::Index r = 0; r < c.rows(); ++r) s += c(r, cols[static_cast<std::size_t>(r)]);
        best = std::min(best, s);
    } while (std::next_permutation(cols.begin(), cols.end()));
    return best;
}

/// GOSPA (alpha = 2) by enumerating every partial matching of estimates to truths.
inline double gospa_brute(const std::vector<Eigen::Vector2d>& x, const std::vector<Eigen::Vector2d>& y, double c,
                          double p) {
    const std::size_t n = x.size();
    const std::size_t m = y.size();
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> match(n, -1);
    std::vector<bool> used(m, false);
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == n) {
            double s = 0.0;
            std::size_t matched = 0;
            for (std::size_t k = 0; k < n; ++k) {
                if (match[k] >= 0) {
                    s += std::pow((x[k] - y[static_cast<std::size_t>(match[k])]).norm(), p);
                    ++matched;
                }
            }
            s += std::pow(c, p) / 2.0 * static_cast<double>((n - matched) + (m - matched));
            best = std::min(best, s);
            return;
        }
        match[i] = -1;
        rec(i + 1);
        for (std::size_t j = 0; j < m; ++j) {
            if (used[j]) continue;
            used[j] = true;
            match[i] = static_cast<int>(j);
            rec(i + 1);
            used[j] = false;
        }
        match[i] = -1;
    };
    rec(0);
    return std::pow(best, 1.0 / p);
}

inline double total_variation(const Eigen::RowVectorXd& p, const Eigen::RowVectorXd& q) {
    return 0.5 * (p - q).cwiseAbs().sum();
}

/// Central finite difference of f at x along every coordinate.
inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                        double h) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double x0 = x(k);
        x(k) = x0 + h;
        const double fp = f(x);
        x(k) = x0 - h;
        const double fm = f(x);
        x(k) = x0;
        g(k) = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Central differences at h and h/2. Components where the two disagree sit within h of a
/// leaky-ReLU kink, where a finite difference does not estimate the derivative; they are flagged.
struct SmoothGradient {
    Eigen::VectorXd g;
    std::vector<bool> smooth;
    Eigen::Index excluded = 0;
};

inline SmoothGradient numeric_gradient_smooth(const std::function<double(const Eigen::VectorXd&)>& f,
                                              const Eigen::VectorXd& x, double h, double agree = 1e-6) {
    SmoothGradient out;
    out.g = numeric_gradient(f, x, h);
    const Eigen::VectorXd half = numeric_gradient(f, x, 0.5 * h);
    out.smooth.assign(static_cast<std::size_t>(x.size()), true);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (std::abs(out.g(k) - half(k)) > agree * std::max(1.0, std::abs(half(k)))) {
            out.smooth[static_cast<std::size_t>(k)] = false;
            ++out.excluded;
        }
    }
    return out;
}

}  // namespace oracle
