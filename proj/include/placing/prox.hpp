#pragma once

// Proximal operators for the l1 and row-wise l1/l-infinity penalties of the
// shared-sparsity model.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace placing::prox {

inline double soft_threshold(double v, double t) {
    if (v > t)
        return v - t;
    if (v < -t)
        return v + t;
    return 0.0;
}

/// argmin_x 1/2 |x - v|^2 + t |x|_1
template <class Derived> Eigen::VectorXd l1(const Eigen::MatrixBase<Derived> &v, double t) {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[i] = soft_threshold(v[i], t);
    return out;
}

/// Euclidean projection onto {x : |x|_1 <= radius} (sort-based).
inline Eigen::VectorXd project_l1_ball(const Eigen::VectorXd &v, double radius) {
    if (radius <= 0.0)
        return Eigen::VectorXd::Zero(v.size());
    if (v.lpNorm<1>() <= radius)
        return v;
    std::vector<double> u(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        u[i] = std::abs(v[i]);
    std::sort(u.begin(), u.end(), std::greater<>());
    // theta is the threshold of the last sorted index with u[k] > t.
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - radius) / static_cast<double>(k + 1);
        if (u[k] > t)
            theta = t;
        else
            break;
    }
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[i] = soft_threshold(v[i], theta);
    return out;
}

/// argmin_x 1/2 |x - v|^2 + t |x|_inf, via Moreau: v - P_{l1 ball of radius t}(v).
inline Eigen::VectorXd linf(const Eigen::VectorXd &v, double t) { return v - project_l1_ball(v, t); }

/// Row-wise prox of t * sum_j max_i |M(j, i)|: rows are features, columns tasks.
inline Eigen::MatrixXd l1_linf_rows(const Eigen::MatrixXd &m, double t) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.rows(); ++j)
        out.row(j) = linf(m.row(j).transpose(), t).transpose();
    return out;
}

/// sum_j max_i |M(j, i)|
inline double l1_linf_norm(const Eigen::MatrixXd &m) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.rows(); ++j)
        s += m.row(j).cwiseAbs().maxCoeff();
    return s;
}

/// Euclidean projection onto {u : |u|_inf <= box, |u|_1 <= radius}.
inline Eigen::VectorXd project_box_l1(const Eigen::VectorXd &v, double box, double radius) {
    const Eigen::Index n = v.size();
    if (box <= 0.0 || radius <= 0.0)
        return Eigen::VectorXd::Zero(n);
    auto mass = [&](double theta) {
        double m = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            m += std::clamp(std::abs(v[i]) - theta, 0.0, box);
        return m;
    };
    double theta = 0.0;
    if (mass(0.0) > radius) {
        // mass() is piecewise linear and non-increasing in theta with kinks at
        // |v_i| and |v_i| - box; find the bracketing kinks and interpolate.
        std::vector<double> knots{0.0};
        for (Eigen::Index i = 0; i < n; ++i) {
            knots.push_back(std::abs(v[i]));
            knots.push_back(std::max(0.0, std::abs(v[i]) - box));
        }
        std::sort(knots.begin(), knots.end());
        knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
        std::size_t k = 1;
        while (k < knots.size() && mass(knots[k]) > radius)
            ++k;
        const double a = knots[k - 1], b = knots[k], ma = mass(a), mb = mass(b);
        theta = ma == mb ? a : a + (ma - radius) * (b - a) / (ma - mb);
    }
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i)
        out[i] = std::copysign(std::clamp(std::abs(v[i]) - theta, 0.0, box), v[i]);
    return out;
}

/// Cheapest split of a row v = s + b under ls |s|_1 + lb |b|_inf: b = clip(v, -t, t)
/// where t is the (floor(lb / ls) + 1)-th largest magnitude (0 past the end).
inline double split_threshold(const Eigen::VectorXd &v, double ls, double lb) {
    if (!(ls > 0.0))
        return 0.0;
    std::vector<double> a(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        a[static_cast<std::size_t>(i)] = std::abs(v[i]);
    std::sort(a.begin(), a.end(), std::greater<>());
    const double k = std::floor(lb / ls);
    return k < static_cast<double>(a.size()) ? a[static_cast<std::size_t>(k)] : 0.0;
}

inline void split_row(const Eigen::VectorXd &v, double ls, double lb, Eigen::VectorXd &s, Eigen::VectorXd &b) {
    const double t = split_threshold(v, ls, lb);
    b = v.cwiseMax(-t).cwiseMin(t);
    s = v - b;
}

/// min over splits W = S + B of ls |S|_{1,1} + lb |B|_{1,inf}, rows are features.
inline double split_penalty(const Eigen::MatrixXd &w, double ls, double lb) {
    double f = 0.0;
    Eigen::VectorXd s, b;
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
        split_row(w.row(j).transpose(), ls, lb, s, b);
        f += ls * s.lpNorm<1>() + lb * b.cwiseAbs().maxCoeff();
    }
    return f;
}

/// Row-wise prox of split_penalty scaled by t: by Moreau, v minus the projection
/// onto the dual ball {|u|_inf <= t ls, |u|_1 <= t lb}.
inline Eigen::MatrixXd split_penalty_rows(const Eigen::MatrixXd &m, double ls, double lb, double t) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
        const Eigen::VectorXd v = m.row(j).transpose();
        out.row(j) = (v - project_box_l1(v, t * ls, t * lb)).transpose();
    }
    return out;
}

} // namespace placing::prox
