#pragma once

// Linear max-margin placement classifiers. Besides the plain per-task and pooled
// SVMs there is a multi-task model w_i = S_i + B_i penalized by
// lambda_S |S|_{1,1} + lambda_B |B|_{1,inf}.

#include "placing/geom.hpp"
#include "placing/prox.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace placing {

/// One task's training data: X is p x n (one column per placement), y in {+1, -1}.
struct TaskData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    int task_id = 0;

    Eigen::Index features() const { return X.rows(); }
    Eigen::Index samples() const { return X.cols(); }

    void validate() const {
        if (X.cols() != y.size())
            throw std::invalid_argument("task data: column count differs from label count");
        if (!X.allFinite())
            throw std::invalid_argument("task data: non-finite feature value");
        bool pos = false, neg = false;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] == 1.0)
                pos = true;
            else if (y[i] == -1.0)
                neg = true;
            else
                throw std::invalid_argument("task data: labels must be +1 or -1");
        }
        if (!pos || !neg)
            throw std::invalid_argument("degenerate task");
    }
};

struct TaskModel {
    Eigen::VectorXd S;
    Eigen::VectorXd B;
    double b = 0.0;
    Eigen::VectorXd w; // S + B
    int task_id = 0;

    static TaskModel from_parts(Eigen::VectorXd s, Eigen::VectorXd bshared, double bias, int task_id = 0) {
        if (s.size() != bshared.size())
            throw std::invalid_argument("TaskModel: S and B sizes differ");
        TaskModel m;
        m.S = std::move(s);
        m.B = std::move(bshared);
        m.b = bias;
        m.w = m.S + m.B;
        m.task_id = task_id;
        return m;
    }
};

struct HyperParams {
    double C = 1.0;
    double lambda_s = 0.1;
    double lambda_b = 0.01;
    double tol = 1e-7;
    int max_iter = 5000;
    /// Candidate values of C picked by cross-validation on the training data.
    /// Empty means C is used as given.
    std::vector<double> c_grid;
    int cv_folds = 3;

    void validate() const {
        if (!(C > 0.0) || lambda_s < 0.0 || lambda_b < 0.0 || !(tol > 0.0) || max_iter < 1 || cv_folds < 2)
            throw std::invalid_argument("invalid hyperparameters");
        for (double c : c_grid)
            if (!(c > 0.0))
                throw std::invalid_argument("invalid hyperparameters");
    }
};

/// Per-feature standardization fitted on training columns; constant features keep
/// a unit scale.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd stdev;

    static Standardizer fit(std::span<const TaskData> tasks) {
        if (tasks.empty())
            throw std::invalid_argument("Standardizer: no data");
        const Eigen::Index p = tasks.front().features();
        Standardizer s;
        s.mean = Eigen::VectorXd::Zero(p);
        s.stdev = Eigen::VectorXd::Zero(p);
        double n = 0.0;
        for (const auto &t : tasks) {
            s.mean += t.X.rowwise().sum();
            n += static_cast<double>(t.samples());
        }
        s.mean /= n;
        for (const auto &t : tasks)
            s.stdev += (t.X.colwise() - s.mean).array().square().rowwise().sum().matrix();
        s.stdev = (s.stdev / n).cwiseSqrt();
        for (Eigen::Index j = 0; j < p; ++j)
            if (!(s.stdev[j] > 1e-12))
                s.stdev[j] = 1.0;
        return s;
    }

    static Standardizer identity(Eigen::Index p) {
        return {Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p)};
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd &X) const {
        return (X.colwise() - mean).array().colwise() / stdev.array();
    }
    Eigen::VectorXd apply_vector(const Eigen::VectorXd &v) const {
        return (v - mean).cwiseQuotient(stdev);
    }
    TaskData apply(const TaskData &t) const { return {apply(t.X), t.y, t.task_id}; }
};

inline double score(const TaskModel &m, const Eigen::VectorXd &v) {
    if (v.size() != m.w.size())
        throw std::invalid_argument("score: dimension mismatch");
    return m.w.dot(v) + m.b;
}

/// Mean of the per-model scores.
inline double score_voting(std::span<const TaskModel> models, const Eigen::VectorXd &v) {
    if (models.empty())
        throw std::invalid_argument("score_voting: no models");
    double s = 0.0;
    for (const auto &m : models)
        s += score(m, v);
    return s / static_cast<double>(models.size());
}

inline double hinge_sum(const TaskData &t, const Eigen::VectorXd &w, double b) {
    const Eigen::ArrayXd margin = t.y.array() * ((t.X.transpose() * w).array() + b);
    return (1.0 - margin).max(0.0).sum();
}

/// 1/2 |w|^2 + C sum hinge
inline double svm_objective(const TaskData &t, const Eigen::VectorXd &w, double b, double C) {
    return 0.5 * w.squaredNorm() + C * hinge_sum(t, w, b);
}

/// Shared-sparsity objective over all tasks.
inline double shared_objective(std::span<const TaskData> tasks, std::span<const TaskModel> models,
                               const HyperParams &hp) {
    double f = 0.0;
    Eigen::MatrixXd B(models.front().B.size(), static_cast<Eigen::Index>(models.size()));
    double l1 = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        f += svm_objective(tasks[i], models[i].w, models[i].b, hp.C);
        l1 += models[i].S.lpNorm<1>();
        B.col(static_cast<Eigen::Index>(i)) = models[i].B;
    }
    return f + hp.lambda_s * l1 + hp.lambda_b * prox::l1_linf_norm(B);
}

struct SolverTrace {
    std::vector<double> objective; // one entry per iteration, non-increasing
    bool converged = false;
    int iterations = 0;
};

struct SvmSolution {
    Eigen::VectorXd w;
    double b = 0.0;
    double objective = 0.0;
    int iterations = 0;
};

namespace detail {

/// Bias minimizing C sum hinge(y_i (s_i + b)) for fixed scores s: the objective is
/// convex piecewise linear in b with kinks at b = y_i - s_i.
inline double best_bias(const Eigen::VectorXd &s, const Eigen::VectorXd &y) {
    const Eigen::Index n = s.size();
    std::vector<std::pair<double, double>> kinks(static_cast<std::size_t>(n));
    // Left of every kink: positives are all violated (slope -1 each), negatives none.
    double slope = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        kinks[static_cast<std::size_t>(i)] = {y[i] - s[i], y[i]};
        if (y[i] > 0.0)
            slope -= 1.0;
    }
    std::sort(kinks.begin(), kinks.end());
    // Crossing a positive's kink removes its -1; crossing a negative's adds +1.
    for (const auto &[b, yi] : kinks) {
        slope += 1.0;
        if (slope >= 0.0)
            return b;
    }
    return kinks.empty() ? 0.0 : kinks.back().first;
}

/// Huber-smoothed hinge of margin m: zero above 1, quadratic on (1 - mu, 1),
/// linear below. Returns the value; `d` receives -dh/dm in [0, 1].
inline double smooth_hinge(double m, double mu, double &d) {
    if (m >= 1.0) {
        d = 0.0;
        return 0.0;
    }
    if (m > 1.0 - mu) {
        d = (1.0 - m) / mu;
        return 0.5 * (1.0 - m) * (1.0 - m) / mu;
    }
    d = 1.0;
    return 1.0 - m - 0.5 * mu;
}

} // namespace detail

/// Soft-margin linear SVM with an unregularized bias. The primal is solved by
/// damped Newton steps on a Huber-smoothed hinge whose smoothing shrinks from 1
/// to 1e-9 (the objective gap is then at most C n 1e-9 / 2); the bias is finally
/// set to the exact hinge minimizer for the returned w.
inline SvmSolution solve_svm(const TaskData &t, double C, int max_iter = 0) {
    t.validate();
    if (!(C > 0.0))
        throw std::invalid_argument("solve_svm: C must be positive");
    const Eigen::Index n = t.samples(), p = t.features();
    if (max_iter <= 0)
        max_iter = 2000;
    Eigen::MatrixXd Xa(p + 1, n); // features plus a constant row for the bias
    Xa.topRows(p) = t.X;
    Xa.row(p).setOnes();
    const Eigen::VectorXd &y = t.y;

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
    Eigen::VectorXd d(n);
    auto value = [&](const Eigen::VectorXd &th, double mu, Eigen::VectorXd *dd) {
        const Eigen::VectorXd m = y.cwiseProduct(Xa.transpose() * th);
        double f = 0.5 * th.head(p).squaredNorm(), loss = 0.0, di = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            loss += detail::smooth_hinge(m[i], mu, di);
            if (dd)
                (*dd)[i] = di;
        }
        return f + C * loss;
    };

    int iter = 0;
    for (double mu = 1.0; mu >= 1e-9 && iter < max_iter; mu *= 0.1) {
        for (; iter < max_iter; ++iter) {
            const double f = value(theta, mu, &d);
            Eigen::VectorXd g = -C * (Xa * y.cwiseProduct(d));
            g.head(p) += theta.head(p);
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p + 1, p + 1);
            H.diagonal().head(p).setOnes();
            for (Eigen::Index i = 0; i < n; ++i)
                if (d[i] > 0.0 && d[i] < 1.0)
                    H.selfadjointView<Eigen::Lower>().rankUpdate(Xa.col(i), C / mu);
            H = H.selfadjointView<Eigen::Lower>();
            // The bias has no curvature when no margin lies in the quadratic zone.
            H(p, p) += 1e-10 * (1.0 + H(p, p));
            const Eigen::VectorXd step = -H.ldlt().solve(g);
            const double decrement = -g.dot(step);
            if (!(decrement > 1e-15 * (1.0 + std::abs(f))))
                break;
            // Exact line search: the directional derivative is monotone and piecewise
            // linear in the step length, so bisect on its sign.
            const Eigen::VectorXd m0 = y.cwiseProduct(Xa.transpose() * theta);
            const Eigen::VectorXd dm = y.cwiseProduct(Xa.transpose() * step);
            const double ws = theta.head(p).dot(step.head(p)), ss = step.head(p).squaredNorm();
            auto slope = [&](double a) {
                double s_loss = 0.0, di = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) {
                    detail::smooth_hinge(m0[i] + a * dm[i], mu, di);
                    s_loss += di * dm[i];
                }
                return ws + a * ss - C * s_loss;
            };
            double lo = 0.0, hi = 1.0;
            while (slope(hi) < 0.0 && hi < 1e12)
                lo = hi, hi *= 2.0;
            for (int k = 0; k < 100 && hi - lo > 1e-14 * hi; ++k) {
                const double mid = 0.5 * (lo + hi);
                (slope(mid) < 0.0 ? lo : hi) = mid;
            }
            const double a = 0.5 * (lo + hi);
            if (!(value(theta + a * step, mu, nullptr) < f))
                break;
            theta += a * step;
        }
    }

    SvmSolution out;
    out.w = theta.head(p);
    out.b = detail::best_bias(t.X.transpose() * out.w, y);
    out.objective = svm_objective(t, out.w, out.b, C);
    out.iterations = iter;
    return out;
}

inline std::vector<TaskModel> train_independent(std::span<const TaskData> tasks, const HyperParams &hp) {
    hp.validate();
    std::vector<TaskModel> out;
    out.reserve(tasks.size());
    for (const auto &t : tasks) {
        SvmSolution s = solve_svm(t, hp.C);
        out.push_back(TaskModel::from_parts(s.w, Eigen::VectorXd::Zero(s.w.size()), s.b, t.task_id));
    }
    return out;
}

inline TaskData pool_tasks(std::span<const TaskData> tasks) {
    if (tasks.empty())
        throw std::invalid_argument("no tasks to pool");
    Eigen::Index n = 0;
    for (const auto &t : tasks)
        n += t.samples();
    TaskData pooled;
    pooled.X.resize(tasks.front().features(), n);
    pooled.y.resize(n);
    pooled.task_id = -1;
    Eigen::Index c = 0;
    for (const auto &t : tasks) {
        pooled.X.middleCols(c, t.samples()) = t.X;
        pooled.y.segment(c, t.samples()) = t.y;
        c += t.samples();
    }
    return pooled;
}

/// One model fitted to the column-concatenation of all tasks.
inline TaskModel train_joint(std::span<const TaskData> tasks, const HyperParams &hp) {
    hp.validate();
    const TaskData pooled = pool_tasks(tasks);
    SvmSolution s = solve_svm(pooled, hp.C);
    return TaskModel::from_parts(s.w, Eigen::VectorXd::Zero(s.w.size()), s.b, -1);
}

struct SharedOptions {
    double mu_start = 1e-2;  // initial hinge smoothing width
    double mu_min = 1e-5;
    int mu_period = 100;     // iterations between smoothing reductions
    int window = 10;         // convergence window
};

struct SharedResult {
    std::vector<TaskModel> models;
    SolverTrace trace;
    bool warning_not_converged = false;
};

/// Shared-sparsity multi-task SVM. For fixed w_i = S_i + B_i the best split is
/// closed-form per feature row, so the solver works on W alone with the induced
/// row penalty: accelerated proximal gradient on a Huber-smoothed hinge (width
/// shrunk over time) with an exact row prox. Starts from the independent
/// solutions and reports the best iterate under the exact objective, so the
/// trace never increases. S and B are recovered from W by the row split.
inline SharedResult train_shared(std::span<const TaskData> tasks, const HyperParams &hp,
                                 const SharedOptions &opt = {}) {
    hp.validate();
    if (tasks.empty())
        throw std::invalid_argument("train_shared: no tasks");
    for (const auto &t : tasks)
        t.validate();
    const Eigen::Index p = tasks.front().features();
    const auto r = static_cast<Eigen::Index>(tasks.size());
    const TaskData &(*task)(std::span<const TaskData>, Eigen::Index) = [](std::span<const TaskData> ts,
                                                                          Eigen::Index i) -> const TaskData & {
        return ts[static_cast<std::size_t>(i)];
    };

    const std::vector<TaskModel> init = train_independent(tasks, hp);
    Eigen::MatrixXd W(p, r);
    Eigen::VectorXd b(r);
    for (Eigen::Index i = 0; i < r; ++i) {
        W.col(i) = init[static_cast<std::size_t>(i)].w;
        b[i] = init[static_cast<std::size_t>(i)].b;
    }

    auto penalty = [&](const Eigen::MatrixXd &w) { return prox::split_penalty(w, hp.lambda_s, hp.lambda_b); };
    auto exact = [&](const Eigen::MatrixXd &w, const Eigen::VectorXd &bias) {
        double f = penalty(w);
        for (Eigen::Index i = 0; i < r; ++i)
            f += svm_objective(task(tasks, i), w.col(i), bias[i], hp.C);
        return f;
    };
    // Smoothed data term and its gradient with respect to w_i and b_i.
    auto smooth = [&](const Eigen::MatrixXd &w, const Eigen::VectorXd &bias, double mu, Eigen::MatrixXd *gw,
                      Eigen::VectorXd *gb) {
        double f = 0.0;
        for (Eigen::Index i = 0; i < r; ++i) {
            const TaskData &t = task(tasks, i);
            const Eigen::VectorXd m =
                t.y.cwiseProduct(t.X.transpose() * w.col(i) + Eigen::VectorXd::Constant(t.samples(), bias[i]));
            Eigen::VectorXd dl(t.samples());
            double loss = 0.0;
            for (Eigen::Index j = 0; j < t.samples(); ++j) {
                const double z = 1.0 - m[j];
                if (z <= 0.0) {
                    dl[j] = 0.0;
                } else if (z >= mu) {
                    loss += z - 0.5 * mu;
                    dl[j] = -1.0;
                } else {
                    loss += 0.5 * z * z / mu;
                    dl[j] = -z / mu;
                }
            }
            f += 0.5 * w.col(i).squaredNorm() + hp.C * loss;
            if (gw) {
                const Eigen::VectorXd coef = hp.C * dl.cwiseProduct(t.y);
                gw->col(i) = w.col(i) + t.X * coef;
                (*gb)[i] = coef.sum();
            }
        }
        return f;
    };
    // The bias is unpenalized, so each iterate gets its exact best bias.
    auto refit_bias = [&](const Eigen::MatrixXd &w) {
        Eigen::VectorXd out(r);
        for (Eigen::Index i = 0; i < r; ++i) {
            const TaskData &t = task(tasks, i);
            out[i] = detail::best_bias(t.X.transpose() * w.col(i), t.y);
        }
        return out;
    };

    SharedResult res;
    double best_f = exact(W, b);
    Eigen::MatrixXd bestW = W;
    Eigen::VectorXd bestb = b;
    res.trace.objective.push_back(best_f);

    Eigen::MatrixXd yW = W, prevW = W;
    Eigen::VectorXd yb = b, prevb = b;
    double tk = 1.0;
    double L = 1.0;
    double mu = opt.mu_start;
    Eigen::MatrixXd gw(p, r);
    Eigen::VectorXd gb(r);

    for (int it = 1; it <= hp.max_iter; ++it) {
        if (it % opt.mu_period == 0 && mu > opt.mu_min) {
            mu = std::max(opt.mu_min, 0.5 * mu);
            tk = 1.0;
            yW = W;
            yb = b;
        }
        const double fy = smooth(yW, yb, mu, &gw, &gb);
        Eigen::MatrixXd nW;
        Eigen::VectorXd nb;
        double fn = 0.0;
        for (int bt = 0; bt < 60; ++bt) {
            const double eta = 1.0 / L;
            nW = prox::split_penalty_rows(yW - eta * gw, hp.lambda_s, hp.lambda_b, eta);
            nb = yb - eta * gb;
            fn = smooth(nW, nb, mu, nullptr, nullptr);
            const double quad = gw.cwiseProduct(nW - yW).sum() + gb.dot(nb - yb) +
                                0.5 * L * ((nW - yW).squaredNorm() + (nb - yb).squaredNorm());
            if (fn <= fy + quad + 1e-12 * std::abs(fy))
                break;
            L *= 2.0;
        }
        // Adaptive restart on the smoothed composite objective.
        const double comp_new = fn + penalty(nW);
        const double comp_old = smooth(W, b, mu, nullptr, nullptr) + penalty(W);
        prevW = W;
        prevb = b;
        W = nW;
        b = nb;
        double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        if (comp_new > comp_old) {
            tk = 1.0;
            tn = 1.0;
        }
        const double beta = (tk - 1.0) / tn;
        yW = W + beta * (W - prevW);
        yb = b + beta * (b - prevb);
        tk = tn;
        L = std::max(1e-6, 0.9 * L);

        const Eigen::VectorXd fitted = refit_bias(W);
        const double f = exact(W, fitted);
        if (f < best_f) {
            best_f = f;
            bestW = W;
            bestb = fitted;
        }
        res.trace.objective.push_back(best_f);
        res.trace.iterations = it;
        const auto k = res.trace.objective.size();
        if (mu <= opt.mu_min && k > static_cast<std::size_t>(opt.window)) {
            const double old = res.trace.objective[k - 1 - static_cast<std::size_t>(opt.window)];
            if (old - best_f <= hp.tol * std::max(1.0, std::abs(best_f))) {
                res.trace.converged = true;
                break;
            }
        }
    }
    res.warning_not_converged = !res.trace.converged;
    Eigen::VectorXd s, sh;
    Eigen::MatrixXd S(p, r), B(p, r);
    for (Eigen::Index j = 0; j < p; ++j) {
        prox::split_row(bestW.row(j).transpose(), hp.lambda_s, hp.lambda_b, s, sh);
        S.row(j) = s.transpose();
        B.row(j) = sh.transpose();
    }
    for (Eigen::Index i = 0; i < r; ++i)
        res.models.push_back(TaskModel::from_parts(S.col(i), B.col(i), bestb[i], task(tasks, i).task_id));
    return res;
}

} // namespace placing
