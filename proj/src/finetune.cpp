#include "filmgen/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace filmgen::finetune {

void FinetuneProblem::validate() const {
    if (!reward) throw FinetuneError("no reward function");
    if (!(lower_nm > 0.0) || !(upper_nm >= lower_nm) || !std::isfinite(upper_nm)) {
        throw FinetuneError("bounds must satisfy 0 < lower <= upper");
    }
    for (std::size_t i = 0; i < structure.size(); ++i) {
        const double d = structure.layers[i].thickness_nm;
        if (!(d >= lower_nm && d <= upper_nm)) {
            throw FinetuneError("layer " + std::to_string(i) + " thickness " + std::to_string(d) +
                                " nm lies outside [" + std::to_string(lower_nm) + ", " + std::to_string(upper_nm) +
                                "]");
        }
    }
}

Structure FinetuneProblem::with_thicknesses(const std::vector<double>& x) const {
    if (x.size() != structure.size()) throw FinetuneError("thickness vector length differs from layer count");
    Structure s = structure;
    for (std::size_t i = 0; i < x.size(); ++i) s.layers[i].thickness_nm = x[i];
    return s;
}

double FinetuneProblem::evaluate(const std::vector<double>& x) const { return reward(with_thicknesses(x)); }

std::vector<double> reward_gradient(const FinetuneProblem& problem, const std::vector<double>& x, double h,
                                    std::size_t* evaluations) {
    if (!(h > 0.0)) throw FinetuneError("finite-difference step must be > 0");
    std::vector<double> g(x.size());
    std::vector<double> probe = x;
    std::size_t evals = 0;
    double centre = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = problem.evaluate(probe);
        if (x[i] - h > 0.0) {
            probe[i] = x[i] - h;
            const double down = problem.evaluate(probe);
            g[i] = (up - down) / (2.0 * h);
            evals += 2;
        } else {
            if (std::isnan(centre)) {
                centre = problem.evaluate(x);
                ++evals;
            }
            g[i] = (up - centre) / h;
            ++evals;
        }
        probe[i] = x[i];
    }
    if (evaluations) *evaluations += evals;
    return g;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct Pair {
    std::vector<double> s, y;
    double rho;
};

// Two-loop recursion: returns H * q for the inverse-Hessian model held in `pairs`.
std::vector<double> apply_inverse_hessian(const std::deque<Pair>& pairs, std::vector<double> q) {
    std::vector<double> alpha(pairs.size());
    for (std::size_t k = pairs.size(); k-- > 0;) {
        alpha[k] = pairs[k].rho * dot(pairs[k].s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * pairs[k].y[i];
    }
    if (!pairs.empty()) {
        const auto& last = pairs.back();
        const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double beta = pairs[k].rho * dot(pairs[k].y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * pairs[k].s[i];
    }
    return q;
}

}  // namespace

FinetuneResult finetune(const FinetuneProblem& problem, const FinetuneOptions& options) {
    problem.validate();
    if (options.memory == 0) throw FinetuneError("memory must be >= 1");

    FinetuneResult result;
    result.structure = problem.structure;
    const std::size_t n = problem.structure.size();
    const double lo = problem.lower_nm;
    const double hi = problem.upper_nm;

    // Minimize f = -G.
    std::vector<double> x = problem.structure.thicknesses();
    double f = -problem.evaluate(x);
    ++result.evaluations;
    result.reward_before = -f;
    result.reward_after = -f;
    if (n == 0) {
        result.stop_reason = "no layers";
        return result;
    }

    auto project = [&](std::vector<double>& v) {
        for (double& c : v) c = std::clamp(c, lo, hi);
    };
    auto gradient = [&](const std::vector<double>& at) {
        auto g = reward_gradient(problem, at, options.fd_step_nm, &result.evaluations);
        for (double& c : g) c = -c;
        return g;
    };

    std::vector<double> g = gradient(x);
    std::deque<Pair> pairs;
    const double f_tol = 1e7 * std::numeric_limits<double>::epsilon();  // factr = 1e7

    result.stop_reason = "iteration limit";
    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        // Projected-gradient optimality test.
        double pg_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double moved = std::clamp(x[i] - g[i], lo, hi) - x[i];
            pg_norm = std::max(pg_norm, std::abs(moved));
        }
        if (pg_norm < options.gradient_tolerance) {
            result.stop_reason = "projected gradient below tolerance";
            break;
        }

        // Coordinates pinned at a bound with the gradient pushing outward stay fixed.
        std::vector<bool> active(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            active[i] = (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0);
        }
        std::vector<double> g_free = g;
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i]) g_free[i] = 0.0;
        }

        std::vector<double> d;
        if (!pairs.empty()) {
            d = apply_inverse_hessian(pairs, g_free);
            for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -d[i];
            if (dot(d, g) >= 0.0) pairs.clear();
        }
        if (pairs.empty()) {
            d.assign(n, 0.0);
            double amax = 0.0;
            for (std::size_t i = 0; i < n; ++i) amax = std::max(amax, std::abs(g_free[i]));
            if (amax == 0.0) {
                result.stop_reason = "no free descent direction";
                break;
            }
            for (std::size_t i = 0; i < n; ++i) d[i] = -g_free[i] * options.first_step_nm / amax;
        }

        // Backtracking along the projected path.
        double step = 1.0;
        std::vector<double> x_new;
        double f_new = f;
        bool accepted = false;
        for (int trial = 0; trial < 40; ++trial) {
            x_new = x;
            for (std::size_t i = 0; i < n; ++i) x_new[i] += step * d[i];
            project(x_new);
            double decrease = 0.0;
            for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (x_new[i] - x[i]);
            if (decrease >= 0.0) {
                step *= 0.5;
                continue;
            }
            f_new = -problem.evaluate(x_new);
            ++result.evaluations;
            if (f_new <= f + 1e-4 * decrease) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (pairs.empty()) {
                result.stop_reason = "line search failed";
                break;
            }
            pairs.clear();
            continue;
        }

        auto g_new = gradient(x_new);
        Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            p.s[i] = x_new[i] - x[i];
            p.y[i] = g_new[i] - g[i];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
            p.rho = 1.0 / sy;
            pairs.push_back(std::move(p));
            if (pairs.size() > options.memory) pairs.pop_front();
        }

        const double f_old = f;
        x = std::move(x_new);
        f = f_new;
        g = std::move(g_new);
        result.iterations = iter + 1;
        if ((f_old - f) <= f_tol * std::max({std::abs(f_old), std::abs(f), 1.0})) {
            result.stop_reason = "relative reduction below tolerance";
            break;
        }
    }

    if (-f > result.reward_before) {
        result.structure = problem.with_thicknesses(x);
        result.reward_after = -f;
        result.improved = true;
    }
    return result;
}

}  // namespace filmgen::finetune
