#pragma once

// Derivative-free minimization by linear approximation (Powell's COBYLA),
// specialised to the unconstrained case.
//
// The method keeps n+1 interpolation points: a pole (the best vertex) plus n
// vertices stored as displacements from it. The displacement matrix `sim_`
// and its inverse `simi_` give the gradient of the linear interpolant. Each
// iteration either takes a step of length rho along the negative model
// gradient, or, when the simplex has become too flat or too stretched,
// replaces one vertex to restore its geometry. rho is halved whenever
// neither kind of step makes progress, until it reaches rho_end.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qfl/error.hpp"

namespace qfl {

struct CobylaSettings {
    double rho_begin = 1.0;
    double rho_end = 1e-4;
    std::size_t max_evals = 120;
};

enum class CobylaStatus { Converged, BudgetExhausted, RoundingErrors };

struct OptimResult {
    std::vector<double> best_point;
    double best_value = 0.0;
    std::size_t n_evals = 0;
    bool converged = false;  // rho reached rho_end
    CobylaStatus status = CobylaStatus::BudgetExhausted;
    std::vector<double> trace;  // best-so-far after each evaluation
};

class OptimizationError : public Error {
public:
    OptimizationError(const std::string& what, std::vector<double> point)
        : Error(what + " at " + format_point(point)), point_(std::move(point)) {}

    const std::vector<double>& point() const noexcept { return point_; }

private:
    static std::string format_point(const std::vector<double>& p) {
        std::ostringstream os;
        os.precision(17);
        os << '(';
        for (std::size_t i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
        os << ')';
        return os.str();
    }

    std::vector<double> point_;
};

inline void validate(const CobylaSettings& s, std::size_t dimension) {
    if (dimension == 0) throw SettingsError("optimization needs at least one variable");
    if (!(s.rho_end > 0.0) || !(s.rho_begin > s.rho_end)) {
        throw SettingsError("need 0 < rho_end < rho_begin");
    }
    if (s.max_evals < dimension + 2) {
        throw SettingsError("max_evals " + std::to_string(s.max_evals) + " below dimension + 2 = " +
                            std::to_string(dimension + 2));
    }
}

namespace detail {

template <class Objective>
class Cobyla {
public:
    Cobyla(Objective& objective, std::span<const double> x0, const CobylaSettings& settings)
        : f_(objective),
          s_(settings),
          n_(x0.size()),
          x_(x0.begin(), x0.end()),
          sim_(n_, std::vector<double>(n_ + 1, 0.0)),
          simi_(n_, std::vector<double>(n_, 0.0)),
          fval_(n_ + 1, 0.0),
          dx_(n_, 0.0),
          grad_(n_, 0.0),
          vsig_(n_, 0.0),
          veta_(n_, 0.0) {}

    OptimResult run() {
        rho_ = s_.rho_begin;
        for (std::size_t i = 0; i < n_; ++i) {
            sim_[i][n_] = x_[i];
            sim_[i][i] = rho_;
            simi_[i][i] = 1.0 / rho_;
        }
        if (!build_initial_simplex()) return finish(CobylaStatus::BudgetExhausted);

        bool trust_branch = true;  // the step following a fresh simplex is a model step
        while (true) {
            move_best_to_pole();
            if (inverse_error() > 0.1) return finish(CobylaStatus::RoundingErrors);
            compute_gradient();
            const bool acceptable = assess_geometry();

            if (!trust_branch && !acceptable) {
                geometry_step();
                const auto fnew = evaluate(x_);
                if (!fnew) return finish(CobylaStatus::BudgetExhausted);
                fval_[jdrop_] = *fnew;
                trust_branch = true;
                continue;
            }

            // Model step: the linear model is minimised on the boundary of the trust region.
            double gnorm = 0.0;
            for (double g : grad_) gnorm += g * g;
            gnorm = std::sqrt(gnorm);
            bool keep_rho = false;
            if (gnorm > 0.0) {
                for (std::size_t i = 0; i < n_; ++i) dx_[i] = -rho_ * grad_[i] / gnorm;
                const double predicted = rho_ * gnorm;
                for (std::size_t i = 0; i < n_; ++i) x_[i] = sim_[i][n_] + dx_[i];
                const auto fnew = evaluate(x_);
                if (!fnew) return finish(CobylaStatus::BudgetExhausted);
                keep_rho = absorb_trial_point(*fnew, predicted);
            }
            trust_branch = true;
            if (keep_rho) continue;
            if (!acceptable) {
                trust_branch = false;
                continue;
            }
            if (rho_ <= s_.rho_end) return finish(CobylaStatus::Converged);
            rho_ *= 0.5;
            if (rho_ <= 1.5 * s_.rho_end) rho_ = s_.rho_end;
        }
    }

private:
    static constexpr double kAlpha = 0.25;  // minimum vertex distance from opposite face, / rho
    static constexpr double kBeta = 2.1;    // maximum edge length, / rho
    static constexpr double kGamma = 0.5;   // geometry step length factor
    static constexpr double kDelta = 1.1;   // edge length that marks a vertex for replacement

    std::optional<double> evaluate(const std::vector<double>& x) {
        if (result_.n_evals >= s_.max_evals) return std::nullopt;
        const double value = f_(std::span<const double>(x));
        if (!std::isfinite(value)) throw OptimizationError("objective returned a non-finite value", x);
        ++result_.n_evals;
        if (result_.n_evals == 1 || value < result_.best_value) {
            result_.best_value = value;
            result_.best_point = x;
        }
        result_.trace.push_back(result_.best_value);
        return value;
    }

    // Evaluates x0 and x0 + rho e_j, moving the pole whenever a new vertex is better.
    bool build_initial_simplex() {
        const auto f0 = evaluate(x_);
        if (!f0) return false;
        fval_[n_] = *f0;
        for (std::size_t j = 0; j < n_; ++j) {
            x_[j] += rho_;
            const auto fj = evaluate(x_);
            if (!fj) return false;
            if (fval_[n_] <= *fj) {
                fval_[j] = *fj;
                x_[j] = sim_[j][n_];
            } else {
                sim_[j][n_] = x_[j];
                fval_[j] = fval_[n_];
                fval_[n_] = *fj;
                for (std::size_t k = 0; k <= j; ++k) {
                    sim_[j][k] = -rho_;
                    double t = 0.0;
                    for (std::size_t i = k; i <= j; ++i) t -= simi_[i][k];
                    simi_[j][k] = t;
                }
            }
        }
        return true;
    }

    void move_best_to_pole() {
        std::size_t nbest = n_;
        double fmin = fval_[n_];
        for (std::size_t j = 0; j < n_; ++j) {
            if (fval_[j] < fmin) {
                nbest = j;
                fmin = fval_[j];
            }
        }
        if (nbest == n_) return;
        std::swap(fval_[nbest], fval_[n_]);
        for (std::size_t i = 0; i < n_; ++i) {
            const double t = sim_[i][nbest];
            sim_[i][nbest] = 0.0;
            sim_[i][n_] += t;
            double ta = 0.0;
            for (std::size_t k = 0; k < n_; ++k) {
                sim_[i][k] -= t;
                ta -= simi_[k][i];
            }
            simi_[nbest][i] = ta;
        }
    }

    double inverse_error() const {
        double err = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                double t = i == j ? -1.0 : 0.0;
                for (std::size_t k = 0; k < n_; ++k) {
                    if (sim_[k][j] != 0.0) t += simi_[i][k] * sim_[k][j];
                }
                err = std::max(err, std::abs(t));
            }
        }
        return err;
    }

    void compute_gradient() {
        for (std::size_t i = 0; i < n_; ++i) {
            double t = 0.0;
            for (std::size_t j = 0; j < n_; ++j) t += (fval_[j] - fval_[n_]) * simi_[j][i];
            grad_[i] = t;
        }
    }

    // vsig_j: distance of vertex j from the opposite face. veta_j: its edge length.
    bool assess_geometry() {
        bool ok = true;
        const double parsig = kAlpha * rho_;
        const double pareta = kBeta * rho_;
        for (std::size_t j = 0; j < n_; ++j) {
            double wsig = 0.0;
            double weta = 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                wsig += simi_[j][i] * simi_[j][i];
                weta += sim_[i][j] * sim_[i][j];
            }
            vsig_[j] = 1.0 / std::sqrt(wsig);
            veta_[j] = std::sqrt(weta);
            if (vsig_[j] < parsig || veta_[j] > pareta) ok = false;
        }
        return ok;
    }

    void geometry_step() {
        const double parsig = kAlpha * rho_;
        const double pareta = kBeta * rho_;
        std::size_t jdrop = n_;
        double t = pareta;
        for (std::size_t j = 0; j < n_; ++j) {
            if (veta_[j] > t) {
                jdrop = j;
                t = veta_[j];
            }
        }
        if (jdrop == n_) {
            t = parsig;
            for (std::size_t j = 0; j < n_; ++j) {
                if (vsig_[j] < t) {
                    jdrop = j;
                    t = vsig_[j];
                }
            }
        }
        const double step = kGamma * rho_ * vsig_[jdrop];
        double slope = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            dx_[i] = step * simi_[jdrop][i];
            slope += grad_[i] * dx_[i];
        }
        // Prefer the direction the linear model predicts to be downhill.
        if (slope > 0.0) {
            for (double& d : dx_) d = -d;
        }
        replace_vertex(jdrop);
        for (std::size_t i = 0; i < n_; ++i) x_[i] = sim_[i][n_] + dx_[i];
        jdrop_ = jdrop;
    }

    // Puts dx_ into column jdrop of sim_ and updates simi_ by a rank-one correction.
    void replace_vertex(std::size_t jdrop) {
        double t = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            sim_[i][jdrop] = dx_[i];
            t += simi_[jdrop][i] * dx_[i];
        }
        for (std::size_t i = 0; i < n_; ++i) simi_[jdrop][i] /= t;
        for (std::size_t j = 0; j < n_; ++j) {
            if (j == jdrop) continue;
            double u = 0.0;
            for (std::size_t i = 0; i < n_; ++i) u += simi_[j][i] * dx_[i];
            for (std::size_t i = 0; i < n_; ++i) simi_[j][i] -= u * simi_[jdrop][i];
        }
    }

    // Decides whether the model-step point replaces a vertex. Returns true
    // when the reduction was good enough to keep the current rho.
    bool absorb_trial_point(double fnew, double predicted) {
        double trured = fval_[n_] - fnew;
        double prerem = predicted;
        if (fnew == fval_[n_]) {
            prerem = 0.0;
            trured = 0.0;
        }
        const double parsig = kAlpha * rho_;
        double ratio = trured <= 0.0 ? 1.0 : 0.0;
        std::size_t jdrop = n_;
        std::vector<double> sigbar(n_);
        for (std::size_t j = 0; j < n_; ++j) {
            double t = 0.0;
            for (std::size_t i = 0; i < n_; ++i) t += simi_[j][i] * dx_[i];
            t = std::abs(t);
            if (t > ratio) {
                jdrop = j;
                ratio = t;
            }
            sigbar[j] = t * vsig_[j];
        }
        double edgmax = kDelta * rho_;
        std::size_t far = n_;
        for (std::size_t j = 0; j < n_; ++j) {
            if (sigbar[j] >= parsig || sigbar[j] >= vsig_[j]) {
                double t = veta_[j];
                if (trured > 0.0) {
                    t = 0.0;
                    for (std::size_t i = 0; i < n_; ++i) {
                        const double d = dx_[i] - sim_[i][j];
                        t += d * d;
                    }
                    t = std::sqrt(t);
                }
                if (t > edgmax) {
                    far = j;
                    edgmax = t;
                }
            }
        }
        if (far < n_) jdrop = far;
        if (jdrop == n_) return false;
        replace_vertex(jdrop);
        fval_[jdrop] = fnew;
        return trured > 0.0 && trured >= 0.1 * prerem;
    }

    OptimResult finish(CobylaStatus status) {
        result_.status = status;
        result_.converged = status == CobylaStatus::Converged;
        return std::move(result_);
    }

    Objective& f_;
    CobylaSettings s_;
    std::size_t n_;
    std::vector<double> x_;
    std::vector<std::vector<double>> sim_;   // n x (n+1); last column is the pole
    std::vector<std::vector<double>> simi_;  // inverse of the leading n x n block
    std::vector<double> fval_;               // objective at each vertex; last is the pole
    std::vector<double> dx_;
    std::vector<double> grad_;
    std::vector<double> vsig_;
    std::vector<double> veta_;
    std::size_t jdrop_ = 0;
    double rho_ = 0.0;
    OptimResult result_;
};

}  // namespace detail

/// Minimises `objective` starting from `x0`. The objective is called with a
/// `std::span<const double>` and must return a finite double. Deterministic:
/// identical inputs give an identical evaluation sequence.
template <class Objective>
OptimResult cobyla_minimize(Objective&& objective, std::span<const double> x0,
                            const CobylaSettings& settings = {}) {
    validate(settings, x0.size());
    detail::Cobyla<std::remove_reference_t<Objective>> solver(objective, x0, settings);
    return solver.run();
}

}  // namespace qfl
