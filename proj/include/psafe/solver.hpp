#pragma once

#include <chrono>
#include <cstdlib>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "psafe/core.hpp"

namespace psafe {

// Five-point Dirichlet problem on a subset of the grid. Cells with
// solve_mask = 1 are unknowns; all other cells hold fixed values. Neighbor
// reads outside the grid see an implicit zero halo.
struct DirichletProblem {
    int nx = 0;
    int ny = 0;
    double resolution = 1.0;
    Vec2 origin{};
    std::vector<uint8_t> solve_mask;
    std::vector<double> fixed_values;  // used where solve_mask = 0
    ScalarField forcing;
    std::optional<ScalarField> initial_guess;

    size_t idx(int i, int j) const { return static_cast<size_t>(j) * nx + i; }

    void validate() const {
        const size_t n = static_cast<size_t>(nx) * ny;
        if (nx < 3 || ny < 3) throw std::invalid_argument("problem grid too small");
        if (resolution <= 0) throw std::invalid_argument("resolution must be > 0");
        if (solve_mask.size() != n || fixed_values.size() != n)
            throw std::invalid_argument("problem arrays do not match grid shape");
        if (forcing.nx != nx || forcing.ny != ny)
            throw std::invalid_argument("forcing shape mismatch");
        if (initial_guess && (initial_guess->nx != nx || initial_guess->ny != ny))
            throw std::invalid_argument("initial guess shape mismatch");
        for (size_t c = 0; c < n; ++c) {
            if (solve_mask[c] && !std::isfinite(forcing.values[c]))
                throw std::invalid_argument("forcing must be finite on solved cells");
            if (!solve_mask[c] && !std::isfinite(fixed_values[c]))
                throw std::invalid_argument("fixed values must be finite");
        }
    }
};

struct SolverParams {
    double tol = 1e-4;
    int max_iter = 0;    // 0: 50 * max(nx, ny)
    double omega = 0.0;  // 0: optimal_omega(max(nx, ny))
};

// Classical optimal relaxation factor for the five-point Laplacian on an
// n x n grid, clamped to [1, 2).
inline double optimal_omega(int n) {
    if (n < 3) throw std::invalid_argument("optimal_omega needs n >= 3");
    double w = 2.0 / (1.0 + std::sin(std::numbers::pi / n));
    if (w < 1.0) w = 1.0;
    if (w >= 2.0) w = std::nextafter(2.0, 1.0);
    return w;
}

namespace detail {

inline int solver_threads() {
    const char* env = std::getenv("PSAFE_THREADS");
    if (!env) return 0;
    int v = std::atoi(env);
    return v > 0 ? v : 0;
}

}  // namespace detail

// Max residual of the five-point discretization: max over solved cells of
// |(h_E + h_W + h_N + h_S - 4 h)/dx^2 - f|.
inline double residual(const ScalarField& field, const DirichletProblem& p) {
    if (field.nx != p.nx || field.ny != p.ny)
        throw std::invalid_argument("field shape does not match problem");
    const double inv_dx2 = 1.0 / (p.resolution * p.resolution);
    const double* h = field.values.data();
    double worst = 0.0;
    for (int j = 0; j < p.ny; ++j) {
        for (int i = 0; i < p.nx; ++i) {
            size_t c = p.idx(i, j);
            if (!p.solve_mask[c]) continue;
            double e = i + 1 < p.nx ? h[c + 1] : 0.0;
            double w = i > 0 ? h[c - 1] : 0.0;
            double nn = j + 1 < p.ny ? h[c + p.nx] : 0.0;
            double s = j > 0 ? h[c - p.nx] : 0.0;
            double r = std::abs((e + w + nn + s - 4.0 * h[c]) * inv_dx2 - p.forcing.values[c]);
            if (r > worst) worst = r;
        }
    }
    return worst;
}

// Red-black SOR. Cells of one color depend only on the opposite color, so each
// half-sweep is order-independent and parallel runs are bit-identical to
// sequential ones. PSAFE_THREADS caps the sweep thread count (0 = auto).
inline std::pair<ScalarField, SolveStats> sor_solve(const DirichletProblem& p, double omega,
                                                    double tol, int max_iter) {
    p.validate();
    if (omega < 1.0 || omega >= 2.0) throw std::invalid_argument("omega must be in [1, 2)");
    if (tol <= 0) throw std::invalid_argument("tol must be > 0");
    if (max_iter <= 0) throw std::invalid_argument("max_iter must be > 0");

    auto t0 = std::chrono::steady_clock::now();

    ScalarField h(p.nx, p.ny, p.resolution, p.origin);
    const size_t n = h.values.size();
    for (size_t c = 0; c < n; ++c) {
        if (!p.solve_mask[c])
            h.values[c] = p.fixed_values[c];
        else if (p.initial_guess)
            h.values[c] = p.initial_guess->values[c];
    }

    const int nx = p.nx, ny = p.ny;
    const double dx2 = p.resolution * p.resolution;
    const double inv_dx2 = 1.0 / dx2;
    const double* f = p.forcing.values.data();
    const uint8_t* mask = p.solve_mask.data();

    int nthreads = detail::solver_threads();
#ifdef _OPENMP
    if (nthreads <= 0) nthreads = omp_get_max_threads();
#else
    nthreads = 1;
#endif

    double res = std::numeric_limits<double>::infinity();
    int iter = 0;
    while (iter < max_iter) {
        ++iter;
        double* hv = h.values.data();
        for (int color = 0; color < 2; ++color) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
            for (int j = 0; j < ny; ++j) {
                size_t row = static_cast<size_t>(j) * nx;
                for (int i = (j + color) & 1; i < nx; i += 2) {
                    size_t c = row + i;
                    if (!mask[c]) continue;
                    double e = i + 1 < nx ? hv[c + 1] : 0.0;
                    double w = i > 0 ? hv[c - 1] : 0.0;
                    double nn = j + 1 < ny ? hv[c + nx] : 0.0;
                    double s = j > 0 ? hv[c - nx] : 0.0;
                    hv[c] += omega * 0.25 * (e + w + nn + s - 4.0 * hv[c] - dx2 * f[c]);
                }
            }
        }

        double worst = 0.0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads) reduction(max : worst)
#endif
        for (int j = 0; j < ny; ++j) {
            size_t row = static_cast<size_t>(j) * nx;
            for (int i = 0; i < nx; ++i) {
                size_t c = row + i;
                if (!mask[c]) continue;
                double e = i + 1 < nx ? hv[c + 1] : 0.0;
                double w = i > 0 ? hv[c - 1] : 0.0;
                double nn = j + 1 < ny ? hv[c + nx] : 0.0;
                double s = j > 0 ? hv[c - nx] : 0.0;
                double r = std::abs((e + w + nn + s - 4.0 * hv[c]) * inv_dx2 - f[c]);
                if (r > worst) worst = r;
            }
        }
        res = worst;
        if (res <= tol) break;
    }

    auto t1 = std::chrono::steady_clock::now();
    SolveStats stats;
    stats.iterations = iter;
    stats.residual = res;
    stats.omega = omega;
    stats.warm_started = p.initial_guess.has_value();
    stats.wall_time_s = std::chrono::duration<double>(t1 - t0).count();

    if (res > tol)
        throw ConvergenceError("sor did not converge: residual " + detail::format_double(res) +
                                   " > tol " + detail::format_double(tol) + " after " +
                                   std::to_string(iter) + " iterations",
                               res, iter);
    h.stats = stats;
    return {std::move(h), stats};
}

inline std::pair<ScalarField, SolveStats> sor_solve(const DirichletProblem& p,
                                                    const SolverParams& params = {}) {
    double omega = params.omega > 0 ? params.omega : optimal_omega(std::max(p.nx, p.ny));
    int max_iter = params.max_iter > 0 ? params.max_iter : 50 * std::max(p.nx, p.ny);
    return sor_solve(p, omega, params.tol, max_iter);
}

}  // namespace psafe
