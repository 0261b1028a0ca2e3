#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "psafe/solver.hpp"

#include "helpers.hpp"

using namespace psafe;
using namespace testutil;
using Catch::Approx;

TEST_CASE("optimal_omega") {
    REQUIRE(optimal_omega(3) == Approx(2.0 / (1.0 + std::sin(std::numbers::pi / 3))));
    REQUIRE(optimal_omega(3) == Approx(1.0718).margin(1e-4));
    REQUIRE(optimal_omega(1000000) > 1.99999);
    for (int n : {3, 4, 7, 16, 120, 4096, 1 << 20}) {
        double w = optimal_omega(n);
        REQUIRE(w >= 1.0);
        REQUIRE(w < 2.0);
    }
    REQUIRE_THROWS_AS(optimal_omega(2), std::invalid_argument);
}

TEST_CASE("sor_solve: zero forcing and zero boundary give zero in one sweep") {
    auto p = square_problem(17, 0.0);
    auto [h, stats] = sor_solve(p, 1.5, 1e-10, 100);
    REQUIRE(stats.iterations == 1);
    for (double v : h.values) REQUIRE(v == 0.0);
    REQUIRE_FALSE(stats.warm_started);
}

TEST_CASE("sor_solve matches the radial analytic solution on a disk") {
    // dh = -4 on a unit disk, h = 0 on the rim: h(r) = 1 - r^2, h(0) = 1
    auto [p, center] = disk_problem(1.0, 1.0 / 60.0, -4.0);
    auto [h, stats] = sor_solve(p, SolverParams{1e-6, 0, 0.0});
    double hc = h.at(center.first, center.second);
    REQUIRE(hc == Approx(1.0).epsilon(2e-2));
    REQUIRE(stats.residual <= 1e-6);
}

TEST_CASE("sor_solve matches the torsion series on the unit square") {
    auto p = square_problem(129, -1.0);
    auto [h, stats] = sor_solve(p, SolverParams{1e-7, 0, 0.0});
    double oracle = torsion_center_value();
    REQUIRE(oracle == Approx(0.073671).margin(5e-7));  // series sanity
    REQUIRE(h.at(64, 64) == Approx(oracle).margin(1e-3));
}

TEST_CASE("residual is zero for an exact discrete solution and scales with a bump") {
    int n = 21;
    auto p = square_problem(n, 0.0);
    // random interior field, forcing manufactured from its own stencil
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    ScalarField h(n, n, p.resolution);
    for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) h.at(i, j) = uni(rng);
    double inv_dx2 = 1.0 / (p.resolution * p.resolution);
    for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i)
            p.forcing.at(i, j) =
                (h.at(i + 1, j) + h.at(i - 1, j) + h.at(i, j + 1) + h.at(i, j - 1) -
                 4.0 * h.at(i, j)) *
                inv_dx2;

    REQUIRE(residual(h, p) <= 1e-12);

    double eps = 0.25;
    h.at(10, 10) += eps;
    REQUIRE(residual(h, p) == Approx(4.0 * eps * inv_dx2));

    ScalarField bad(n + 1, n, p.resolution);
    REQUIRE_THROWS_AS(residual(bad, p), std::invalid_argument);
}

TEST_CASE("sor_solve output satisfies its own residual bound") {
    auto p = square_problem(65, -2.5);
    double tol = 1e-5;
    auto [h, stats] = sor_solve(p, SolverParams{tol, 0, 0.0});
    REQUIRE(residual(h, p) <= tol);
    REQUIRE(stats.residual == residual(h, p));
}

TEST_CASE("discrete weak minimum and maximum principles") {
    int n = 41;
    double tol = 1e-8;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(0.0, 3.0);

    auto p = square_problem(n, 0.0);
    for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) p.forcing.at(i, j) = -uni(rng);
    auto [h_min, s1] = sor_solve(p, SolverParams{tol, 0, 0.0});
    double dx2 = p.resolution * p.resolution;
    for (double v : h_min.values) REQUIRE(v >= -tol * dx2);

    for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) p.forcing.at(i, j) = uni(rng);
    auto [h_max, s2] = sor_solve(p, SolverParams{tol, 0, 0.0});
    for (double v : h_max.values) REQUIRE(v <= tol * dx2);
}

TEST_CASE("warm start agrees with cold start and converges faster after a small change") {
    // paper-scale empty room with a small block
    auto g = empty_room(120, 0.025);
    for (int j = 50; j < 60; ++j)
        for (int i = 40; i < 50; ++i) g.cells[g.idx(i, j)] = 1;
    auto dd = decompose_domain(g);

    auto problem_for = [&](const DomainDecomposition& d) {
        DirichletProblem p;
        p.nx = d.nx;
        p.ny = d.ny;
        p.resolution = d.resolution;
        p.origin = d.origin;
        p.solve_mask.assign(d.labels.size(), 0);
        p.fixed_values.assign(d.labels.size(), 0.0);
        p.forcing = ScalarField(d.nx, d.ny, d.resolution, d.origin, -1.0);
        for (size_t c = 0; c < d.labels.size(); ++c)
            if (d.labels[c] == CellLabel::Free) p.solve_mask[c] = 1;
        return p;
    };

    double tol = 1e-4;
    auto p0 = problem_for(dd);
    auto [h0, cold0] = sor_solve(p0, SolverParams{tol, 0, 0.0});

    // same problem, warm-started from the solution: converges immediately and
    // agrees with the cold solve
    auto pw = p0;
    pw.initial_guess = h0;
    auto [hw, warm0] = sor_solve(pw, SolverParams{tol, 0, 0.0});
    REQUIRE(warm0.warm_started);
    double worst = 0.0;
    for (size_t c = 0; c < hw.values.size(); ++c)
        worst = std::max(worst, std::abs(hw.values[c] - h0.values[c]));
    REQUIRE(worst <= 10 * tol);

    // move the block by one cell and compare cold vs warm iteration counts
    auto g2 = empty_room(120, 0.025);
    for (int j = 50; j < 60; ++j)
        for (int i = 41; i < 51; ++i) g2.cells[g2.idx(i, j)] = 1;
    auto dd2 = decompose_domain(g2);
    auto p2 = problem_for(dd2);
    auto [h2c, cold2] = sor_solve(p2, SolverParams{tol, 0, 0.0});
    p2.initial_guess = h0;
    auto [h2w, warm2] = sor_solve(p2, SolverParams{tol, 0, 0.0});
    REQUIRE(warm2.iterations < cold2.iterations);

    double diff = 0.0;
    for (size_t c = 0; c < h2w.values.size(); ++c)
        diff = std::max(diff, std::abs(h2w.values[c] - h2c.values[c]));
    REQUIRE(diff <= 10 * tol);
}

TEST_CASE("half-sweep updates are order independent") {
    // the update of a cell reads only opposite-color cells and itself, so any
    // permutation of a half-sweep gives bit-identical results
    int n = 33;
    auto p = square_problem(n, -1.0);
    auto [h, stats] = sor_solve(p, 1.7, 1e-3, 1000);  // partially converged state

    double omega = 1.7;
    double dx2 = p.resolution * p.resolution;
    auto sweep = [&](const ScalarField& in, const std::vector<size_t>& order) {
        ScalarField out = in;
        for (size_t c : order) {
            int i = static_cast<int>(c % n), j = static_cast<int>(c / n);
            double e = i + 1 < n ? out.values[c + 1] : 0.0;
            double w = i > 0 ? out.values[c - 1] : 0.0;
            double nn = j + 1 < n ? out.values[c + n] : 0.0;
            double s = j > 0 ? out.values[c - n] : 0.0;
            out.values[c] += omega * 0.25 * (e + w + nn + s - 4.0 * out.values[c] -
                                             dx2 * p.forcing.values[c]);
        }
        return out;
    };

    std::vector<size_t> red;
    for (size_t c = 0; c < h.values.size(); ++c) {
        int i = static_cast<int>(c % n), j = static_cast<int>(c / n);
        if (((i + j) & 1) == 0 && p.solve_mask[c]) red.push_back(c);
    }
    auto forward = sweep(h, red);
    std::vector<size_t> shuffled = red;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(99));
    auto permuted = sweep(h, shuffled);
    std::reverse(red.begin(), red.end());
    auto backward = sweep(h, red);

    REQUIRE(forward.values == permuted.values);
    REQUIRE(forward.values == backward.values);
}

TEST_CASE("solves are bit-identical across thread counts") {
    auto p = square_problem(65, -1.0);

    setenv("PSAFE_THREADS", "1", 1);
    auto [h1, s1] = sor_solve(p, SolverParams{1e-6, 0, 0.0});
    setenv("PSAFE_THREADS", "2", 1);
    auto [h2, s2] = sor_solve(p, SolverParams{1e-6, 0, 0.0});
    unsetenv("PSAFE_THREADS");

    REQUIRE(h1.values == h2.values);
    REQUIRE(s1.iterations == s2.iterations);
}

TEST_CASE("sor_solve reports non-convergence with the residual attached") {
    auto p = square_problem(65, -1.0);
    try {
        sor_solve(p, 1.0, 1e-12, 3);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        REQUIRE(e.iterations == 3);
        REQUIRE(e.residual > 1e-12);
    }
}

TEST_CASE("sor_solve validates its inputs") {
    auto p = square_problem(9, -1.0);
    REQUIRE_THROWS_AS(sor_solve(p, 0.5, 1e-4, 10), std::invalid_argument);
    REQUIRE_THROWS_AS(sor_solve(p, 2.0, 1e-4, 10), std::invalid_argument);
    REQUIRE_THROWS_AS(sor_solve(p, 1.5, 0.0, 10), std::invalid_argument);
    REQUIRE_THROWS_AS(sor_solve(p, 1.5, 1e-4, 0), std::invalid_argument);

    auto bad = p;
    bad.forcing.at(4, 4) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(sor_solve(bad, 1.5, 1e-4, 10), std::invalid_argument);

    auto mismatched = p;
    mismatched.forcing = ScalarField(4, 4, 1.0);
    REQUIRE_THROWS_AS(sor_solve(mismatched, 1.5, 1e-4, 10), std::invalid_argument);
}
