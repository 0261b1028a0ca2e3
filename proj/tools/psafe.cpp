// psafe: Poisson safety functions for occupancy maps, and CBF safety filters
// built on top of them.
//
// Subcommands: solve, guidance, sdf, simulate, check. Fields go to CSV files,
// stats and reports go to stdout as JSON. PSAFE_THREADS caps solver sweep
// parallelism (0 = auto).

#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "psafe/psafe.hpp"

namespace {

using nlohmann::json;

struct MapOptions {
    std::string map_path;
    double resolution = 0.0;
    double buffer_radius = 0.0;
};

struct ForcingOptions {
    std::string type = "avgflux";
    double alpha = 0.1;
    double beta = 1.0;
    double bflux = -1.0;
    std::vector<std::string> bflux_obs;
};

struct SolveOptions {
    double tol = 1e-4;
    int max_iter = 0;
    double omega = 0.0;
};

void add_map_flags(CLI::App* cmd, MapOptions& mo) {
    cmd->add_option("--map", mo.map_path, "occupancy map (PGM P2/P5)")->required();
    cmd->add_option("--res", mo.resolution, "cell size in meters (default: map sidecar)");
    cmd->add_option("--buffer", mo.buffer_radius, "obstacle dilation radius in meters");
}

void add_forcing_flags(CLI::App* cmd, ForcingOptions& fo) {
    cmd->add_option("--forcing", fo.type, "forcing construction")
        ->check(CLI::IsMember({"holder", "avgflux", "guidance"}));
    cmd->add_option("--alpha", fo.alpha, "Holder exponent in (0,1)");
    cmd->add_option("--beta", fo.beta, "softplus sharpness");
    cmd->add_option("--bflux", fo.bflux, "default boundary flux (negative)");
    cmd->add_option("--bflux-obs", fo.bflux_obs, "per-obstacle flux override i=value");
}

void add_solver_flags(CLI::App* cmd, SolveOptions& so) {
    cmd->add_option("--tol", so.tol, "max residual tolerance");
    cmd->add_option("--max-iter", so.max_iter, "iteration cap (0: 50*N)");
    cmd->add_option("--omega", so.omega, "SOR relaxation factor (0: optimal)");
}

psafe::OccupancyGrid load_map(const MapOptions& mo) {
    double res = mo.resolution;
    auto sidecar = psafe::load_sidecar(mo.map_path);
    if (res <= 0 && sidecar && sidecar->resolution) res = *sidecar->resolution;
    if (res <= 0)
        throw std::invalid_argument("no resolution: pass --res or provide a map sidecar");
    psafe::OccupancyGrid g = psafe::load_occupancy(mo.map_path, res);
    if (sidecar && sidecar->origin) g.origin = *sidecar->origin;
    if (mo.buffer_radius > 0) g = psafe::buffer_obstacles(g, mo.buffer_radius);
    return g;
}

psafe::BoundaryFluxSpec flux_spec(const ForcingOptions& fo) {
    psafe::BoundaryFluxSpec spec;
    spec.default_flux = fo.bflux;
    for (const auto& kv : fo.bflux_obs) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--bflux-obs expects i=value, got '" + kv + "'");
        spec.overrides[std::stoi(kv.substr(0, eq))] = std::stod(kv.substr(eq + 1));
    }
    spec.validate();
    return spec;
}

psafe::ScalarField build_forcing(const psafe::DomainDecomposition& dd, const ForcingOptions& fo,
                                 const psafe::SolverParams& params) {
    if (fo.type == "holder") {
        auto dist = psafe::distance_field(dd, psafe::DistanceMode::Unsigned);
        return psafe::holder_forcing(dist, dd, fo.alpha);
    }
    if (fo.type == "avgflux") {
        double f = psafe::average_flux_forcing(dd, fo.bflux);
        psafe::ScalarField field(dd.nx, dd.ny, dd.resolution, dd.origin);
        for (size_t c = 0; c < field.values.size(); ++c)
            if (dd.labels[c] == psafe::CellLabel::Free) field.values[c] = f;
        return field;
    }
    auto v = psafe::solve_guidance_field(dd, flux_spec(fo), params);
    return psafe::softplus_forcing(psafe::divergence(v, dd), dd, fo.beta);
}

double default_obstacle_forcing(const psafe::DomainDecomposition& dd,
                                const psafe::ScalarField& f_free) {
    double sum = 0.0;
    size_t cnt = 0;
    for (size_t c = 0; c < f_free.values.size(); ++c)
        if (dd.labels[c] == psafe::CellLabel::Free) {
            sum += f_free.values[c];
            ++cnt;
        }
    return cnt ? std::abs(sum / cnt) : 1.0;
}

json stats_json(const psafe::SolveStats& s) {
    return json{{"iterations", s.iterations},
                {"residual", s.residual},
                {"omega", s.omega},
                {"warm_started", s.warm_started},
                {"wall_time_s", s.wall_time_s}};
}

int cmd_solve(const MapOptions& mo, const ForcingOptions& fo, const SolveOptions& so,
              const std::string& warm_path, const std::string& out_path) {
    auto grid = load_map(mo);
    auto dd = psafe::decompose_domain(grid);
    psafe::SolverParams params{so.tol, so.max_iter, so.omega};
    auto f_free = build_forcing(dd, fo, params);
    double f_obs = default_obstacle_forcing(dd, f_free);

    std::optional<psafe::SafetyFrame> prev;
    if (!warm_path.empty()) prev = psafe::frame_from_field(psafe::read_csv(warm_path), -1.0);
    auto frame =
        psafe::assemble_frame(dd, f_free, f_obs, params, 0.0, prev ? &*prev : nullptr);
    psafe::write_csv(frame.h, out_path);

    json out{{"free", stats_json(frame.free_stats)},
             {"n_obs", dd.n_obs},
             {"perimeter_m", dd.perimeter},
             {"free_area_m2", dd.free_area},
             {"iterations", frame.free_stats.iterations},
             {"residual", frame.free_stats.residual},
             {"out", out_path}};
    if (frame.obstacle_stats) out["obstacles"] = stats_json(*frame.obstacle_stats);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_guidance(const MapOptions& mo, const ForcingOptions& fo, const SolveOptions& so,
                 const std::string& out_prefix) {
    auto grid = load_map(mo);
    auto dd = psafe::decompose_domain(grid);
    psafe::SolverParams params{so.tol, so.max_iter, so.omega};
    auto v = psafe::solve_guidance_field(dd, flux_spec(fo), params);
    std::string vx = out_prefix + "_vx.csv", vy = out_prefix + "_vy.csv";
    psafe::write_csv(v.x, vx);
    psafe::write_csv(v.y, vy);
    json out{{"vx", vx}, {"vy", vy}};
    if (v.x.stats) out["vx_stats"] = stats_json(*v.x.stats);
    if (v.y.stats) out["vy_stats"] = stats_json(*v.y.stats);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_sdf(const MapOptions& mo, const std::string& out_path) {
    auto grid = load_map(mo);
    auto dd = psafe::decompose_domain(grid);
    psafe::write_csv(psafe::distance_field(dd, psafe::DistanceMode::Signed), out_path);
    std::cout << json{{"out", out_path}, {"n_obs", dd.n_obs}}.dump(2) << "\n";
    return 0;
}

int cmd_simulate(const std::string& scenario_path, const std::string& baseline,
                 const std::string& out_prefix) {
    psafe::Scenario sc = psafe::load_scenario(scenario_path);
    if (!baseline.empty())
        sc.baseline = baseline == "sdf" ? psafe::Baseline::Sdf : psafe::Baseline::Poisson;
    auto logs = psafe::run_scenario(sc);

    json out = json::array();
    for (size_t k = 0; k < logs.size(); ++k) {
        std::string path = out_prefix + "_ic" + std::to_string(k) + ".csv";
        psafe::write_trajectory_csv(logs[k], path);
        double min_h = std::numeric_limits<double>::infinity();
        double min_hb = std::numeric_limits<double>::infinity();
        for (const auto& r : logs[k].rows) {
            min_h = std::min(min_h, r.h);
            min_hb = std::min(min_hb, r.h_b);
        }
        out.push_back(json{{"log", path},
                           {"rows", logs[k].rows.size()},
                           {"min_h", min_h},
                           {"min_h_B", min_hb},
                           {"final_goal_dist", (logs[k].rows.back().y - sc.goal).norm()},
                           {"control_total_variation", control_total_variation(logs[k])}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_check(const MapOptions& mo, const ForcingOptions& fo, const SolveOptions& so) {
    auto grid = load_map(mo);
    auto dd = psafe::decompose_domain(grid);
    psafe::SolverParams params{so.tol, so.max_iter, so.omega};
    auto f_free = build_forcing(dd, fo, params);
    double f_obs = default_obstacle_forcing(dd, f_free);
    auto frame = psafe::assemble_frame(dd, f_free, f_obs, params, 0.0);

    auto rep = psafe::check_positivity_and_hopf(frame, dd);
    double div_err = psafe::check_divergence(frame, dd, f_free);
    double energy_gap = psafe::check_dirichlet_energy(frame, dd, f_free, 100);

    json out{{"min_free_h", rep.min_free_h},
             {"max_obstacle_h", rep.obstacle_interior_cells ? json(rep.max_obstacle_h) : json()},
             {"max_boundary_outward_derivative", rep.max_boundary_outward_derivative},
             {"divergence_rel_error", div_err},
             {"dirichlet_energy_worst_gap", energy_gap},
             {"iterations", frame.free_stats.iterations},
             {"residual", frame.free_stats.residual}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Poisson safety functions and CBF safety filters for 2D occupancy maps"};
    app.require_subcommand(1);

    MapOptions mo;
    ForcingOptions fo;
    SolveOptions so;
    std::string out_path;
    std::string warm_path;
    std::string scenario_path;
    std::string baseline;

    auto* solve = app.add_subcommand("solve", "solve the safety function on a map");
    add_map_flags(solve, mo);
    add_forcing_flags(solve, fo);
    add_solver_flags(solve, so);
    solve->add_option("--warm", warm_path, "warm-start field CSV from a previous solve");
    solve->add_option("--out", out_path, "output field CSV");

    auto* guidance = app.add_subcommand("guidance", "solve the guidance vector field");
    add_map_flags(guidance, mo);
    add_forcing_flags(guidance, fo);
    add_solver_flags(guidance, so);
    guidance->add_option("--out", out_path, "output prefix for <out>_vx.csv, <out>_vy.csv");

    auto* sdf = app.add_subcommand("sdf", "signed Euclidean distance field");
    add_map_flags(sdf, mo);
    sdf->add_option("--out", out_path, "output field CSV");

    auto* simulate = app.add_subcommand("simulate", "run a scenario and log trajectories");
    simulate->add_option("--scenario", scenario_path, "scenario JSON")->required();
    simulate->add_option("--baseline", baseline, "override the scenario baseline")
        ->check(CLI::IsMember({"poisson", "sdf"}));
    simulate->add_option("--out", out_path, "output prefix for trajectory CSVs");

    auto* check = app.add_subcommand("check", "solve and print the invariant check report");
    add_map_flags(check, mo);
    add_forcing_flags(check, fo);
    add_solver_flags(check, so);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (solve->parsed()) return cmd_solve(mo, fo, so, warm_path,
                                              out_path.empty() ? "h.csv" : out_path);
        if (guidance->parsed())
            return cmd_guidance(mo, fo, so, out_path.empty() ? "guidance" : out_path);
        if (sdf->parsed()) return cmd_sdf(mo, out_path.empty() ? "sdf.csv" : out_path);
        if (simulate->parsed())
            return cmd_simulate(scenario_path, baseline, out_path.empty() ? "traj" : out_path);
        if (check->parsed()) return cmd_check(mo, fo, so);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
