#pragma once

#include "psafe/filter.hpp"

namespace psafe {

enum class Model { R1, R2 };
enum class Baseline { Poisson, Sdf };
enum class ForcingType { Holder, AvgFlux, Guidance };

struct ForcingSpec {
    ForcingType type = ForcingType::Guidance;
    double alpha = 0.1;  // Holder exponent
    double beta = 1.0;   // softplus sharpness
    BoundaryFluxSpec flux;
};

// Scripted rigid translation of one obstacle: piecewise-linear offset
// waypoints, clamped outside the scripted time range.
struct ObstacleScript {
    int obstacle = 0;
    std::vector<std::pair<double, Vec2>> waypoints;

    Vec2 offset_at(double t) const {
        if (waypoints.empty()) return {};
        if (t <= waypoints.front().first) return waypoints.front().second;
        for (size_t k = 1; k < waypoints.size(); ++k) {
            if (t <= waypoints[k].first) {
                const auto& [t0, p0] = waypoints[k - 1];
                const auto& [t1, p1] = waypoints[k];
                double a = t1 > t0 ? (t - t0) / (t1 - t0) : 1.0;
                return p0 + a * (p1 - p0);
            }
        }
        return waypoints.back().second;
    }
};

struct SimState {
    Vec2 y{};
    Vec2 ydot{};
};

struct Scenario {
    std::string map_path;
    double resolution = 0.0;  // 0: take from sidecar
    int threshold = 128;
    double buffer_radius = 0.0;
    Model model = Model::R1;
    std::vector<SimState> initial_states;
    Vec2 goal{};
    double kp = 1.0;
    double kd = 1.0;
    FilterParams filter;
    ForcingSpec forcing;
    double f_obs = 0.0;  // 0: |mean free forcing|
    SolverParams solver;
    double dt = 0.01;
    double duration = 10.0;
    double resolve_period = 0.0;  // 0: static
    std::vector<ObstacleScript> motion;
    Baseline baseline = Baseline::Poisson;

    void validate() const {
        if (dt <= 0) throw std::invalid_argument("dt must be > 0");
        if (duration <= 0) throw std::invalid_argument("duration must be > 0");
        if (resolve_period != 0 && resolve_period < dt)
            throw std::invalid_argument("resolve_period must be 0 or >= dt");
        if (initial_states.empty()) throw std::invalid_argument("no initial states");
        if (kp < 0 || kd < 0) throw std::invalid_argument("gains must be >= 0");
        filter.validate();
    }
};

struct TrajectoryRow {
    double t = 0.0;
    Vec2 y{};
    Vec2 ydot{};
    Vec2 u{};
    double h = 0.0;
    double h_b = 0.0;
    bool active = false;
    double min_dist = 0.0;
};

struct TrajectoryLog {
    std::vector<TrajectoryRow> rows;
};

// Goal-stabilizing nominal controller: proportional velocity for r=1,
// PD acceleration for r=2.
inline Vec2 nominal_pd(const SimState& state, Vec2 goal, double kp, double kd, Model model) {
    if (kp < 0 || kd < 0) throw std::invalid_argument("gains must be >= 0");
    Vec2 u = -kp * (state.y - goal);
    if (model == Model::R2) u += -kd * state.ydot;
    return u;
}

inline void write_trajectory_csv(const TrajectoryLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open for writing: " + path);
    os << "t,x,y,xd,yd,u_x,u_y,h,h_B,active,min_dist\n";
    for (const auto& r : log.rows) {
        os << detail::format_double(r.t) << ',' << detail::format_double(r.y.x) << ','
           << detail::format_double(r.y.y) << ',' << detail::format_double(r.ydot.x) << ','
           << detail::format_double(r.ydot.y) << ',' << detail::format_double(r.u.x) << ','
           << detail::format_double(r.u.y) << ',' << detail::format_double(r.h) << ','
           << detail::format_double(r.h_b) << ',' << (r.active ? 1 : 0) << ','
           << detail::format_double(r.min_dist) << '\n';
    }
}

// Sum of command increments along a run; larger values indicate chattering.
inline double control_total_variation(const TrajectoryLog& log) {
    double tv = 0.0;
    for (size_t k = 1; k < log.rows.size(); ++k)
        tv += (log.rows[k].u - log.rows[k - 1].u).norm();
    return tv;
}

namespace detail {

struct MovingObstacle {
    int original_id = 0;
    std::vector<std::pair<int, int>> cells;
    ObstacleScript script;
};

// Occupancy pipeline state for one run: the static occupied set, scripted
// obstacle cell sets, and the current decomposition/frame.
class ScenarioWorld {
public:
    ScenarioWorld(const Scenario& sc, const OccupancyGrid& buffered)
        : sc_(sc), grid_(buffered) {
        DomainDecomposition d0 = decompose_domain(grid_);
        rep_cells_.assign(d0.n_obs, {-1, -1});
        for (int j = 0; j < d0.ny && has_unset_rep(); ++j)
            for (int i = 0; i < d0.nx; ++i) {
                int32_t comp = d0.component[d0.idx(i, j)];
                if (comp >= 0 && rep_cells_[comp].first < 0) rep_cells_[comp] = {i, j};
            }

        static_occ_ = grid_.cells;
        for (const auto& script : sc.motion) {
            if (script.obstacle < 0 || script.obstacle >= d0.n_obs)
                throw std::invalid_argument("motion script references unknown obstacle " +
                                            std::to_string(script.obstacle));
            MovingObstacle mo;
            mo.original_id = script.obstacle;
            mo.script = script;
            for (int j = 0; j < d0.ny; ++j)
                for (int i = 0; i < d0.nx; ++i)
                    if (d0.component[d0.idx(i, j)] == script.obstacle) {
                        mo.cells.emplace_back(i, j);
                        static_occ_[grid_.idx(i, j)] = 0;
                    }
            movers_.push_back(std::move(mo));
        }
        rebuild(0.0, false);
    }

    void rebuild(double t, bool warm) {
        OccupancyGrid g = grid_;
        g.cells = static_occ_;
        std::vector<Vec2> offsets(movers_.size());
        for (size_t m = 0; m < movers_.size(); ++m) {
            offsets[m] = movers_[m].script.offset_at(t);
            int di = static_cast<int>(std::lround(offsets[m].x / g.resolution));
            int dj = static_cast<int>(std::lround(offsets[m].y / g.resolution));
            for (auto [i, j] : movers_[m].cells) {
                int ni = i + di, nj = j + dj;
                if (g.in_bounds(ni, nj)) g.cells[g.idx(ni, nj)] = 1;
            }
        }
        decomp = decompose_domain(g);
        clearance = obstacle_clearance(decomp);

        BoundaryFluxSpec flux = remap_flux(offsets);

        if (sc_.baseline == Baseline::Sdf) {
            ScalarField h = distance_field(decomp, DistanceMode::Signed);
            SafetyFrame next = frame_from_field(std::move(h), t, warm ? &frame : nullptr);
            frame = std::move(next);
            return;
        }

        ScalarField f_free;
        switch (sc_.forcing.type) {
            case ForcingType::Holder: {
                ScalarField dist = distance_field(decomp, DistanceMode::Unsigned);
                f_free = holder_forcing(dist, decomp, sc_.forcing.alpha);
                break;
            }
            case ForcingType::AvgFlux: {
                double f = average_flux_forcing(decomp, flux.default_flux);
                f_free = ScalarField(decomp.nx, decomp.ny, decomp.resolution, decomp.origin);
                for (size_t c = 0; c < f_free.values.size(); ++c)
                    if (decomp.labels[c] == CellLabel::Free) f_free.values[c] = f;
                break;
            }
            case ForcingType::Guidance: {
                VectorField v = solve_guidance_field(decomp, flux, sc_.solver,
                                                     has_guidance_ ? &guidance_ : nullptr);
                ScalarField div = divergence(v, decomp);
                f_free = softplus_forcing(div, decomp, sc_.forcing.beta);
                guidance_ = std::move(v);
                has_guidance_ = true;
                break;
            }
        }

        double f_obs = sc_.f_obs;
        if (f_obs <= 0) {
            double sum = 0.0;
            size_t cnt = 0;
            for (size_t c = 0; c < f_free.values.size(); ++c)
                if (decomp.labels[c] == CellLabel::Free) {
                    sum += f_free.values[c];
                    ++cnt;
                }
            f_obs = cnt ? std::abs(sum / cnt) : 1.0;
        }

        SafetyFrame next =
            assemble_frame(decomp, f_free, f_obs, sc_.solver, t, warm ? &frame : nullptr);
        frame = std::move(next);
    }

    DomainDecomposition decomp;
    SafetyFrame frame;
    ScalarField clearance;

private:
    bool has_unset_rep() const {
        for (const auto& rc : rep_cells_)
            if (rc.first < 0) return true;
        return false;
    }

    // Per-obstacle flux overrides are keyed by the t=0 component ids; moving
    // obstacles are re-identified through a representative shifted cell.
    BoundaryFluxSpec remap_flux(const std::vector<Vec2>& offsets) const {
        BoundaryFluxSpec out;
        out.default_flux = sc_.forcing.flux.default_flux;
        for (const auto& [orig, value] : sc_.forcing.flux.overrides) {
            if (orig < 0 || orig >= static_cast<int>(rep_cells_.size()))
                throw std::invalid_argument("flux override references unknown obstacle " +
                                            std::to_string(orig));
            auto [ri, rj] = rep_cells_[orig];
            for (size_t m = 0; m < movers_.size(); ++m) {
                if (movers_[m].original_id != orig) continue;
                int di = static_cast<int>(std::lround(offsets[m].x / grid_.resolution));
                int dj = static_cast<int>(std::lround(offsets[m].y / grid_.resolution));
                ri = -1;
                for (auto [i, j] : movers_[m].cells) {
                    if (grid_.in_bounds(i + di, j + dj)) {
                        ri = i + di;
                        rj = j + dj;
                        break;
                    }
                }
                break;
            }
            if (ri < 0) continue;  // obstacle left the grid entirely
            int32_t comp = decomp.component[decomp.idx(ri, rj)];
            if (comp >= 0 && !out.overrides.count(comp)) out.overrides[comp] = value;
        }
        return out;
    }

    const Scenario& sc_;
    OccupancyGrid grid_;
    std::vector<uint8_t> static_occ_;
    std::vector<MovingObstacle> movers_;
    std::vector<std::pair<int, int>> rep_cells_;
    VectorField guidance_;
    bool has_guidance_ = false;
};

}  // namespace detail

// Scenario file schema (JSON): map, resolution, threshold, buffer_radius,
// model ("r1"|"r2"), initial_states ([x,y] or [x,y,vx,vy]), goal, kp, kd,
// filter {gamma, sigma, mu1, use_dhdt}, forcing {type, alpha, beta, bflux,
// bflux_obs}, f_obs, solver {tol, max_iter, omega}, dt, duration,
// resolve_period, obstacle_motion, baseline ("poisson"|"sdf").
inline Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open scenario: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad scenario json in " + path + ": " + e.what());
    }

    try {
        Scenario sc;
        sc.map_path = j.at("map").get<std::string>();
        if (sc.map_path.find('/') == std::string::npos) {
            // relative to the scenario file
            auto dir = std::filesystem::path(path).parent_path();
            if (!dir.empty()) sc.map_path = (dir / sc.map_path).string();
        }
        sc.resolution = j.value("resolution", 0.0);
        sc.threshold = j.value("threshold", 128);
        sc.buffer_radius = j.value("buffer_radius", 0.0);
        std::string model = j.value("model", "r1");
        if (model == "r1")
            sc.model = Model::R1;
        else if (model == "r2")
            sc.model = Model::R2;
        else
            throw FormatError("unknown model '" + model + "'");

        for (const auto& st : j.at("initial_states")) {
            if (!st.is_array() || (st.size() != 2 && st.size() != 4))
                throw FormatError("initial state must be [x,y] or [x,y,vx,vy]");
            SimState s;
            s.y = {st[0].get<double>(), st[1].get<double>()};
            if (st.size() == 4) s.ydot = {st[2].get<double>(), st[3].get<double>()};
            sc.initial_states.push_back(s);
        }
        auto goal = j.at("goal");
        sc.goal = {goal.at(0).get<double>(), goal.at(1).get<double>()};
        sc.kp = j.value("kp", 1.0);
        sc.kd = j.value("kd", 1.0);

        if (j.contains("filter")) {
            const auto& f = j["filter"];
            sc.filter.gamma = f.value("gamma", 1.0);
            sc.filter.sigma = f.value("sigma", 1.0);
            sc.filter.mu1 = f.value("mu1", 1.0);
            sc.filter.use_dhdt = f.value("use_dhdt", false);
        }
        if (j.contains("forcing")) {
            const auto& f = j["forcing"];
            std::string type = f.value("type", "guidance");
            if (type == "holder")
                sc.forcing.type = ForcingType::Holder;
            else if (type == "avgflux")
                sc.forcing.type = ForcingType::AvgFlux;
            else if (type == "guidance")
                sc.forcing.type = ForcingType::Guidance;
            else
                throw FormatError("unknown forcing type '" + type + "'");
            sc.forcing.alpha = f.value("alpha", 0.1);
            sc.forcing.beta = f.value("beta", 1.0);
            sc.forcing.flux.default_flux = f.value("bflux", -1.0);
            if (f.contains("bflux_obs"))
                for (const auto& [key, val] : f["bflux_obs"].items())
                    sc.forcing.flux.overrides[std::stoi(key)] = val.get<double>();
        }
        sc.f_obs = j.value("f_obs", 0.0);
        if (j.contains("solver")) {
            const auto& s = j["solver"];
            sc.solver.tol = s.value("tol", 1e-4);
            sc.solver.max_iter = s.value("max_iter", 0);
            sc.solver.omega = s.value("omega", 0.0);
        }
        sc.dt = j.value("dt", 0.01);
        sc.duration = j.value("duration", 10.0);
        sc.resolve_period = j.value("resolve_period", sc.motion.empty() ? 0.0 : 0.1);
        if (j.contains("obstacle_motion")) {
            for (const auto& m : j["obstacle_motion"]) {
                ObstacleScript script;
                script.obstacle = m.at("obstacle").get<int>();
                for (const auto& wp : m.at("waypoints")) {
                    auto off = wp.at("offset");
                    script.waypoints.emplace_back(
                        wp.at("t").get<double>(),
                        Vec2{off.at(0).get<double>(), off.at(1).get<double>()});
                }
                sc.motion.push_back(std::move(script));
            }
            if (!j.contains("resolve_period") && !sc.motion.empty()) sc.resolve_period = 0.1;
        }
        std::string baseline = j.value("baseline", "poisson");
        if (baseline == "poisson")
            sc.baseline = Baseline::Poisson;
        else if (baseline == "sdf")
            sc.baseline = Baseline::Sdf;
        else
            throw FormatError("unknown baseline '" + baseline + "'");
        return sc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad scenario " + path + ": " + e.what());
    }
}

// Integrates each initial state under the filtered nominal controller with
// semi-implicit Euler steps, re-solving the safety function on the scripted
// schedule. Returns one log per initial state.
inline std::vector<TrajectoryLog> run_scenario(const Scenario& sc) {
    sc.validate();
    double res = sc.resolution;
    if (res <= 0) {
        auto sidecar = load_sidecar(sc.map_path);
        if (sidecar && sidecar->resolution) res = *sidecar->resolution;
    }
    if (res <= 0) throw std::invalid_argument("scenario resolution missing");
    OccupancyGrid raw = load_occupancy(sc.map_path, res, sc.threshold);
    if (auto sidecar = load_sidecar(sc.map_path); sidecar && sidecar->origin)
        raw.origin = *sidecar->origin;
    OccupancyGrid buffered =
        sc.buffer_radius > 0 ? buffer_obstacles(raw, sc.buffer_radius) : raw;

    const long long steps = std::llround(sc.duration / sc.dt);
    const long long resolve_every =
        sc.resolve_period > 0 ? std::llround(sc.resolve_period / sc.dt) : 0;

    std::vector<TrajectoryLog> logs;
    for (const SimState& init : sc.initial_states) {
        detail::ScenarioWorld world(sc, buffered);

        Probe p0 = sample(world.frame, init.y);
        if (p0.h <= 0)
            throw DomainError("initial state is unsafe: h = " + detail::format_double(p0.h));
        if (sc.model == Model::R2) {
            BackstepEval ev = backstep_eval(p0, init.ydot, sc.filter);
            if (ev.h_b <= 0)
                throw DomainError("initial state is outside the backstepping safe set: h_B = " +
                                  detail::format_double(ev.h_b));
        }

        TrajectoryLog log;
        log.rows.reserve(steps + 1);
        SimState state = init;
        for (long long k = 0; k <= steps; ++k) {
            double t = k * sc.dt;
            if (resolve_every > 0 && k > 0 && k % resolve_every == 0) world.rebuild(t, true);

            Probe probe = sample(world.frame, state.y);
            Vec2 nominal = nominal_pd(state, sc.goal, sc.kp, sc.kd, sc.model);
            FilterResult fr = sc.model == Model::R1
                                  ? filter_r1(probe, nominal, sc.filter)
                                  : filter_r2(probe, state.ydot, nominal, sc.filter);

            TrajectoryRow row;
            row.t = t;
            row.y = state.y;
            row.ydot = sc.model == Model::R1 ? fr.command : state.ydot;
            row.u = fr.command;
            row.h = fr.h;
            row.h_b = fr.h_b;
            row.active = fr.active;
            row.min_dist = world.clearance.sample(state.y);
            log.rows.push_back(row);

            if (k == steps) break;
            if (sc.model == Model::R1) {
                state.y += fr.command * sc.dt;
                state.ydot = fr.command;
            } else {
                state.ydot += fr.command * sc.dt;
                state.y += state.ydot * sc.dt;
            }
        }
        logs.push_back(std::move(log));
    }
    return logs;
}

}  // namespace psafe
