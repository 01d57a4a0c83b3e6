#include "fanodyn/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fanodyn/correlations.hpp"
#include "fanodyn/csv.hpp"
#include "fanodyn/errors.hpp"
#include "fanodyn/mastereq.hpp"
#include "fanodyn/util.hpp"

namespace fanodyn::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string checksum_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(util::fnv1a64(data.data(), data.size())));
    return buf;
}

void matrix_headers(std::vector<std::string>& h, const std::string& base, int N) {
    if (N == 1) {
        h.push_back("re_" + base);
        h.push_back("im_" + base);
        return;
    }
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            h.push_back("re_" + base + "_" + std::to_string(i) + "_" + std::to_string(j));
            h.push_back("im_" + base + "_" + std::to_string(i) + "_" + std::to_string(j));
        }
}

void matrix_values(std::vector<double>& row, const Matrix& m) {
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j).real());
            row.push_back(m(i, j).imag());
        }
}

struct Context {
    const Scenario& sc;
    fs::path out;
    int threads = 1;
    greens::GreenFunctions gf;
    bool have_u = false, have_v = false;
    me::MECoefficients coeffs;
    bool have_coeffs = false;
    greens::BoundStateResult bound;
    bool have_bound = false;
    std::vector<int> measure_anchor_steps;
    std::vector<int> measure_lag_steps;
};

greens::SolverOptions solver_options(const Context& ctx) {
    greens::SolverOptions o;
    o.threads = ctx.threads;
    return o;
}

std::vector<double> measure_anchor_times(const Context& ctx, double tau_max) {
    if (!ctx.sc.measure_anchors.empty()) return ctx.sc.measure_anchors;
    const double t_hi = ctx.sc.grid.t_max() - tau_max;
    const double t_lo = std::max(ctx.sc.grid.dt * 10.0, t_hi / 50.0);
    std::vector<double> anchors;
    for (int i = 0; i < 8; ++i)
        anchors.push_back(t_lo * std::pow(t_hi / t_lo, i / 7.0));
    return anchors;
}

void ensure_u(Context& ctx) {
    if (ctx.have_u) return;
    ctx.gf = greens::solve_u(ctx.sc.system, ctx.sc.grid, solver_options(ctx));
    ctx.have_u = true;
}

void ensure_v(Context& ctx, TaskReport& rep) {
    ensure_u(ctx);
    if (ctx.have_v) return;
    std::vector<double> anchors;
    if (ctx.sc.has_task(Task::Measure)) {
        const double tau_max =
            ctx.sc.measure_tau_max > 0.0 ? ctx.sc.measure_tau_max : ctx.sc.grid.t_max() / 5.0;
        for (double t : measure_anchor_times(ctx, tau_max)) anchors.push_back(t);
    }
    greens::SolverOptions o = solver_options(ctx);
    o.cross_check = true;
    solve_v(ctx.sc.system, ctx.gf, anchors, ctx.sc.v_stride, o);
    for (const auto& n : ctx.gf.notes) rep.warnings.push_back(n);
    ctx.have_v = true;
}

void ensure_coeffs(Context& ctx, TaskReport& rep) {
    ensure_v(ctx, rep);
    if (ctx.have_coeffs) return;
    ctx.coeffs = me::compute_coefficients(ctx.gf);
    for (const auto& n : ctx.coeffs.notes) rep.warnings.push_back(n);
    ctx.have_coeffs = true;
}

void ensure_bound(Context& ctx, TaskReport& rep) {
    if (ctx.have_bound) return;
    ctx.bound = greens::find_bound_states(ctx.sc.system);
    for (const auto& n : ctx.bound.notes) rep.warnings.push_back(n);
    ctx.have_bound = true;
}

// ---- individual tasks ------------------------------------------------------

void task_u(Context& ctx, TaskReport&, std::vector<std::string>& files) {
    ensure_u(ctx);
    const int N = ctx.sc.system.levels();
    std::vector<std::string> header{"t"};
    matrix_headers(header, "u", N);
    if (N == 1) header.push_back("abs_u");
    CsvWriter w((ctx.out / "u.csv").string(), header, ctx.sc.output_precision);
    for (int k = 0; k <= ctx.sc.grid.n_steps; ++k) {
        std::vector<double> row{ctx.sc.grid.time(k)};
        matrix_values(row, ctx.gf.u[k]);
        if (N == 1) row.push_back(std::abs(ctx.gf.u[k](0, 0)));
        w.row(row);
    }
    files.push_back("u.csv");
}

void task_v(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    ensure_v(ctx, rep);
    const int N = ctx.sc.system.levels();
    std::vector<std::string> header{"t"};
    matrix_headers(header, "v", N);
    CsvWriter w((ctx.out / "v.csv").string(), header, ctx.sc.output_precision);
    for (std::size_t m = 0; m < ctx.gf.v_diag.size(); ++m) {
        std::vector<double> row{ctx.sc.grid.time(static_cast<int>(m) * ctx.gf.v_stride)};
        matrix_values(row, ctx.gf.v_diag[m]);
        w.row(row);
    }
    files.push_back("v.csv");
}

void task_coefficients(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    ensure_coeffs(ctx, rep);
    const int N = ctx.sc.system.levels();
    std::vector<std::string> header{"t"};
    if (N == 1) {
        header.insert(header.end(), {"eps_prime", "gamma", "gamma_tilde", "finite"});
    } else {
        matrix_headers(header, "eps_prime", N);
        matrix_headers(header, "gamma", N);
        matrix_headers(header, "gamma_tilde", N);
        header.push_back("finite");
    }
    CsvWriter w((ctx.out / "coefficients.csv").string(), header, ctx.sc.output_precision);
    for (int k = 0; k <= ctx.sc.grid.n_steps; ++k) {
        std::vector<double> row{ctx.sc.grid.time(k)};
        if (N == 1) {
            row.push_back(ctx.coeffs.eps_prime[k](0, 0).real());
            row.push_back(ctx.coeffs.gamma[k](0, 0).real());
            row.push_back(ctx.coeffs.gamma_tilde[k](0, 0).real());
        } else {
            matrix_values(row, ctx.coeffs.eps_prime[k]);
            matrix_values(row, ctx.coeffs.gamma[k]);
            matrix_values(row, ctx.coeffs.gamma_tilde[k]);
        }
        row.push_back(ctx.coeffs.finite[k] ? 1.0 : 0.0);
        w.row(row);
    }
    files.push_back("coefficients.csv");
}

me::DensityMatrix initial_density(const Scenario& sc) {
    const int N = sc.system.levels();
    if (sc.system.statistics == Statistics::Boson) {
        if (N != 1)
            throw PreconditionError("rho task: boson Fock propagation is single-mode only");
        const double n0 = sc.initial_occupation(0, 0).real();
        int cutoff = sc.boson_cutoff > 0
                         ? sc.boson_cutoff
                         : std::max(20, static_cast<int>(std::ceil(10.0 * (n0 + 1.0))));
        if (sc.initial_state.rfind("fock:", 0) == 0)
            return me::DensityMatrix::boson_fock(std::stoi(sc.initial_state.substr(5)), cutoff);
        if (sc.initial_state.rfind("coherent:", 0) == 0) {
            const std::string arg = sc.initial_state.substr(9);
            const auto comma = arg.find(',');
            const double re = std::stod(arg.substr(0, comma));
            const double im = comma == std::string::npos ? 0.0 : std::stod(arg.substr(comma + 1));
            return me::DensityMatrix::boson_coherent(Complex{re, im}, cutoff);
        }
        if (!sc.initial_state.empty())
            throw std::invalid_argument("rho task: boson initial_state must be fock:<n> or "
                                        "coherent:<re>[,<im>]");
        return me::DensityMatrix::boson_fock(static_cast<int>(std::lround(n0)), cutoff);
    }
    std::vector<double> occ(N, 0.0);
    if (sc.initial_state == "occupied")
        std::fill(occ.begin(), occ.end(), 1.0);
    else if (sc.initial_state.empty() || sc.initial_state == "empty")
        for (int i = 0; i < N; ++i) occ[i] = sc.initial_occupation(i, i).real();
    else
        throw std::invalid_argument("rho task: fermion initial_state must be occupied or empty");
    return me::DensityMatrix::fermion_diag(occ);
}

void task_rho(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    ensure_coeffs(ctx, rep);
    me::DensityMatrix rho0 = initial_density(ctx.sc);
    me::RhoTrajectory traj = me::propagate_rho(rho0, ctx.coeffs);
    for (const auto& wrn : traj.warnings) rep.warnings.push_back(wrn);

    const me::LadderSet ops = rho0.statistics == Statistics::Boson
                                  ? me::LadderSet::boson(rho0.boson_cutoff)
                                  : me::LadderSet::fermion(rho0.modes);
    const int d = ops.dim();
    std::vector<std::string> header{"t", "trace_dev", "purity", "n_expect"};
    for (int i = 0; i < d; ++i) header.push_back("p_" + std::to_string(i));
    CsvWriter w((ctx.out / "rho.csv").string(), header, ctx.sc.output_precision);
    Matrix number = Matrix::Zero(d, d);
    for (std::size_t m = 0; m < ops.a.size(); ++m) number += ops.adag[m] * ops.a[m];
    for (std::size_t s = 0; s < traj.rho.size(); ++s) {
        const Matrix& r = traj.rho[s];
        std::vector<double> row{traj.grid.time(static_cast<int>(s)),
                                 std::abs(r.trace().real() - 1.0) + std::abs(r.trace().imag()),
                                 (r * r).trace().real(), (number * r).trace().real()};
        for (int i = 0; i < d; ++i) row.push_back(r(i, i).real());
        w.row(row);
    }
    files.push_back("rho.csv");
    rep.warnings.push_back("trace drift " + util::format_double(traj.max_trace_drift, 3) +
                           ", min eigenvalue " + util::format_double(traj.min_eigenvalue, 3));
}

void task_bound_states(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    ensure_bound(ctx, rep);
    CsvWriter w((ctx.out / "bound_states.csv").string(), {"energy", "residue", "near_edge"},
                ctx.sc.output_precision);
    for (const auto& b : ctx.bound.states)
        w.row({b.energy, b.residue, b.near_edge ? 1.0 : 0.0});
    files.push_back("bound_states.csv");
}

void task_spectra(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    ensure_bound(ctx, rep);
    const auto support = ctx.sc.system.total_support();
    double lo, hi;
    if (support.empty()) {
        lo = ctx.sc.system.scalar_energy() - 2.0;
        hi = ctx.sc.system.scalar_energy() + 2.0;
    } else {
        const double pad = 0.25 * (support.back().hi - support.front().lo) + 1.0;
        lo = support.front().lo - pad;
        hi = support.back().hi + pad;
    }
    if (ctx.sc.spectra_min) lo = *ctx.sc.spectra_min;
    if (ctx.sc.spectra_max) hi = *ctx.sc.spectra_max;
    const double ts = ctx.sc.spectra_ts > 0.0 ? ctx.sc.spectra_ts : ctx.sc.grid.t_max();

    CsvWriter w((ctx.out / "spectra.csv").string(), {"energy", "J", "lamb_shift", "dissipation", "chi"},
                ctx.sc.output_precision);
    for (int i = 0; i <= ctx.sc.spectra_points; ++i) {
        const double e = lo + (hi - lo) * i / ctx.sc.spectra_points;
        double delta = 0.0, dd = 0.0, chi = 0.0;
        try {
            delta = ctx.sc.system.total_lamb_shift(e);
            dd = greens::dissipation_spectrum(ctx.sc.system, e);
            chi = greens::steady_fluctuation_spectrum(ctx.sc.system, ctx.bound.states, e, ts);
        } catch (const std::exception&) {
            // band-edge or pole evaluations: leave zeros
        }
        w.row({e, ctx.sc.system.total_J(e), delta, dd, chi});
    }
    files.push_back("spectra.csv");
}

void task_occupation(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    ensure_v(ctx, rep);
    const int N = ctx.sc.system.levels();
    auto occ = me::occupation(ctx.gf, ctx.sc.initial_occupation);
    std::vector<std::string> header{"t"};
    matrix_headers(header, "n", N);
    if (N == 1) header = {"t", "n"};
    CsvWriter w((ctx.out / "occupation.csv").string(), header, ctx.sc.output_precision);
    for (std::size_t m = 0; m < occ.size(); ++m) {
        std::vector<double> row{ctx.sc.grid.time(static_cast<int>(m) * ctx.gf.v_stride)};
        if (N == 1)
            row.push_back(occ[m](0, 0).real());
        else
            matrix_values(row, occ[m]);
        w.row(row);
    }
    files.push_back("occupation.csv");
}

void task_measure(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    if (!ctx.sc.system.scalar())
        throw PreconditionError("measure task: scalar systems only");
    const double tau_max =
        ctx.sc.measure_tau_max > 0.0 ? ctx.sc.measure_tau_max : ctx.sc.grid.t_max() / 5.0;
    ensure_v(ctx, rep);

    ctx.measure_anchor_steps.clear();
    for (double t : measure_anchor_times(ctx, tau_max)) {
        int k = static_cast<int>(std::lround((t - ctx.sc.grid.t0) / ctx.sc.grid.dt));
        k = std::clamp(k, 0, ctx.sc.grid.n_steps);
        if (ctx.gf.v_slices.count(k)) ctx.measure_anchor_steps.push_back(k);
    }
    const int lag_max = std::min(static_cast<int>(std::lround(tau_max / ctx.sc.grid.dt)),
                                 ctx.sc.grid.n_steps);
    ctx.measure_lag_steps.clear();
    for (int l = 0; l <= lag_max; ++l) ctx.measure_lag_steps.push_back(l);
    // Keep anchors whose lags stay on the grid.
    std::vector<int> anchors;
    for (int a : ctx.measure_anchor_steps)
        if (a + lag_max <= ctx.sc.grid.n_steps) anchors.push_back(a);

    const double n0 = ctx.sc.initial_occupation(0, 0).real();
    auto exact = corr::exact_series(ctx.gf, n0, anchors, ctx.measure_lag_steps);
    auto bm_p = corr::bm_reference(ctx.sc.system);
    auto bm = corr::bm_series(bm_p, n0, ctx.sc.grid.dt, anchors, ctx.measure_lag_steps);
    auto m = corr::nonmarkov_measure(exact, bm);

    CsvWriter w((ctx.out / "measure.csv").string(),
                {"t", "tau", "measure", "defined", "re_exact_norm", "im_exact_norm", "re_bm_norm",
                 "im_bm_norm"},
                ctx.sc.output_precision);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        for (std::size_t l = 0; l < ctx.measure_lag_steps.size(); ++l) {
            w.row({ctx.sc.grid.time(anchors[a]), ctx.sc.grid.dt * ctx.measure_lag_steps[l],
                   m.value[a][l], m.defined[a][l] ? 1.0 : 0.0, exact.normalized[a][l].real(),
                   exact.normalized[a][l].imag(), bm.normalized[a][l].real(),
                   bm.normalized[a][l].imag()});
        }
    }
    files.push_back("measure.csv");
}

models::SpecialModel make_model(const Scenario& sc, models::SpecialModelKind kind) {
    models::SpecialModel m;
    m.kind = kind;
    m.bath = sc.system.reservoirs.front().reservoir;
    m.epsilon = sc.model_epsilon;
    return m;
}

void task_model_spin(Context& ctx, TaskReport&, std::vector<std::string>& files) {
    auto m = make_model(ctx.sc, models::SpecialModelKind::SpinZeroT);
    Matrix rho0(2, 2);
    rho0 << 1, 0, 0, 0;  // excited
    auto traj = models::spin_zero_T_dynamics(m, ctx.sc.grid, rho0);
    CsvWriter w((ctx.out / "model_spin_zero_T.csv").string(),
                {"t", "eps_prime", "gamma", "abs_u", "p_excited", "re_coherence", "im_coherence"},
                ctx.sc.output_precision);
    for (std::size_t s = 0; s < traj.rho.size(); ++s) {
        const int k = 2 * static_cast<int>(s);
        w.row({traj.grid.time(static_cast<int>(s)), traj.eps_prime[k], traj.gamma[k],
               std::abs(traj.u[k]), traj.rho[s](0, 0).real(), traj.rho[s](0, 1).real(),
               traj.rho[s](0, 1).imag()});
    }
    files.push_back("model_spin_zero_T.csv");
}

void task_model_dephasing(Context& ctx, TaskReport&, std::vector<std::string>& files) {
    auto m = make_model(ctx.sc, models::SpecialModelKind::PureDephasing);
    Matrix rho0(2, 2);
    rho0 << 0.5, 0.5, 0.5, 0.5;  // equal superposition
    auto traj = models::dephasing_dynamics(m, ctx.sc.grid, rho0);
    CsvWriter w((ctx.out / "model_pure_dephasing.csv").string(),
                {"t", "gamma2", "Gamma", "p_0", "p_1", "re_coherence", "im_coherence"},
                ctx.sc.output_precision);
    for (std::size_t k = 0; k < traj.rho.size(); ++k) {
        w.row({traj.grid.time(static_cast<int>(k)), traj.gamma2[k], traj.accumulated[k],
               traj.rho[k](0, 0).real(), traj.rho[k](1, 1).real(), traj.rho[k](0, 1).real(),
               traj.rho[k](0, 1).imag()});
    }
    files.push_back("model_pure_dephasing.csv");
}

void task_model_majorana(Context& ctx, TaskReport& rep, std::vector<std::string>& files) {
    auto m = make_model(ctx.sc, models::SpecialModelKind::Majorana);
    Matrix rho0(2, 2);
    rho0 << 1, 0, 0, 0;
    auto traj = models::majorana_dynamics(m, ctx.sc.grid, rho0);
    for (const auto& wrn : traj.warnings) rep.warnings.push_back(wrn);
    if (!traj.backflow_times.empty())
        rep.warnings.push_back("gamma changed sign " + std::to_string(traj.backflow_times.size()) +
                               " time(s): non-Markovian backflow");
    CsvWriter w((ctx.out / "model_majorana.csv").string(),
                {"t", "gamma", "u", "purity", "p_0", "re_coherence", "im_coherence"},
                ctx.sc.output_precision);
    for (std::size_t s = 0; s < traj.rho.size(); ++s) {
        const int k = 2 * static_cast<int>(s);
        const Matrix& r = traj.rho[s];
        w.row({traj.grid.time(static_cast<int>(s)), traj.gamma[k], traj.u[k],
               (r * r).trace().real(), r(0, 0).real(), r(0, 1).real(), r(0, 1).imag()});
    }
    files.push_back("model_majorana.csv");
}

} // namespace

std::string RunReport::to_json() const {
    json j;
    j["scenario"] = scenario_path;
    j["output_directory"] = output_directory;
    j["threads"] = threads;
    j["tasks"] = json::array();
    for (const auto& t : tasks) {
        json jt;
        jt["name"] = t.name;
        jt["status"] = t.status;
        jt["wall_ms"] = t.wall_ms;
        jt["warnings"] = t.warnings;
        if (!t.error.empty()) jt["error"] = t.error;
        j["tasks"].push_back(jt);
    }
    j["files"] = json::array();
    for (const auto& f : files) {
        json jf;
        jf["name"] = f.name;
        jf["fnv1a64"] = f.fnv1a64;
        j["files"].push_back(jf);
    }
    j["exit_code"] = exit_code;
    return j.dump(2) + "\n";
}

RunReport run(const Scenario& scenario, const RunOptions& opts) {
    RunReport report;
    report.scenario_path = opts.scenario_path;
    report.threads = std::max(1, opts.threads);

    fs::path out;
    if (!opts.out_dir.empty())
        out = opts.out_dir;
    else if (!scenario.output_directory.empty())
        out = scenario.output_directory;
    else if (const char* env = std::getenv("FANODYN_OUT"))
        out = env;
    else
        out = "fanodyn_out";
    fs::create_directories(out);
    report.output_directory = out.string();

    Context ctx{scenario, out, report.threads, {}, false, false, {}, false, {}, false, {}, {}};

    // Dependency order: independent spectral tasks first, then the solver chain.
    const Task order[] = {Task::BoundStates,     Task::Spectra,   Task::U,
                          Task::V,               Task::Coefficients, Task::Occupation,
                          Task::Rho,             Task::Measure,   Task::ModelSpinZeroT,
                          Task::ModelPureDephasing, Task::ModelMajorana};

    bool numerical_failure = false;
    for (Task t : order) {
        if (!scenario.has_task(t)) continue;
        TaskReport tr;
        tr.name = task_name(t);
        std::vector<std::string> files;
        const auto start = std::chrono::steady_clock::now();
        try {
            switch (t) {
                case Task::U: task_u(ctx, tr, files); break;
                case Task::V: task_v(ctx, tr, files); break;
                case Task::Coefficients: task_coefficients(ctx, tr, files); break;
                case Task::Rho: task_rho(ctx, tr, files); break;
                case Task::BoundStates: task_bound_states(ctx, tr, files); break;
                case Task::Spectra: task_spectra(ctx, tr, files); break;
                case Task::Occupation: task_occupation(ctx, tr, files); break;
                case Task::Measure: task_measure(ctx, tr, files); break;
                case Task::ModelSpinZeroT: task_model_spin(ctx, tr, files); break;
                case Task::ModelPureDephasing: task_model_dephasing(ctx, tr, files); break;
                case Task::ModelMajorana: task_model_majorana(ctx, tr, files); break;
            }
            tr.status = "ok";
        } catch (const std::exception& e) {
            tr.status = "error";
            tr.error = e.what();
            numerical_failure = true;
        }
        tr.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               start)
                         .count();
        report.tasks.push_back(tr);
        for (const auto& f : files) report.files.push_back({f, checksum_file(out / f)});
    }

    report.exit_code = numerical_failure ? 3 : 0;
    std::ofstream rj(out / "run_report.json", std::ios::binary);
    rj << report.to_json();
    return report;
}

} // namespace fanodyn::cli
