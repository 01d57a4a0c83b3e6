#include "fanodyn/greens.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "fanodyn/errors.hpp"
#include "fanodyn/util.hpp"

namespace fanodyn::greens {

using spectral::Interval;
using spectral::ReservoirSpec;
using spectral::SpectralDensity;

namespace {

// exp(-i eps t) for Hermitian eps, via one eigendecomposition.
struct PhaseFactory {
    bool is_scalar = false;
    double eps_s = 0.0;
    Matrix Q;
    Eigen::VectorXd d;

    explicit PhaseFactory(const Matrix& eps) {
        is_scalar = eps.rows() == 1;
        if (is_scalar) {
            eps_s = eps(0, 0).real();
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> es(eps);
            Q = es.eigenvectors();
            d = es.eigenvalues();
        }
    }

    Complex scalar_phase(double t) const { return std::polar(1.0, -eps_s * t); }

    Matrix matrix_phase(double t) const {
        Matrix D = Matrix::Zero(d.size(), d.size());
        for (int i = 0; i < d.size(); ++i) D(i, i) = std::polar(1.0, -d(i) * t);
        return Q * D * Q.adjoint();
    }
};

// Scalar PECE march of u' = -i e u - (g*u)(t) + r(t) in the interaction picture.
void march_scalar(double eps_s, const std::vector<Complex>& g, const std::vector<Complex>* inhom,
                  Complex init, double dt, int n, double norm_tol, bool check_norm,
                  std::vector<Complex>& u, std::vector<Complex>& udot) {
    u.assign(n + 1, Complex{0.0, 0.0});
    udot.assign(n + 1, Complex{0.0, 0.0});
    auto r_at = [&](int k) { return inhom ? (*inhom)[k] : Complex{0.0, 0.0}; };

    u[0] = init;
    Complex I0{0.0, 0.0};
    udot[0] = -kI * eps_s * u[0] - I0 + r_at(0);
    Complex w = init;  // w_k = e^{+i eps t_k} u_k
    Complex wd_prev{0.0, 0.0};
    Complex wd_cur = std::conj(std::polar(1.0, -eps_s * 0.0)) * (-I0 + r_at(0));

    for (int k = 0; k < n; ++k) {
        // Memory sum excluding the new endpoint: S = dt (g_{k+1} u_0 / 2 + sum_{j=1..k} g_{k+1-j} u_j)
        Complex S = 0.5 * g[k + 1] * u[0];
        for (int j = 1; j <= k; ++j) S += g[k + 1 - j] * u[j];
        S *= dt;
        const Complex E = std::polar(1.0, -eps_s * dt * (k + 1));
        const Complex Ec = std::conj(E);
        const Complex rk1 = r_at(k + 1);

        Complex wp = (k == 0) ? w + dt * wd_cur : w + dt * (1.5 * wd_cur - 0.5 * wd_prev);
        const Complex up = E * wp;
        const Complex Ip = S + 0.5 * dt * g[0] * up;
        const Complex wdp = Ec * (-Ip + rk1);
        const Complex w_next = w + 0.5 * dt * (wd_cur + wdp);
        u[k + 1] = E * w_next;
        const Complex I = S + 0.5 * dt * g[0] * u[k + 1];
        udot[k + 1] = -kI * eps_s * u[k + 1] - I + rk1;
        wd_prev = wd_cur;
        wd_cur = Ec * (-I + rk1);
        w = w_next;
        if (check_norm && std::abs(u[k + 1]) > 1.0 + norm_tol)
            throw InstabilityError("propagator norm exceeded 1 + " + std::to_string(norm_tol) +
                                   " at t = " + std::to_string(dt * (k + 1)) +
                                   "; reduce dt");
    }
}

double spectral_norm(const Matrix& m) {
    return m.jacobiSvd().singularValues()(0);
}

void march_matrix(const Matrix& eps, const std::vector<Matrix>& g, const std::vector<Matrix>* inhom,
                  const Matrix& init, double dt, int n, double norm_tol, bool check_norm,
                  std::vector<Matrix>& u, std::vector<Matrix>& udot) {
    const int N = static_cast<int>(eps.rows());
    PhaseFactory phase(eps);
    const Matrix zero = Matrix::Zero(N, N);
    u.assign(n + 1, zero);
    udot.assign(n + 1, zero);
    auto r_at = [&](int k) -> Matrix { return inhom ? (*inhom)[k] : Matrix(zero); };

    u[0] = init;
    udot[0] = -kI * (eps * u[0]) + r_at(0);
    Matrix w = init;
    Matrix wd_prev = zero;
    Matrix wd_cur = -Matrix(zero) + r_at(0);  // E(0)^dagger (-I0 + r0) with I0 = 0, E(0) = 1

    Matrix S(N, N), E(N, N), tmp(N, N);
    for (int k = 0; k < n; ++k) {
        S.noalias() = 0.5 * (g[k + 1] * u[0]);
        for (int j = 1; j <= k; ++j) S.noalias() += g[k + 1 - j] * u[j];
        S *= dt;
        E = phase.matrix_phase(dt * (k + 1));
        const Matrix rk1 = r_at(k + 1);

        Matrix wp = (k == 0) ? Matrix(w + dt * wd_cur) : Matrix(w + dt * (1.5 * wd_cur - 0.5 * wd_prev));
        Matrix up = E * wp;
        Matrix Ip = S + (0.5 * dt) * (g[0] * up);
        Matrix wdp = E.adjoint() * (-Ip + rk1);
        Matrix w_next = w + (0.5 * dt) * (wd_cur + wdp);
        u[k + 1] = E * w_next;
        Matrix I = S + (0.5 * dt) * (g[0] * u[k + 1]);
        udot[k + 1] = -kI * (eps * u[k + 1]) - I + rk1;
        wd_prev = wd_cur;
        wd_cur = E.adjoint() * (-I + rk1);
        w = w_next;
        if (check_norm && spectral_norm(u[k + 1]) > 1.0 + norm_tol)
            throw InstabilityError("propagator norm exceeded 1 + " + std::to_string(norm_tol) +
                                   " at t = " + std::to_string(dt * (k + 1)) + "; reduce dt");
    }
}

// Noise-rule construction: weight J(e) f(e) over the reservoir support.
// Returns nullopt when the kernel vanishes identically; sets reuse_g when f == 1.
std::optional<quad::PanelRule> build_noise_rule(const ReservoirSpec& r, bool& reuse_g) {
    reuse_g = false;
    const SpectralDensity& d = r.density;
    if (d.empty()) return std::nullopt;
    const double mu = r.chemical_potential;
    const double T = r.temperature;

    if (r.statistics == Statistics::Boson && T == 0.0) return std::nullopt;
    if (r.statistics == Statistics::Fermion && T == 0.0) {
        if (mu <= d.support_min()) return std::nullopt;
        if (mu >= d.support_max()) {
            reuse_g = true;
            return std::nullopt;
        }
        std::vector<std::pair<double, double>> parts;
        for (const auto& iv : d.support()) {
            if (iv.hi <= mu)
                parts.push_back({iv.lo, iv.hi});
            else if (iv.lo < mu)
                parts.push_back({iv.lo, mu});
        }
        auto w = [&d](double e) { return d(e); };
        return quad::PanelRule::build(w, parts, d.breakpoints(), d.singular_points(), {});
    }

    std::vector<std::pair<double, double>> parts;
    for (const auto& iv : d.support()) parts.push_back({iv.lo, iv.hi});
    std::vector<double> breaks = d.breakpoints();
    // The occupation varies on the scale T around mu.
    for (double span : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
        breaks.push_back(mu + span * T);
        breaks.push_back(mu - span * T);
    }
    breaks.push_back(mu);
    std::vector<double> sing = d.singular_points();
    if (r.statistics == Statistics::Boson && mu == d.support_min()) sing.push_back(mu);
    auto w = [&](double e) { return d(e) * spectral::distribution(r, e); };
    return quad::PanelRule::build(w, parts, breaks, sing, {});
}

Matrix weighted_sum(const SystemSpec& sys, const std::vector<Complex>& per_res) {
    const int N = sys.levels();
    Matrix m = Matrix::Zero(N, N);
    for (std::size_t a = 0; a < sys.reservoirs.size(); ++a)
        m += sys.reservoirs[a].weight * per_res[a];
    return m;
}

} // namespace

namespace detail {

void volterra_march(const Matrix& eps, const std::vector<Matrix>& g_lattice, double dt, int n_steps,
                    const Matrix& init, const std::vector<Matrix>* inhom, double norm_tol,
                    bool check_norm, std::vector<Matrix>& out, std::vector<Matrix>& out_dot) {
    const int N = static_cast<int>(eps.rows());
    if (N == 1) {
        std::vector<Complex> g(g_lattice.size());
        for (std::size_t k = 0; k < g_lattice.size(); ++k) g[k] = g_lattice[k](0, 0);
        std::vector<Complex> r;
        if (inhom) {
            r.resize(inhom->size());
            for (std::size_t k = 0; k < inhom->size(); ++k) r[k] = (*inhom)[k](0, 0);
        }
        std::vector<Complex> u, udot;
        march_scalar(eps(0, 0).real(), g, inhom ? &r : nullptr, init(0, 0), dt, n_steps, norm_tol,
                     check_norm, u, udot);
        out.resize(n_steps + 1);
        out_dot.resize(n_steps + 1);
        for (int k = 0; k <= n_steps; ++k) {
            out[k] = Matrix::Constant(1, 1, u[k]);
            out_dot[k] = Matrix::Constant(1, 1, udot[k]);
        }
        return;
    }
    march_matrix(eps, g_lattice, inhom, init, dt, n_steps, norm_tol, check_norm, out, out_dot);
}

double grid_scale_limit(const SystemSpec& sys) {
    double scale = 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(sys.energy);
    for (int i = 0; i < es.eigenvalues().size(); ++i)
        scale = std::max(scale, std::abs(es.eigenvalues()(i)));
    scale = std::max(scale, sys.significant_radius());
    return scale;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

KernelCache KernelCache::build(const SystemSpec& sys, const TimeGrid& grid, int threads) {
    KernelCache kc;
    const int N = sys.levels();
    const int n = grid.n_steps;
    kc.scalar_ = (N == 1);

    std::vector<std::vector<Complex>> g_res(sys.reservoirs.size()), gt_res(sys.reservoirs.size());
    for (std::size_t a = 0; a < sys.reservoirs.size(); ++a) {
        const auto& r = sys.reservoirs[a].reservoir;
        g_res[a].assign(n + 1, Complex{0.0, 0.0});
        gt_res[a].assign(n + 1, Complex{0.0, 0.0});
        if (r.density.empty()) continue;
        r.density.panel_rule().fourier_lattice(grid.dt, n, g_res[a].data(), threads);
        bool reuse_g = false;
        auto noise_rule = build_noise_rule(r, reuse_g);
        if (noise_rule)
            noise_rule->fourier_lattice(grid.dt, n, gt_res[a].data(), threads);
        else if (reuse_g)
            gt_res[a] = g_res[a];
    }

    kc.g_.resize(n + 1);
    kc.gt_.resize(n + 1);
    if (kc.scalar_) {
        kc.g_scalar_.assign(n + 1, Complex{0.0, 0.0});
        kc.gt_scalar_.assign(n + 1, Complex{0.0, 0.0});
    }
    const double inv2pi = 1.0 / (2.0 * kPi);
    for (int k = 0; k <= n; ++k) {
        Matrix gk = Matrix::Zero(N, N), gtk = Matrix::Zero(N, N);
        for (std::size_t a = 0; a < sys.reservoirs.size(); ++a) {
            gk += sys.reservoirs[a].weight * (g_res[a][k] * inv2pi);
            gtk += sys.reservoirs[a].weight * (gt_res[a][k] * inv2pi);
        }
        kc.g_[k] = gk;
        kc.gt_[k] = gtk;
        if (kc.scalar_) {
            kc.g_scalar_[k] = gk(0, 0);
            kc.gt_scalar_[k] = gtk(0, 0);
        }
    }
    return kc;
}

Matrix memory_kernel(const SystemSpec& sys, double tau) {
    if (!std::isfinite(tau)) throw std::invalid_argument("memory_kernel: tau must be finite");
    std::vector<Complex> per;
    for (const auto& cr : sys.reservoirs) {
        const auto& d = cr.reservoir.density;
        per.push_back(d.empty() ? Complex{0, 0} : d.panel_rule().fourier(tau) / (2.0 * kPi));
    }
    return weighted_sum(sys, per);
}

Matrix noise_kernel(const SystemSpec& sys, double tau) {
    if (!std::isfinite(tau)) throw std::invalid_argument("noise_kernel: tau must be finite");
    std::vector<Complex> per;
    for (const auto& cr : sys.reservoirs) {
        bool reuse_g = false;
        auto rule = build_noise_rule(cr.reservoir, reuse_g);
        if (rule)
            per.push_back(rule->fourier(tau) / (2.0 * kPi));
        else if (reuse_g)
            per.push_back(cr.reservoir.density.panel_rule().fourier(tau) / (2.0 * kPi));
        else
            per.push_back(Complex{0.0, 0.0});
    }
    return weighted_sum(sys, per);
}

// ---------------------------------------------------------------------------
// solve_u / solve_v
// ---------------------------------------------------------------------------

GreenFunctions solve_u(const SystemSpec& sys, const TimeGrid& grid, const SolverOptions& opts) {
    sys.validate();
    if (opts.enforce_dt_precondition) {
        const double scale = detail::grid_scale_limit(sys);
        if (scale > 0.0 && grid.dt > 0.1 / scale)
            throw PreconditionError("solve_u: dt must resolve the fastest scale (dt <= " +
                                    std::to_string(0.1 / scale) + ")");
    }
    GreenFunctions gf;
    gf.grid = grid;
    KernelCache kc = KernelCache::build(sys, grid, opts.threads);
    detail::volterra_march(sys.energy, kc.g_all(), grid.dt, grid.n_steps,
                           Matrix::Identity(sys.levels(), sys.levels()), nullptr, opts.norm_tol,
                           true, gf.u, gf.u_dot);
    return gf;
}

namespace {

// v(t_k, t_k) for every k (trapezoidal quadratic form, O(n^2) total): maintains
// S_p = sum_{q<=k} gt(q - p) u(q)^dagger and assembles the bracketed row sum.
void v_diag_scalar(const std::vector<Complex>& u, const std::vector<Complex>& gt, double dt, int n,
                   int stride, std::vector<Complex>& out) {
    std::vector<Complex> S(n + 1, Complex{0, 0});
    out.clear();
    auto gt_at = [&](int j) { return j >= 0 ? gt[j] : std::conj(gt[-j]); };
    for (int k = 0; k <= n; ++k) {
        const Complex uck = std::conj(u[k]);
        for (int p = 0; p < k; ++p) S[p] += gt[k - p] * uck;
        Complex s{0, 0};
        for (int q = 0; q <= k; ++q) s += gt_at(q - k) * std::conj(u[q]);
        S[k] = s;
        if (k % stride != 0) continue;
        if (k == 0) {
            out.push_back(Complex{0, 0});
            continue;
        }
        Complex v{0, 0};
        const Complex uc0 = std::conj(u[0]);
        for (int p = 0; p <= k; ++p) {
            const double wb = (p == 0 || p == k) ? 0.5 : 1.0;
            const Complex bracket = S[p] - 0.5 * std::conj(gt[p]) * uc0 - 0.5 * gt[k - p] * uck;
            v += wb * u[p] * bracket;
        }
        out.push_back(v * dt * dt);
    }
}

void v_diag_matrix(const std::vector<Matrix>& u, const std::vector<Matrix>& gt, double dt, int n,
                   int stride, std::vector<Matrix>& out) {
    const int N = static_cast<int>(u[0].rows());
    const Matrix zero = Matrix::Zero(N, N);
    std::vector<Matrix> S(n + 1, zero);
    std::vector<Matrix> udag(n + 1);
    for (int k = 0; k <= n; ++k) udag[k] = u[k].adjoint();
    auto gt_at = [&](int j) -> Matrix { return j >= 0 ? gt[j] : Matrix(gt[-j].adjoint()); };
    out.clear();
    Matrix bracket(N, N), v(N, N);
    for (int k = 0; k <= n; ++k) {
        for (int p = 0; p < k; ++p) S[p].noalias() += gt[k - p] * udag[k];
        Matrix s = zero;
        for (int q = 0; q <= k; ++q) s.noalias() += gt_at(q - k) * udag[q];
        S[k] = s;
        if (k % stride != 0) continue;
        if (k == 0) {
            out.push_back(zero);
            continue;
        }
        v.setZero();
        for (int p = 0; p <= k; ++p) {
            const double wb = (p == 0 || p == k) ? 0.5 : 1.0;
            bracket = S[p] - 0.5 * (gt[p].adjoint() * udag[0]) - 0.5 * (gt[k - p] * udag[k]);
            v.noalias() += wb * (u[p] * bracket);
        }
        out.push_back(v * (dt * dt));
    }
}

// h_i = dt sum_{j<=m} w_j gt(i-j) u(m-j)^dagger; v(t_k, t_m) = dt sum_{i<=k} wb_i u(k-i) h_i.
void v_slice_scalar(const std::vector<Complex>& u, const std::vector<Complex>& gt, double dt, int /*n*/,
                    int m, int k_max, std::vector<Complex>& out) {
    auto gt_at = [&](int j) { return j >= 0 ? gt[j] : std::conj(gt[-j]); };
    std::vector<Complex> h(k_max + 1, Complex{0, 0});
    if (m >= 1) {
        for (int i = 0; i <= k_max; ++i) {
            Complex s{0, 0};
            for (int j = 0; j <= m; ++j) {
                const double w = (j == 0 || j == m) ? 0.5 : 1.0;
                s += w * gt_at(i - j) * std::conj(u[m - j]);
            }
            h[i] = s * dt;
        }
    }
    out.assign(k_max + 1, Complex{0, 0});
    for (int k = 1; k <= k_max; ++k) {
        Complex s{0, 0};
        for (int i = 0; i <= k; ++i) {
            const double wb = (i == 0 || i == k) ? 0.5 : 1.0;
            s += wb * u[k - i] * h[i];
        }
        out[k] = s * dt;
    }
}

void v_slice_matrix(const std::vector<Matrix>& u, const std::vector<Matrix>& gt, double dt, int /*n*/,
                    int m, int k_max, std::vector<Matrix>& out) {
    const int N = static_cast<int>(u[0].rows());
    const Matrix zero = Matrix::Zero(N, N);
    auto gt_at = [&](int j) -> Matrix { return j >= 0 ? gt[j] : Matrix(gt[-j].adjoint()); };
    std::vector<Matrix> h(k_max + 1, zero);
    if (m >= 1) {
        for (int i = 0; i <= k_max; ++i) {
            Matrix s = zero;
            for (int j = 0; j <= m; ++j) {
                const double w = (j == 0 || j == m) ? 0.5 : 1.0;
                s.noalias() += w * (gt_at(i - j) * u[m - j].adjoint());
            }
            h[i] = s * dt;
        }
    }
    out.assign(k_max + 1, zero);
    for (int k = 1; k <= k_max; ++k) {
        Matrix s = zero;
        for (int i = 0; i <= k; ++i) {
            const double wb = (i == 0 || i == k) ? 0.5 : 1.0;
            s.noalias() += wb * (u[k - i] * h[i]);
        }
        out[k] = s * dt;
    }
}

} // namespace

void solve_v(const SystemSpec& sys, GreenFunctions& gf, const std::vector<double>& anchor_times,
             int stride, const SolverOptions& opts) {
    if (gf.u.empty()) throw PreconditionError("solve_v: solve_u must run first on the same grid");
    if (stride < 1) throw std::invalid_argument("solve_v: stride must be >= 1");
    const TimeGrid& grid = gf.grid;
    const int n = grid.n_steps;
    KernelCache kc = KernelCache::build(sys, grid, opts.threads);
    gf.v_stride = stride;

    if (kc.scalar()) {
        std::vector<Complex> u(n + 1);
        for (int k = 0; k <= n; ++k) u[k] = gf.u[k](0, 0);
        std::vector<Complex> diag;
        v_diag_scalar(u, kc.gt_flat(), grid.dt, n, stride, diag);
        gf.v_diag.resize(diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i)
            gf.v_diag[i] = Matrix::Constant(1, 1, diag[i]);
        for (double ta : anchor_times) {
            int m = static_cast<int>(std::lround((ta - grid.t0) / grid.dt));
            m = std::clamp(m, 0, n);
            std::vector<Complex> row;
            v_slice_scalar(u, kc.gt_flat(), grid.dt, n, m, n, row);
            auto& slot = gf.v_slices[m];
            slot.resize(n + 1);
            for (int k = 0; k <= n; ++k) slot[k] = Matrix::Constant(1, 1, row[k]);
        }
    } else {
        v_diag_matrix(gf.u, kc.gt_all(), grid.dt, n, stride, gf.v_diag);
        for (double ta : anchor_times) {
            int m = static_cast<int>(std::lround((ta - grid.t0) / grid.dt));
            m = std::clamp(m, 0, n);
            std::vector<Matrix> row;
            v_slice_matrix(gf.u, kc.gt_all(), grid.dt, n, m, n, row);
            gf.v_slices[m] = std::move(row);
        }
    }
    gf.has_v = true;

    if (opts.cross_check) {
        // March the inhomogeneous equation at the final anchor and compare at
        // a handful of interior times; both routes discretize at O(dt^2), so a
        // persistent gap signals an inconsistency rather than grid error.
        const int m = n;
        std::vector<Matrix> marched = march_v_slice(sys, gf, m, opts);
        std::vector<Matrix> direct;
        if (kc.scalar()) {
            std::vector<Complex> u(n + 1);
            for (int k = 0; k <= n; ++k) u[k] = gf.u[k](0, 0);
            std::vector<Complex> row;
            v_slice_scalar(u, kc.gt_flat(), grid.dt, n, m, n, row);
            direct.resize(n + 1);
            for (int k = 0; k <= n; ++k) direct[k] = Matrix::Constant(1, 1, row[k]);
        } else {
            v_slice_matrix(gf.u, kc.gt_all(), grid.dt, n, m, n, direct);
        }
        double scale = 0.0;
        for (int k = 0; k <= n; ++k) scale = std::max(scale, direct[k].norm());
        double worst = 0.0;
        for (int s = 1; s <= 8; ++s) {
            const int k = (n * s) / 8;
            worst = std::max(worst, (direct[k] - marched[k]).norm());
        }
        if (scale > 0.0 && worst > opts.cross_check_tol * scale)
            gf.notes.push_back("v cross-check: quadratic form and direct march differ by " +
                               std::to_string(worst / scale) + " (relative) at dt = " +
                               std::to_string(grid.dt));
    }
}

std::vector<Matrix> march_v_slice(const SystemSpec& sys, const GreenFunctions& gf, int anchor_index,
                                  const SolverOptions& opts) {
    if (gf.u.empty()) throw PreconditionError("march_v_slice: solve_u must run first");
    const TimeGrid& grid = gf.grid;
    const int n = grid.n_steps;
    const int m = anchor_index;
    const int N = sys.levels();
    KernelCache kc = KernelCache::build(sys, grid, opts.threads);

    // Inhomogeneity r(t_i) = int_0^{t_m} gt(t_i - t') u(t_m - t')^dagger dt'.
    std::vector<Matrix> r(n + 1, Matrix::Zero(N, N));
    if (m >= 1) {
        for (int i = 0; i <= n; ++i) {
            Matrix s = Matrix::Zero(N, N);
            for (int j = 0; j <= m; ++j) {
                const double w = (j == 0 || j == m) ? 0.5 : 1.0;
                const Matrix gt = (i - j) >= 0 ? kc.g_tilde(i - j) : Matrix(kc.g_tilde(j - i).adjoint());
                s.noalias() += w * (gt * gf.u[m - j].adjoint());
            }
            r[i] = s * grid.dt;
        }
    }
    std::vector<Matrix> v, vdot;
    detail::volterra_march(sys.energy, kc.g_all(), grid.dt, n, Matrix::Zero(N, N), &r, opts.norm_tol,
                           false, v, vdot);
    return v;
}

// ---------------------------------------------------------------------------
// Bound states and spectra
// ---------------------------------------------------------------------------

namespace {

double pole_function(const SystemSpec& sys, double eps) {
    return eps - sys.scalar_energy() - sys.total_lamb_shift(eps);
}

// y is strictly increasing off support (y' = 1 - Delta' > 1), so each interval
// holds at most one root; geometric sampling still guards edge-hugging roots.
std::vector<double> scan_points(double a, double b, bool edge_lo, bool edge_hi) {
    std::vector<double> pts;
    const double span = b - a;
    const double inset = 1e-12 * (std::abs(a) + std::abs(b) + 1.0);
    if (span <= 2.0 * inset) return pts;
    for (int i = 0; i <= 64; ++i) pts.push_back(a + span * i / 64.0);
    if (edge_lo)
        for (int m = 1; m <= 12; ++m) pts.push_back(a + span * std::pow(10.0, -m));
    if (edge_hi)
        for (int m = 1; m <= 12; ++m) pts.push_back(b - span * std::pow(10.0, -m));
    for (auto& p : pts) p = std::clamp(p, a + inset, b - inset);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

} // namespace

BoundStateResult find_bound_states(const SystemSpec& sys) {
    if (!sys.scalar()) throw PreconditionError("find_bound_states: implemented for single-level systems");
    BoundStateResult result;
    const double eps_s = sys.scalar_energy();
    auto support = sys.total_support();

    if (support.empty() || sys.total_weight_integral() == 0.0) {
        result.states.push_back({eps_s, 1.0, false});
        return result;
    }

    double margin = 0.0;
    for (const auto& cr : sys.reservoirs) {
        const auto& d = cr.reservoir.density;
        const double w00 = cr.weight(0, 0).real();
        if (d.kind() == SpectralDensity::Kind::OhmicFamily)
            margin += 20.0 * d.ohmic_eta() * d.ohmic_cutoff() * w00;
        else
            margin += 20.0 * std::sqrt(std::max(0.0, w00 * d.total_weight()) / (2.0 * kPi));
    }
    margin = std::max(margin, 1e-3 * (std::abs(eps_s) + 1.0));

    const double lo_domain = std::min(support.front().lo, eps_s) - margin;
    const double hi_domain = std::max(support.back().hi, eps_s) + margin;

    struct Gap {
        double a, b;
        bool edge_lo, edge_hi;
    };
    std::vector<Gap> gaps;
    gaps.push_back({lo_domain, support.front().lo, false, true});
    for (std::size_t i = 0; i + 1 < support.size(); ++i)
        gaps.push_back({support[i].hi, support[i + 1].lo, true, true});
    gaps.push_back({support.back().hi, hi_domain, true, false});

    const double y_tol = 1e-10 * std::max(1.0, std::abs(eps_s));
    auto y_of = [&](double e) {
        try {
            return pole_function(sys, e);
        } catch (const QuadratureError&) {
            return pole_function(sys, e + 1e-12 * (std::abs(e) + 1.0));
        }
    };

    for (const auto& gap : gaps) {
        auto pts = scan_points(gap.a, gap.b, gap.edge_lo, gap.edge_hi);
        if (pts.size() < 2) continue;
        std::vector<double> ys(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) ys[i] = y_of(pts[i]);
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const bool neg_a = ys[i] < 0.0, neg_b = ys[i + 1] < 0.0;
            if (neg_a == neg_b) continue;
            double a = pts[i], b = pts[i + 1], ya = ys[i];
            double root = 0.5 * (a + b);
            for (int it = 0; it < 200; ++it) {
                root = 0.5 * (a + b);
                const double ym = y_of(root);
                if (std::abs(ym) < y_tol && (b - a) < 1e-13 * (std::abs(root) + 1.0)) break;
                if ((ym < 0.0) == (ya < 0.0)) {
                    a = root;
                    ya = ym;
                } else {
                    b = root;
                }
            }
            double edge_dist = std::min(gap.edge_lo ? root - gap.a : 1e300,
                                        gap.edge_hi ? gap.b - root : 1e300);
            const double fd_step = std::min(1e-5, std::max(edge_dist / 8.0, 1e-12));
            const double dprime =
                (sys.total_lamb_shift(root + fd_step) - sys.total_lamb_shift(root - fd_step)) /
                (2.0 * fd_step);
            const double residue = 1.0 / (1.0 - dprime);
            const bool near_edge = edge_dist < 1e-6 * std::max(1.0, std::abs(root));
            if (residue < 1e-6) {
                result.notes.push_back("dropped bound state at e = " + std::to_string(root) +
                                       " with residue " + std::to_string(residue) +
                                       " (indistinguishable from the continuum)");
                continue;
            }
            BoundState bs{root, residue, near_edge};
            if (near_edge)
                result.notes.push_back("bound state at e = " + std::to_string(root) +
                                       " lies within 1e-6 of a band edge; values unreliable");
            result.states.push_back(bs);
        }
    }
    std::sort(result.states.begin(), result.states.end(),
              [](const BoundState& l, const BoundState& r) { return l.energy < r.energy; });
    return result;
}

double dissipation_spectrum(const SystemSpec& sys, double eps) {
    if (!sys.scalar()) throw PreconditionError("dissipation_spectrum: single-level systems only");
    const double J = sys.total_J(eps);
    if (J == 0.0) return 0.0;
    const double D = eps - sys.scalar_energy() - sys.total_lamb_shift(eps);
    return (J / (2.0 * kPi)) / (D * D + 0.25 * J * J);
}

namespace {

std::vector<double> resonance_points(const SystemSpec& sys) {
    std::vector<double> pts;
    for (const auto& iv : sys.total_support()) {
        const double inset = 1e-9 * (std::abs(iv.lo) + std::abs(iv.hi) + 1.0);
        double prev_e = iv.lo + inset;
        double prev_y = pole_function(sys, prev_e);
        const int samples = 257;
        for (int i = 1; i <= samples; ++i) {
            const double e = iv.lo + inset + (iv.width() - 2.0 * inset) * i / samples;
            const double y = pole_function(sys, e);
            if ((y < 0.0) != (prev_y < 0.0)) {
                double a = prev_e, b = e, ya = prev_y;
                for (int it = 0; it < 60; ++it) {
                    const double m = 0.5 * (a + b);
                    const double ym = pole_function(sys, m);
                    if ((ym < 0.0) == (ya < 0.0)) {
                        a = m;
                        ya = ym;
                    } else {
                        b = m;
                    }
                }
                pts.push_back(0.5 * (a + b));
            }
            prev_e = e;
            prev_y = y;
        }
    }
    return pts;
}

double integrate_over_support(const SystemSpec& sys, const quad::Fn& f) {
    auto resos = resonance_points(sys);
    std::vector<std::pair<double, double>> parts;
    for (const auto& iv : sys.total_support()) {
        std::vector<double> cuts{iv.lo, iv.hi};
        for (double r : resos)
            if (r > iv.lo && r < iv.hi) cuts.push_back(r);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            if (cuts[i + 1] > cuts[i]) parts.push_back({cuts[i], cuts[i + 1]});
    }
    if (parts.empty()) return 0.0;
    quad::AdaptiveOptions opts;
    opts.abs_tol = 1e-10;
    opts.rel_tol = 1e-8;
    return quad::integrate_intervals(f, parts, opts).value;
}

} // namespace

double dissipation_weight(const SystemSpec& sys) {
    return integrate_over_support(sys, [&](double e) { return dissipation_spectrum(sys, e); });
}

std::vector<Complex> reconstruct_u(const SystemSpec& sys, const TimeGrid& grid) {
    if (!sys.scalar()) throw PreconditionError("reconstruct_u: single-level systems only");
    auto bound = find_bound_states(sys);
    const int n = grid.n_steps;
    std::vector<Complex> out(n + 1, Complex{0, 0});

    auto support = sys.total_support();
    if (!support.empty() && sys.total_weight_integral() > 0.0) {
        std::vector<std::pair<double, double>> parts;
        std::vector<double> breaks = resonance_points(sys);
        std::vector<double> sing;
        for (const auto& cr : sys.reservoirs) {
            const auto& d = cr.reservoir.density;
            breaks.insert(breaks.end(), d.breakpoints().begin(), d.breakpoints().end());
            sing.insert(sing.end(), d.singular_points().begin(), d.singular_points().end());
        }
        for (const auto& iv : support) parts.push_back({iv.lo, iv.hi});
        auto w = [&](double e) { return dissipation_spectrum(sys, e); };
        quad::PanelRuleOptions popts;
        auto rule = quad::PanelRule::build(w, parts, breaks, sing, popts);
        std::vector<Complex> cont(n + 1);
        rule.fourier_lattice(grid.dt, n, cont.data());
        for (int k = 0; k <= n; ++k) out[k] = cont[k];
    }
    for (const auto& bs : bound.states)
        for (int k = 0; k <= n; ++k)
            out[k] += bs.residue * std::polar(1.0, -bs.energy * grid.dt * k);
    return out;
}

double steady_fluctuation_spectrum(const SystemSpec& sys, const std::vector<BoundState>& states,
                                   double eps, double ts_minus_t0) {
    if (!sys.scalar()) throw PreconditionError("steady_fluctuation_spectrum: single-level systems only");
    for (const auto& bs : states)
        if (std::abs(eps - bs.energy) < 1e-12 * (std::abs(eps) + 1.0))
            throw std::domain_error("steady_fluctuation_spectrum: evaluation at a bound-state pole");
    const double J = sys.total_J(eps);
    if (J == 0.0) return 0.0;
    // Occupation averaged over reservoirs, weighted by each J contribution.
    double jf = 0.0;
    for (const auto& cr : sys.reservoirs) {
        const double Ja = cr.weight(0, 0).real() * cr.reservoir.density(eps);
        if (Ja > 0.0) jf += Ja * spectral::distribution(cr.reservoir, eps);
    }
    const double f = jf / J;
    double Db = 0.0;
    for (const auto& a : states)
        for (const auto& b : states)
            Db += (J / (2.0 * kPi)) * a.residue * b.residue *
                  std::cos((a.energy - b.energy) * ts_minus_t0) /
                  ((eps - a.energy) * (eps - b.energy));
    return (Db + dissipation_spectrum(sys, eps)) * f;
}

double steady_fluctuation_weight(const SystemSpec& sys, const std::vector<BoundState>& states,
                                 double ts_minus_t0) {
    return integrate_over_support(
        sys, [&](double e) { return steady_fluctuation_spectrum(sys, states, e, ts_minus_t0); });
}

} // namespace fanodyn::greens
