#include "fanodyn/models.hpp"

#include <cmath>

#include "fanodyn/errors.hpp"
#include "fanodyn/greens.hpp"

namespace fanodyn::models {

using spectral::SystemSpec;

namespace {

Matrix hermitize(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

void validate_rho2(const Matrix& rho) {
    if (rho.rows() != 2 || rho.cols() != 2)
        throw std::invalid_argument("special models take a 2x2 density matrix");
    if (std::abs(rho.trace().real() - 1.0) > 1e-8)
        throw std::invalid_argument("density matrix must have unit trace");
    if ((rho - rho.adjoint()).norm() > 1e-10)
        throw std::invalid_argument("density matrix must be Hermitian");
}

// RK4 with stages on the coefficient lattice (step 2*dt), rate-pair generator.
template <typename Gen>
std::vector<Matrix> rk4_two_level(const Matrix& rho0, const TimeGrid& grid, Gen&& L) {
    const int n_rk = grid.n_steps / 2;
    const double h = 2.0 * grid.dt;
    std::vector<Matrix> rho;
    rho.reserve(n_rk + 1);
    Matrix r = rho0;
    rho.push_back(r);
    for (int s = 0; s < n_rk; ++s) {
        const int k0 = 2 * s, k1 = 2 * s + 1, k2 = 2 * s + 2;
        const Matrix f1 = L(k0, r);
        const Matrix f2 = L(k1, r + (0.5 * h) * f1);
        const Matrix f3 = L(k1, r + (0.5 * h) * f2);
        const Matrix f4 = L(k2, r + h * f3);
        r += (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        r = hermitize(r);
        rho.push_back(r);
    }
    return rho;
}

// Rates from a scalar propagator series; near-zeros of u are bridged linearly.
void rates_from_u(const std::vector<Matrix>& u, const std::vector<Matrix>& udot,
                  std::vector<double>& eps_prime, std::vector<double>& gamma,
                  std::vector<std::string>& warnings) {
    const int n = static_cast<int>(u.size()) - 1;
    eps_prime.assign(n + 1, 0.0);
    gamma.assign(n + 1, 0.0);
    std::vector<char> ok(n + 1, 1);
    for (int k = 0; k <= n; ++k) {
        const Complex uk = u[k](0, 0);
        if (std::abs(uk) <= 1e-12) {
            ok[k] = 0;
            continue;
        }
        const Complex ratio = udot[k](0, 0) / uk;
        eps_prime[k] = -ratio.imag();
        gamma[k] = -ratio.real();
    }
    int bridged = 0;
    for (int k = 0; k <= n; ++k) {
        if (ok[k]) continue;
        int lo = k;
        while (k <= n && !ok[k]) ++k;
        const int hi = k - 1;
        if (lo == 0 || hi == n)
            throw PreconditionError("special model: propagator vanished at a grid boundary");
        for (int m = lo; m <= hi; ++m) {
            const double t = static_cast<double>(m - lo + 1) / static_cast<double>(hi - lo + 2);
            eps_prime[m] = (1.0 - t) * eps_prime[lo - 1] + t * eps_prime[hi + 1];
            gamma[m] = (1.0 - t) * gamma[lo - 1] + t * gamma[hi + 1];
            ++bridged;
        }
    }
    if (bridged)
        warnings.push_back("bridged " + std::to_string(bridged) +
                           " rate value(s) across propagator zeros");
}

} // namespace

void SpecialModel::validate() const {
    bath.validate();
    switch (kind) {
        case SpecialModelKind::SpinZeroT:
            if (bath.statistics != Statistics::Boson)
                throw std::invalid_argument("spin_zero_T requires a bosonic bath");
            if (bath.temperature != 0.0)
                throw std::invalid_argument(
                    "spin_zero_T is exact only for a zero-temperature bath");
            break;
        case SpecialModelKind::PureDephasing:
            if (bath.statistics != Statistics::Boson)
                throw std::invalid_argument("pure_dephasing requires a bosonic bath");
            if (bath.chemical_potential != 0.0)
                throw std::invalid_argument("pure_dephasing assumes mu = 0");
            break;
        case SpecialModelKind::Majorana:
            if (bath.statistics != Statistics::Fermion)
                throw std::invalid_argument("majorana requires a fermionic bath");
            break;
    }
}

SpinTrajectory spin_zero_T_dynamics(const SpecialModel& m, const TimeGrid& grid, const Matrix& rho0) {
    if (m.kind != SpecialModelKind::SpinZeroT)
        throw std::invalid_argument("spin_zero_T_dynamics: wrong model kind");
    m.validate();
    validate_rho2(rho0);

    SystemSpec sys = SystemSpec::single_level(Statistics::Boson, m.epsilon, m.bath);
    auto gf = greens::solve_u(sys, grid);

    SpinTrajectory out;
    rates_from_u(gf.u, gf.u_dot, out.eps_prime, out.gamma, out.warnings);
    out.u.resize(gf.u.size());
    for (std::size_t k = 0; k < gf.u.size(); ++k) out.u[k] = gf.u[k](0, 0);

    // Basis {excited, ground}: s+s- = diag(1, 0), s- |e> = |g>.
    auto L = [&](int k, const Matrix& r) {
        const double ep = out.eps_prime[k], g = out.gamma[k];
        Matrix d(2, 2);
        const Complex ree = r(0, 0), reg = r(0, 1), rge = r(1, 0), rgg = r(1, 1);
        d(0, 0) = -2.0 * g * ree;
        d(1, 1) = 2.0 * g * ree;
        d(0, 1) = (-kI * ep - g) * reg;
        d(1, 0) = (kI * ep - g) * rge;
        (void)rgg;
        return d;
    };
    out.rho = rk4_two_level(rho0, grid, L);
    out.grid = TimeGrid(grid.t0, 2.0 * grid.dt, grid.n_steps / 2);
    return out;
}

double dephasing_rate(const SpecialModel& m, double t_minus_t0) {
    if (m.kind != SpecialModelKind::PureDephasing)
        throw std::invalid_argument("dephasing_rate: wrong model kind");
    m.validate();
    const auto& d = m.bath.density;
    if (d.empty()) return 0.0;
    const double T = m.bath.temperature;
    auto coth = [&](double w) {
        if (T == 0.0) return 1.0;
        const double x = w / (2.0 * T);
        if (x < 1e-3) return 1.0 / x + x / 3.0;
        if (x > 350.0) return 1.0;
        return std::cosh(x) / std::sinh(x);
    };
    quad::AdaptiveOptions opts;
    opts.abs_tol = 1e-10 * std::max(d.peak(), 1e-300) * std::max(1.0, 2.0 * T);
    opts.rel_tol = 1e-9;
    std::vector<std::pair<double, double>> parts;
    for (const auto& iv : d.support()) parts.push_back({iv.lo, iv.hi});
    auto f = [&](double w) { return d(w) * coth(w) * std::cos(w * t_minus_t0); };
    return 2.0 * quad::integrate_intervals(f, parts, opts).value;
}

DephasingTrajectory dephasing_dynamics(const SpecialModel& m, const TimeGrid& grid,
                                       const Matrix& rho0) {
    if (m.kind != SpecialModelKind::PureDephasing)
        throw std::invalid_argument("dephasing_dynamics: wrong model kind");
    m.validate();
    validate_rho2(rho0);

    DephasingTrajectory out;
    out.grid = grid;
    const int n = grid.n_steps;
    out.gamma2.resize(n + 1);

    // gamma2 is the cosine transform of J coth; reuse the oscillatory panel rule.
    const auto& d = m.bath.density;
    if (d.empty()) {
        std::fill(out.gamma2.begin(), out.gamma2.end(), 0.0);
    } else {
        const double T = m.bath.temperature;
        auto coth = [&](double w) {
            if (T == 0.0) return 1.0;
            const double x = w / (2.0 * T);
            if (x < 1e-3) return 1.0 / x + x / 3.0;
            if (x > 350.0) return 1.0;
            return std::cosh(x) / std::sinh(x);
        };
        std::vector<std::pair<double, double>> parts;
        for (const auto& iv : d.support()) parts.push_back({iv.lo, iv.hi});
        auto w = [&](double e) { return d(e) * coth(e); };
        std::vector<double> sing = d.singular_points();
        if (d.support_min() == 0.0) sing.push_back(0.0);  // 1/w pole regularized by J
        auto rule = quad::PanelRule::build(w, parts, d.breakpoints(), sing, {});
        for (int k = 0; k <= n; ++k)
            out.gamma2[k] = 2.0 * rule.fourier(grid.dt * k).real();
    }

    // Gamma(t) by composite Simpson on the lattice (trapezoid on the last odd step).
    out.accumulated.assign(n + 1, 0.0);
    for (int k = 1; k <= n; ++k) {
        if (k >= 2 && k % 2 == 0)
            out.accumulated[k] = out.accumulated[k - 2] +
                                 grid.dt / 3.0 * (out.gamma2[k - 2] + 4.0 * out.gamma2[k - 1] +
                                                  out.gamma2[k]);
        else
            out.accumulated[k] = out.accumulated[k - 1] +
                                 0.5 * grid.dt * (out.gamma2[k - 1] + out.gamma2[k]);
    }

    out.rho.reserve(n + 1);
    for (int k = 0; k <= n; ++k) {
        const double t = grid.dt * k;
        Matrix r = rho0;
        const Complex phase = std::polar(std::exp(-2.0 * out.accumulated[k]), -2.0 * m.epsilon * t);
        r(0, 1) = rho0(0, 1) * phase;
        r(1, 0) = rho0(1, 0) * std::conj(phase);
        out.rho.push_back(r);
    }
    return out;
}

MajoranaTrajectory majorana_dynamics(const SpecialModel& m, const TimeGrid& grid, const Matrix& rho0) {
    if (m.kind != SpecialModelKind::Majorana)
        throw std::invalid_argument("majorana_dynamics: wrong model kind");
    m.validate();
    validate_rho2(rho0);

    // Zero-Hamiltonian level with the particle-hole symmetrized kernel
    // g(tau) -> g(tau) + g(-tau); the march then stays real.
    SystemSpec sys = SystemSpec::single_level(Statistics::Fermion, 0.0, m.bath);
    greens::KernelCache kc = greens::KernelCache::build(sys, grid);
    std::vector<Matrix> g_sym(grid.n_steps + 1);
    for (int k = 0; k <= grid.n_steps; ++k)
        g_sym[k] = kc.g(k) + kc.g(k).adjoint();
    std::vector<Matrix> u, udot;
    greens::detail::volterra_march(sys.energy, g_sym, grid.dt, grid.n_steps,
                                   Matrix::Identity(1, 1), nullptr, 1e300, false, u, udot);

    MajoranaTrajectory out;
    std::vector<double> eps_prime;
    rates_from_u(u, udot, eps_prime, out.gamma, out.warnings);
    out.u.resize(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) out.u[k] = u[k](0, 0).real();

    for (std::size_t k = 1; k < out.gamma.size(); ++k)
        if ((out.gamma[k] < 0.0) != (out.gamma[k - 1] < 0.0))
            out.backflow_times.push_back(grid.dt * static_cast<double>(k));

    const Matrix lambda = (Matrix(2, 2) << 0, 1, 1, 0).finished();  // sigma_x
    auto L = [&](int k, const Matrix& r) {
        return Matrix(out.gamma[k] * (lambda * r * lambda - r));
    };
    out.rho = rk4_two_level(rho0, grid, L);
    out.grid = TimeGrid(grid.t0, 2.0 * grid.dt, grid.n_steps / 2);
    return out;
}

} // namespace fanodyn::models
