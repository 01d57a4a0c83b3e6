#include "fanodyn/correlations.hpp"

#include <cmath>

#include "fanodyn/errors.hpp"

namespace fanodyn::corr {

namespace {
constexpr double kDenominatorFloor = 1e-12;

double diag_occupation(const greens::GreenFunctions& gf, double n0, int step) {
    if (step % gf.v_stride != 0)
        throw PreconditionError("occupation needed off the v_diag stride");
    const double v = gf.v_diag[step / gf.v_stride](0, 0).real();
    const double u2 = std::norm(gf.u[step](0, 0));
    return u2 * n0 + v;
}
} // namespace

Complex exact_two_time(const greens::GreenFunctions& gf, double n0, int anchor_step, int lag_steps) {
    if (gf.u.empty() || !gf.has_v) throw PreconditionError("exact_two_time: u and v required");
    if (gf.u[0].rows() != 1) throw PreconditionError("exact_two_time: scalar systems only");
    auto slice = gf.v_slices.find(anchor_step);
    if (slice == gf.v_slices.end())
        throw PreconditionError("exact_two_time: missing v slice at the anchor time");
    const int row = anchor_step + lag_steps;
    if (row < 0 || row >= static_cast<int>(slice->second.size()))
        throw PreconditionError("exact_two_time: lag outside the solved grid");
    const Complex u_t = gf.u[anchor_step](0, 0);
    const Complex u_tt = gf.u[row](0, 0);
    return std::conj(u_t) * u_tt * n0 + slice->second[row](0, 0);
}

TwoTimeSeries exact_series(const greens::GreenFunctions& gf, double n0,
                           const std::vector<int>& anchor_steps, const std::vector<int>& lag_steps) {
    TwoTimeSeries s;
    s.anchor_steps = anchor_steps;
    s.lag_steps = lag_steps;
    s.dt = gf.grid.dt;
    s.occupation_at.resize(gf.grid.n_steps + 1, 0.0);
    if (gf.v_stride != 1)
        throw PreconditionError("exact_series: v_diag stride must be 1 for normalization");
    for (int k = 0; k <= gf.grid.n_steps; ++k) s.occupation_at[k] = diag_occupation(gf, n0, k);

    for (int a : anchor_steps) {
        std::vector<Complex> vals, norm;
        std::vector<char> def;
        for (int l : lag_steps) {
            const Complex c = exact_two_time(gf, n0, a, l);
            vals.push_back(c);
            const double na = s.occupation_at[a];
            const double nb = s.occupation_at[a + l];
            if (na < kDenominatorFloor || nb < kDenominatorFloor) {
                norm.push_back(Complex{0, 0});
                def.push_back(0);
            } else {
                norm.push_back(c / std::sqrt(na * nb));
                def.push_back(1);
            }
        }
        s.values.push_back(std::move(vals));
        s.normalized.push_back(std::move(norm));
        s.defined.push_back(std::move(def));
    }
    return s;
}

BmParameters bm_reference(const SystemSpec& sys) {
    if (!sys.scalar()) throw PreconditionError("bm_reference: scalar systems only");
    BmParameters p;
    p.eps_s = sys.scalar_energy();
    p.kappa = sys.total_J(p.eps_s);
    if (p.kappa <= 0.0)
        throw std::domain_error("bm_reference: J(e_s) = 0, no resonant decay channel (BM undefined)");
    p.lamb_shift = sys.total_lamb_shift(p.eps_s);
    double jf = 0.0;
    for (const auto& cr : sys.reservoirs) {
        const double Ja = cr.weight(0, 0).real() * cr.reservoir.density(p.eps_s);
        if (Ja > 0.0) jf += Ja * spectral::distribution(cr.reservoir, p.eps_s);
    }
    p.nbar = jf / p.kappa;
    return p;
}

double bm_occupation(const BmParameters& p, double n0, double t_minus_t0) {
    const double decay = std::exp(-p.kappa * t_minus_t0);
    return n0 * decay + p.nbar * (1.0 - decay);
}

Complex bm_two_time(const BmParameters& p, double n_bm_at_t, double tau) {
    if (tau < 0.0) throw std::invalid_argument("bm_two_time: tau must be >= 0");
    return std::polar(1.0, -(p.eps_s + p.lamb_shift) * tau) * std::exp(-0.5 * p.kappa * tau) *
           n_bm_at_t;
}

TwoTimeSeries bm_series(const BmParameters& p, double n0, double dt,
                        const std::vector<int>& anchor_steps, const std::vector<int>& lag_steps) {
    TwoTimeSeries s;
    s.anchor_steps = anchor_steps;
    s.lag_steps = lag_steps;
    s.dt = dt;
    int max_step = 0;
    for (int a : anchor_steps)
        for (int l : lag_steps) max_step = std::max(max_step, a + l);
    s.occupation_at.resize(max_step + 1);
    for (int k = 0; k <= max_step; ++k) s.occupation_at[k] = bm_occupation(p, n0, dt * k);

    for (int a : anchor_steps) {
        std::vector<Complex> vals, norm;
        std::vector<char> def;
        const double nt = s.occupation_at[a];
        for (int l : lag_steps) {
            const Complex c = bm_two_time(p, nt, dt * l);
            vals.push_back(c);
            const double nb = s.occupation_at[a + l];
            if (nt < kDenominatorFloor || nb < kDenominatorFloor) {
                norm.push_back(Complex{0, 0});
                def.push_back(0);
            } else {
                norm.push_back(c / std::sqrt(nt * nb));
                def.push_back(1);
            }
        }
        s.values.push_back(std::move(vals));
        s.normalized.push_back(std::move(norm));
        s.defined.push_back(std::move(def));
    }
    return s;
}

MeasureResult nonmarkov_measure(const TwoTimeSeries& exact, const TwoTimeSeries& bm) {
    if (exact.anchor_steps != bm.anchor_steps || exact.lag_steps != bm.lag_steps)
        throw std::invalid_argument("nonmarkov_measure: series must share anchors and lags");
    MeasureResult m;
    m.anchor_steps = exact.anchor_steps;
    m.lag_steps = exact.lag_steps;
    m.dt = exact.dt;
    for (std::size_t a = 0; a < exact.values.size(); ++a) {
        std::vector<double> row;
        std::vector<char> def;
        for (std::size_t l = 0; l < exact.lag_steps.size(); ++l) {
            if (!exact.defined[a][l] || !bm.defined[a][l]) {
                row.push_back(0.0);
                def.push_back(0);
            } else {
                row.push_back(std::abs(exact.normalized[a][l] - bm.normalized[a][l]));
                def.push_back(1);
            }
        }
        m.value.push_back(std::move(row));
        m.defined.push_back(std::move(def));
    }
    return m;
}

} // namespace fanodyn::corr
