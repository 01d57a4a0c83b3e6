#include "fanodyn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fanodyn/errors.hpp"

namespace fanodyn::spectral {

namespace {
constexpr double kTruncationLevel = 1e-12;  // J/J_peak at the numerical support edge

void check_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be finite");
}
} // namespace

// ---------------------------------------------------------------------------
// Segment evaluation
// ---------------------------------------------------------------------------

double SpectralDensity::Segment::value(double eps) const {
    switch (shape) {
        case Kind::OhmicFamily: {
            if (eps <= 0.0) return 0.0;
            return 2.0 * kPi * eta * eps * std::pow(eps / cutoff, s - 1.0) * std::exp(-eps / cutoff);
        }
        case Kind::Lorentzian: {
            const double d = eps - center;
            return eta * width * width * width / (d * d + width * width);
        }
        case Kind::FlatBand:
            return kappa;
        case Kind::Tabulated: {
            auto it = std::upper_bound(xs.begin(), xs.end(), eps);
            if (it == xs.begin() || it == xs.end()) {
                if (it == xs.end() && eps == xs.back()) return ys.back();
                return 0.0;
            }
            const std::size_t i = static_cast<std::size_t>(it - xs.begin());
            const double t = (eps - xs[i - 1]) / (xs[i] - xs[i - 1]);
            return ys[i - 1] + t * (ys[i] - ys[i - 1]);
        }
        default:
            return 0.0;
    }
}

// ---------------------------------------------------------------------------
// Factories
// ---------------------------------------------------------------------------

SpectralDensity SpectralDensity::zero() {
    SpectralDensity d;
    d.kind_ = Kind::Zero;
    d.finalize();
    return d;
}

SpectralDensity SpectralDensity::ohmic(double eta, double s, double cutoff) {
    check_finite(eta, "eta");
    check_finite(s, "s");
    check_finite(cutoff, "cutoff");
    if (eta < 0.0) throw std::invalid_argument("ohmic: eta must be >= 0");
    if (!(s > 0.0)) throw std::invalid_argument("ohmic: s must be > 0");
    if (!(cutoff > 0.0)) throw std::invalid_argument("ohmic: cutoff must be > 0");
    SpectralDensity d;
    d.kind_ = Kind::OhmicFamily;
    d.ohmic_eta_ = eta;
    d.ohmic_cutoff_ = cutoff;
    if (eta == 0.0) {
        d.finalize();
        return d;
    }
    // Peak at e = s*e_c; truncate where x^s e^-x drops to 1e-12 of its peak.
    const double peak_x = s;
    const double peak_val = std::pow(peak_x, s) * std::exp(-peak_x);
    double lo_x = peak_x, hi_x = peak_x + 40.0 + 3.0 * s;
    while (std::pow(hi_x, s) * std::exp(-hi_x) > kTruncationLevel * peak_val) hi_x *= 1.5;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo_x + hi_x);
        if (std::pow(mid, s) * std::exp(-mid) > kTruncationLevel * peak_val)
            lo_x = mid;
        else
            hi_x = mid;
    }
    Segment seg;
    seg.shape = Kind::OhmicFamily;
    seg.eta = eta;
    seg.s = s;
    seg.cutoff = cutoff;
    seg.iv = {0.0, hi_x * cutoff};
    d.segments_.push_back(std::move(seg));
    d.finalize();
    return d;
}

SpectralDensity SpectralDensity::lorentzian(double eta, double center, double width) {
    check_finite(eta, "eta");
    check_finite(center, "center");
    check_finite(width, "width");
    if (eta < 0.0) throw std::invalid_argument("lorentzian: eta must be >= 0");
    if (!(width > 0.0)) throw std::invalid_argument("lorentzian: width must be > 0");
    SpectralDensity d;
    d.kind_ = Kind::Lorentzian;
    if (eta == 0.0) {
        d.finalize();
        return d;
    }
    const double radius = width * std::sqrt(1.0 / kTruncationLevel - 1.0);
    Segment seg;
    seg.shape = Kind::Lorentzian;
    seg.eta = eta;
    seg.center = center;
    seg.width = width;
    seg.iv = {center - radius, center + radius};
    d.segments_.push_back(std::move(seg));
    d.finalize();
    return d;
}

SpectralDensity SpectralDensity::flat_band(double kappa, double lo, double hi) {
    check_finite(kappa, "kappa");
    check_finite(lo, "lo");
    check_finite(hi, "hi");
    if (kappa < 0.0) throw std::invalid_argument("flat_band: kappa must be >= 0");
    if (!(hi > lo)) throw std::invalid_argument("flat_band: band must have positive width");
    SpectralDensity d;
    d.kind_ = Kind::FlatBand;
    if (kappa == 0.0) {
        d.finalize();
        return d;
    }
    Segment seg;
    seg.shape = Kind::FlatBand;
    seg.kappa = kappa;
    seg.iv = {lo, hi};
    d.segments_.push_back(std::move(seg));
    d.finalize();
    return d;
}

SpectralDensity SpectralDensity::gapped_band(std::vector<SpectralDensity> bands) {
    SpectralDensity d;
    d.kind_ = Kind::GappedBand;
    for (auto& b : bands)
        for (auto& seg : b.segments_) d.segments_.push_back(seg);
    std::sort(d.segments_.begin(), d.segments_.end(),
              [](const Segment& l, const Segment& r) { return l.iv.lo < r.iv.lo; });
    for (std::size_t i = 0; i + 1 < d.segments_.size(); ++i)
        if (d.segments_[i].iv.hi > d.segments_[i + 1].iv.lo)
            throw std::invalid_argument("gapped_band: bands must be disjoint");
    d.finalize();
    return d;
}

SpectralDensity SpectralDensity::tabulated(std::vector<std::pair<double, double>> samples) {
    if (samples.size() < 2) throw std::invalid_argument("tabulated: need at least two samples");
    SpectralDensity d;
    d.kind_ = Kind::Tabulated;
    Segment seg;
    seg.shape = Kind::Tabulated;
    for (auto& [x, y] : samples) {
        check_finite(x, "sample energy");
        check_finite(y, "sample value");
        if (y < 0.0) throw std::invalid_argument("tabulated: J samples must be >= 0");
        if (!seg.xs.empty() && !(x > seg.xs.back()))
            throw std::invalid_argument("tabulated: sample energies must be strictly increasing");
        seg.xs.push_back(x);
        seg.ys.push_back(y);
    }
    seg.iv = {seg.xs.front(), seg.xs.back()};
    d.segments_.push_back(std::move(seg));
    d.finalize();
    return d;
}

// ---------------------------------------------------------------------------
// Shared metadata
// ---------------------------------------------------------------------------

void SpectralDensity::finalize() {
    support_.clear();
    breakpoints_.clear();
    singular_points_.clear();
    peak_ = 0.0;
    total_weight_ = 0.0;
    significant_radius_ = 0.0;

    for (auto& seg : segments_) {
        support_.push_back(seg.iv);
        switch (seg.shape) {
            case Kind::OhmicFamily: {
                // Peak and exact weight: int_0^inf J = 2 pi eta e_c^2 Gamma(s+1).
                peak_ = std::max(peak_, 2.0 * kPi * seg.eta * seg.cutoff * std::pow(seg.s, seg.s) *
                                            std::exp(-seg.s));
                total_weight_ += 2.0 * kPi * seg.eta * seg.cutoff * seg.cutoff * std::tgamma(seg.s + 1.0);
                // Power-law edge at 0; mark the peak as a breakpoint aid.
                singular_points_.push_back(0.0);
                breakpoints_.push_back(seg.s * seg.cutoff);
                breakpoints_.push_back(seg.cutoff);
                break;
            }
            case Kind::Lorentzian: {
                peak_ = std::max(peak_, seg.eta * seg.width);
                const double R = seg.iv.hi - seg.center;
                total_weight_ += 2.0 * seg.eta * seg.width * seg.width * std::atan(R / seg.width);
                breakpoints_.push_back(seg.center);
                breakpoints_.push_back(seg.center - seg.width);
                breakpoints_.push_back(seg.center + seg.width);
                // Heavy 1/e^2 tails: geometric panels toward both truncation edges
                // are wasteful; instead ladder AWAY from the center via breakpoints.
                for (double w = 4.0 * seg.width; w < R; w *= 4.0) {
                    breakpoints_.push_back(seg.center - w);
                    breakpoints_.push_back(seg.center + w);
                }
                break;
            }
            case Kind::FlatBand:
                peak_ = std::max(peak_, seg.kappa);
                total_weight_ += seg.kappa * seg.iv.width();
                break;
            case Kind::Tabulated: {
                for (std::size_t i = 0; i < seg.xs.size(); ++i) {
                    peak_ = std::max(peak_, seg.ys[i]);
                    if (i > 0)
                        total_weight_ += 0.5 * (seg.ys[i] + seg.ys[i - 1]) * (seg.xs[i] - seg.xs[i - 1]);
                    if (i > 0 && i + 1 < seg.xs.size()) breakpoints_.push_back(seg.xs[i]);
                }
                break;
            }
            default:
                break;
        }
    }

    if (segments_.empty()) {
        rule_.reset();
        return;
    }

    std::vector<std::pair<double, double>> intervals;
    for (auto& iv : support_) intervals.push_back({iv.lo, iv.hi});
    auto self = [this](double e) { return (*this)(e); };
    rule_ = std::make_shared<quad::PanelRule>(
        quad::PanelRule::build(self, intervals, breakpoints_, singular_points_, {}));
    total_weight_ = rule_->integral();  // keep weight consistent with the panels

    // 99.9% mass radius by bisection on the panel representation.
    const double lo_abs = std::max(std::abs(support_min()), std::abs(support_max()));
    double lo = 0.0, hi = lo_abs;
    auto mass_within = [&](double R) {
        double m = 0.0;
        for (const auto& p : rule_->panels()) {
            const double a = p.center - p.half, b = p.center + p.half;
            if (b <= -R || a >= R) continue;
            if (a >= -R && b <= R) {
                m += 2.0 * p.half * p.coef[0];
            } else {
                // Partial panel: crude linear share is enough for a scale estimate.
                const double ov = std::min(b, R) - std::max(a, -R);
                m += 2.0 * p.half * p.coef[0] * (ov / (b - a));
            }
        }
        return m;
    };
    const double target = 0.999 * total_weight_;
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mass_within(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    significant_radius_ = hi;
}

double SpectralDensity::operator()(double eps) const {
    if (!std::isfinite(eps)) throw std::invalid_argument("evaluate_J: energy must be finite");
    for (const auto& seg : segments_)
        if (eps >= seg.iv.lo && eps <= seg.iv.hi) return std::max(0.0, seg.value(eps));
    return 0.0;
}

double SpectralDensity::support_min() const {
    return support_.empty() ? 0.0 : support_.front().lo;
}

double SpectralDensity::support_max() const {
    return support_.empty() ? 0.0 : support_.back().hi;
}

const quad::PanelRule& SpectralDensity::panel_rule() const {
    static const quad::PanelRule empty_rule;
    return rule_ ? *rule_ : empty_rule;
}

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

double distribution(Statistics stat, double temperature, double mu, double eps) {
    if (!std::isfinite(eps)) throw std::invalid_argument("distribution: energy must be finite");
    if (temperature < 0.0) throw std::invalid_argument("distribution: temperature must be >= 0");
    if (stat == Statistics::Boson && eps <= mu)
        throw std::domain_error("distribution: boson occupation requires e > mu");
    if (temperature == 0.0) {
        if (stat == Statistics::Boson) return 0.0;
        if (eps < mu) return 1.0;
        if (eps > mu) return 0.0;
        return 0.5;
    }
    const double x = (eps - mu) / temperature;
    if (stat == Statistics::Boson) {
        if (x > 700.0) return std::exp(-x);
        return 1.0 / std::expm1(x);
    }
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

double distribution(const ReservoirSpec& r, double eps) {
    return distribution(r.statistics, r.temperature, r.chemical_potential, eps);
}

void ReservoirSpec::validate() const {
    if (temperature < 0.0) throw std::invalid_argument("reservoir: temperature must be >= 0");
    if (!std::isfinite(chemical_potential))
        throw std::invalid_argument("reservoir: chemical potential must be finite");
    if (statistics == Statistics::Boson && !density.empty()) {
        const double lo = density.support_min();
        if (chemical_potential > lo)
            throw std::invalid_argument("reservoir: boson chemical potential must not exceed the "
                                        "bottom of the spectral support");
        if (chemical_potential == lo) {
            // Allowed only when J vanishes at the edge (no condensation divergence).
            const double probe = lo + 1e-9 * std::max(1.0, std::abs(lo) + density.support_max() - lo);
            if (density(probe) > 1e-3 * density.peak())
                throw std::invalid_argument("reservoir: boson chemical potential touches a band "
                                            "edge with nonvanishing J");
        }
    }
}

// ---------------------------------------------------------------------------
// Lamb shift and self-energy
// ---------------------------------------------------------------------------

double lamb_shift(const SpectralDensity& d, double eps) {
    if (!std::isfinite(eps)) throw std::invalid_argument("lamb_shift: energy must be finite");
    if (d.empty()) return 0.0;
    return d.panel_rule().pole_integral(eps) / (2.0 * kPi);
}

Complex self_energy(const SpectralDensity& d, double eps) {
    return Complex{lamb_shift(d, eps), -0.5 * d(eps)};
}

namespace detail {

double lamb_shift_adaptive(const SpectralDensity& d, double eps) {
    if (d.empty()) return 0.0;
    quad::AdaptiveOptions opts;
    opts.abs_tol = 1e-10 * std::max(d.peak(), 1e-300);
    opts.rel_tol = 1e-9;
    double sum = 0.0;
    auto J = [&](double x) { return d(x); };
    for (const auto& iv : d.support()) {
        if (eps > iv.lo && eps < iv.hi) {
            sum += quad::principal_value(J, iv.lo, iv.hi, eps, opts).value;
        } else {
            auto f = [&](double x) { return d(x) / (eps - x); };
            sum += quad::integrate(f, iv.lo, iv.hi, opts).value;
        }
    }
    return sum / (2.0 * kPi);
}

} // namespace detail

// ---------------------------------------------------------------------------
// SystemSpec
// ---------------------------------------------------------------------------

double SystemSpec::scalar_energy() const {
    if (!scalar()) throw PreconditionError("operation requires a single-level system");
    return energy(0, 0).real();
}

void SystemSpec::validate() const {
    if (energy.rows() == 0 || energy.rows() != energy.cols())
        throw std::invalid_argument("system: energy matrix must be square and nonempty");
    const double scale = std::max(energy.norm(), 1e-300);
    if ((energy - energy.adjoint()).norm() > 1e-12 * scale)
        throw std::invalid_argument("system: energy matrix must be Hermitian");
    for (const auto& cr : reservoirs) {
        if (cr.reservoir.statistics != statistics)
            throw std::invalid_argument("system: all reservoirs must share the system statistics");
        cr.reservoir.validate();
        if (cr.weight.rows() != energy.rows() || cr.weight.cols() != energy.cols())
            throw std::invalid_argument("system: coupling weight matrix must be N x N");
        const double wscale = std::max(cr.weight.norm(), 1e-300);
        if ((cr.weight - cr.weight.adjoint()).norm() > 1e-10 * wscale)
            throw std::invalid_argument("system: coupling weight matrix must be Hermitian");
        Eigen::SelfAdjointEigenSolver<Matrix> es(cr.weight);
        if (es.eigenvalues().minCoeff() < -1e-10 * wscale)
            throw std::invalid_argument("system: coupling weight matrix must be positive semidefinite");
    }
}

double SystemSpec::total_J(double eps) const {
    double j = 0.0;
    for (const auto& cr : reservoirs) j += cr.weight(0, 0).real() * cr.reservoir.density(eps);
    return j;
}

double SystemSpec::total_lamb_shift(double eps) const {
    double v = 0.0;
    for (const auto& cr : reservoirs)
        v += cr.weight(0, 0).real() * lamb_shift(cr.reservoir.density, eps);
    return v;
}

Complex SystemSpec::total_self_energy(double eps) const {
    return Complex{total_lamb_shift(eps), -0.5 * total_J(eps)};
}

double SystemSpec::total_weight_integral() const {
    double v = 0.0;
    for (const auto& cr : reservoirs)
        v += cr.weight(0, 0).real() * cr.reservoir.density.total_weight();
    return v;
}

std::vector<Interval> SystemSpec::total_support() const {
    std::vector<Interval> all;
    for (const auto& cr : reservoirs)
        for (const auto& iv : cr.reservoir.density.support()) all.push_back(iv);
    std::sort(all.begin(), all.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const auto& iv : all) {
        if (!merged.empty() && iv.lo <= merged.back().hi)
            merged.back().hi = std::max(merged.back().hi, iv.hi);
        else
            merged.push_back(iv);
    }
    return merged;
}

double SystemSpec::significant_radius() const {
    double r = 0.0;
    for (const auto& cr : reservoirs) r = std::max(r, cr.reservoir.density.significant_radius());
    return r;
}

SystemSpec SystemSpec::single_level(Statistics stat, double eps_s, ReservoirSpec res) {
    SystemSpec s;
    s.statistics = stat;
    s.energy = Matrix::Constant(1, 1, Complex{eps_s, 0.0});
    CoupledReservoir cr;
    cr.reservoir = std::move(res);
    cr.weight = Matrix::Identity(1, 1);
    s.reservoirs.push_back(std::move(cr));
    s.validate();
    return s;
}

SystemSpec SystemSpec::closed(Statistics stat, double eps_s) {
    SystemSpec s;
    s.statistics = stat;
    s.energy = Matrix::Constant(1, 1, Complex{eps_s, 0.0});
    s.validate();
    return s;
}

} // namespace fanodyn::spectral
