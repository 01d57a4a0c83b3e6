// spectral.hpp - reservoir spectral densities J(e), occupation distributions,
// self-energy and Lamb shift; all frequency-domain inputs to the solvers.

#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "fanodyn/quadrature.hpp"
#include "fanodyn/types.hpp"

namespace fanodyn::spectral {

struct Interval {
    double lo = 0.0, hi = 0.0;
    double width() const { return hi - lo; }
};

// J(e) >= 0 on a finite union of intervals, zero outside. Families:
//   ohmic:      J = 2 pi eta e (e/e_c)^{s-1} exp(-e/e_c) on [0, inf), truncated
//               where J < 1e-12 of its peak
//   lorentzian: J = eta G^3 / ((e-e0)^2 + G^2), truncated at the same relative level
//   flat_band:  J = kappa on [lo, hi]
//   gapped_band: disjoint union of other densities
//   tabulated:  piecewise-linear through strictly increasing (e, J) samples
class SpectralDensity {
public:
    enum class Kind { Zero, OhmicFamily, Lorentzian, FlatBand, GappedBand, Tabulated };

    static SpectralDensity zero();
    static SpectralDensity ohmic(double eta, double s, double cutoff);
    static SpectralDensity lorentzian(double eta, double center, double width);
    static SpectralDensity flat_band(double kappa, double lo, double hi);
    static SpectralDensity gapped_band(std::vector<SpectralDensity> bands);
    static SpectralDensity tabulated(std::vector<std::pair<double, double>> samples);

    double operator()(double eps) const;  // J(e); exact 0 off support
    Kind kind() const { return kind_; }

    const std::vector<Interval>& support() const { return support_; }
    bool empty() const { return support_.empty(); }
    double support_min() const;
    double support_max() const;

    double peak() const { return peak_; }
    double total_weight() const { return total_weight_; }  // int J de
    // Radius around 0 containing 99.9% of int J; sets the kernel-resolution scale.
    double significant_radius() const { return significant_radius_; }

    // Quadrature metadata: interior points where J is not smooth, and endpoints
    // needing geometric refinement (power-law or otherwise non-polynomial edges).
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& singular_points() const { return singular_points_; }

    // Shared panel representation of J (built eagerly; immutable afterwards).
    const quad::PanelRule& panel_rule() const;

    // For the ohmic family: eta and cutoff (coupling scale used in bound-state
    // search margins); zero for other kinds.
    double ohmic_eta() const { return ohmic_eta_; }
    double ohmic_cutoff() const { return ohmic_cutoff_; }

private:
    struct Segment {
        Interval iv;
        Kind shape = Kind::Zero;
        // ohmic
        double eta = 0.0, s = 1.0, cutoff = 1.0;
        // lorentzian
        double center = 0.0, width = 1.0;
        // flat
        double kappa = 0.0;
        // tabulated
        std::vector<double> xs, ys;
        double value(double eps) const;
    };

    void finalize();

    Kind kind_ = Kind::Zero;
    std::vector<Segment> segments_;
    std::vector<Interval> support_;
    std::vector<double> breakpoints_, singular_points_;
    double peak_ = 0.0, total_weight_ = 0.0, significant_radius_ = 0.0;
    double ohmic_eta_ = 0.0, ohmic_cutoff_ = 0.0;
    std::shared_ptr<const quad::PanelRule> rule_;
};

struct ReservoirSpec {
    Statistics statistics = Statistics::Boson;
    double temperature = 0.0;        // k_B = 1
    double chemical_potential = 0.0;
    SpectralDensity density;

    void validate() const;
};

// Bose-Einstein / Fermi-Dirac occupation with T = 0 step limits.
double distribution(const ReservoirSpec& r, double eps);
double distribution(Statistics stat, double temperature, double mu, double eps);

// Lamb shift Delta(e) = P int de'/2pi J(e')/(e - e'), on or off support.
double lamb_shift(const SpectralDensity& d, double eps);

// Retarded self-energy Sigma(e + i0+) = Delta(e) - i J(e)/2.
Complex self_energy(const SpectralDensity& d, double eps);

namespace detail {
// Reference implementation per the symmetric-window adaptive scheme; used to
// cross-check the panel route in tests.
double lamb_shift_adaptive(const SpectralDensity& d, double eps);
} // namespace detail

struct CoupledReservoir {
    ReservoirSpec reservoir;
    Matrix weight;  // Hermitian PSD channel matrix scaling J (N x N)
};

struct SystemSpec {
    Statistics statistics = Statistics::Boson;
    Matrix energy;  // N x N Hermitian
    std::vector<CoupledReservoir> reservoirs;

    int levels() const { return static_cast<int>(energy.rows()); }
    bool scalar() const { return levels() == 1; }
    double scalar_energy() const;
    void validate() const;

    // Scalar helpers (N = 1): totals over reservoirs weighted by weight(0,0).
    double total_J(double eps) const;
    double total_lamb_shift(double eps) const;
    Complex total_self_energy(double eps) const;
    double total_weight_integral() const;          // int of the summed J
    std::vector<Interval> total_support() const;   // merged union
    double significant_radius() const;

    static SystemSpec single_level(Statistics stat, double eps_s, ReservoirSpec res);
    static SystemSpec closed(Statistics stat, double eps_s);
};

} // namespace fanodyn::spectral
