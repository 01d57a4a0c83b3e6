// quadrature.hpp - Gauss-Legendre machinery: adaptive integration, principal
// values, and a panel-Legendre rule for oscillatory transforms F(tau) = int w(e) e^{-i e tau} de.

#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "fanodyn/types.hpp"

namespace fanodyn::quad {

// Nodes/weights on [-1, 1]; cached per order (thread-safe after first use of an order).
const std::vector<double>& gl_nodes(int order);
const std::vector<double>& gl_weights(int order);

struct AdaptiveOptions {
    double abs_tol   = 1e-12;
    double rel_tol   = 1e-10;
    int    max_depth = 48;
    int    order     = 16;
    bool   throw_on_failure = true;
};

struct QuadResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool   converged = true;
};

using Fn = std::function<double(double)>;

// Adaptive bisection, accepting a panel when |GL(panel) - GL(halves)| meets the
// local share of the tolerance budget.
QuadResult integrate(const Fn& f, double a, double b, const AdaptiveOptions& opts = {});
QuadResult integrate_intervals(const Fn& f, const std::vector<std::pair<double, double>>& parts,
                               const AdaptiveOptions& opts = {});

// P int_a^b f(x)/(pole - x) dx with pole strictly inside (a, b): the largest
// symmetric window about the pole integrates [f(x) - f(pole)]/(pole - x) (the
// log term cancels by symmetry); the remainder is regular.
QuadResult principal_value(const Fn& f, double a, double b, double pole,
                           const AdaptiveOptions& opts = {});

// Spherical Bessel j_0..j_nmax at x >= 0 (series / upward / Miller downward).
void spherical_bessel(int nmax, double x, double* out);

// Legendre P_0..P_nmax at x.
void legendre_values(int nmax, double x, double* out);

// Legendre Q_0..Q_nmax at y (second kind; principal value for |y| < 1).
// Forward recurrence; accurate for |y| <~ 2, callers keep far poles on the
// direct-quadrature path.
void legendre_q(int nmax, double y, double* out);

// ---------------------------------------------------------------------------
// Panel-Legendre representation of a weight w on a union of intervals.
//
// Each panel stores Legendre coefficients of w, so
//   int_panel w(e) e^{-i e tau} de = h e^{-i c tau} sum_n a_n * 2(-i)^n j_n(h tau)
// is exact in tau; panel count tracks the smoothness of w, not the phase.
// The same representation evaluates int w/(e0 - e) de with analytic pole
// moments (Legendre Q), giving fast Hilbert transforms.
// ---------------------------------------------------------------------------

struct PanelRuleOptions {
    int    coeff_order = 12;   // Legendre coefficients per panel
    int    proj_nodes  = 24;   // GL nodes used for the projection
    double rel_tol     = 1e-10;
    int    max_panels  = 6000;
    double min_rel_width = 1e-13;
};

class PanelRule {
public:
    struct Panel {
        double center = 0.0;
        double half   = 0.0;
        std::vector<double> coef;    // Legendre coefficients a_0..a_{P-1}
        std::vector<double> fvals;   // w at the projection nodes (for direct pole sums)
        double abs_mass = 0.0;       // ~ int |w| over the panel
    };

    static PanelRule build(const Fn& w,
                           const std::vector<std::pair<double, double>>& intervals,
                           std::vector<double> breakpoints,
                           std::vector<double> singular_points,
                           const PanelRuleOptions& opts = {});

    // int w(e) e^{-i e tau} de  (no 1/2pi factor)
    Complex fourier(double tau) const;
    void fourier_lattice(double dt, int n, Complex* out, int threads = 1) const;

    double integral() const;   // tau = 0
    double abs_mass() const;

    // int w(e)/(pole - e) de; principal value when the pole lies inside a panel.
    double pole_integral(double pole) const;

    const std::vector<Panel>& panels() const { return panels_; }

private:
    std::vector<Panel> panels_;
    int order_ = 12;
    int proj_nodes_ = 24;
};

} // namespace fanodyn::quad
