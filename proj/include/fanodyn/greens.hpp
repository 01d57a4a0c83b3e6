// greens.hpp - nonequilibrium Green functions for the linearly coupled model:
// Volterra marching for the retarded propagator u, the correlation function v,
// localized bound states, and frequency-domain spectra.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "fanodyn/spectral.hpp"
#include "fanodyn/types.hpp"

namespace fanodyn::greens {

using spectral::SystemSpec;

struct SolverOptions {
    double norm_tol = 1e-3;  // instability threshold on ||u|| - 1
    int    threads = 1;
    bool   cross_check = false;  // compare the v quadratic form against direct marching
    double cross_check_tol = 1e-6;
    bool   enforce_dt_precondition = true;
};

struct BoundState {
    double energy = 0.0;
    double residue = 0.0;
    bool   near_edge = false;  // root within 1e-6 of a band edge: unreliable
};

struct BoundStateResult {
    std::vector<BoundState> states;
    std::vector<std::string> notes;
};

// Kernels on the difference lattice {k dt}, assembled once per run:
//   g(tau)  = sum_a W_a (1/2pi) int J_a e^{-i e tau} de
//   gt(tau) = sum_a W_a (1/2pi) int J_a f_a e^{-i e tau} de
// Negative lags follow from g(-tau) = g(tau)^dagger.
class KernelCache {
public:
    static KernelCache build(const SystemSpec& sys, const TimeGrid& grid, int threads = 1);

    const Matrix& g(int k) const { return g_[k]; }
    const Matrix& g_tilde(int k) const { return gt_[k]; }
    const std::vector<Matrix>& g_all() const { return g_; }
    const std::vector<Matrix>& gt_all() const { return gt_; }
    int size() const { return static_cast<int>(g_.size()); }
    bool scalar() const { return scalar_; }
    const std::vector<Complex>& g_flat() const { return g_scalar_; }
    const std::vector<Complex>& gt_flat() const { return gt_scalar_; }

private:
    std::vector<Matrix> g_, gt_;
    std::vector<Complex> g_scalar_, gt_scalar_;
    bool scalar_ = false;
};

struct GreenFunctions {
    TimeGrid grid;
    std::vector<Matrix> u;      // u(t_k, t0), k = 0..n
    std::vector<Matrix> u_dot;  // du/dt from the equation's right-hand side
    int v_stride = 1;
    std::vector<Matrix> v_diag;            // v(t_m, t_m) at m = 0, stride, 2*stride, ...
    std::map<int, std::vector<Matrix>> v_slices;  // anchor index -> v(t_j, t_anchor), j = 0..n
    std::vector<std::string> notes;
    bool has_v = false;

    int v_diag_index(int step) const { return step / v_stride; }
};

// One-off kernel evaluations (the solvers use KernelCache).
Matrix memory_kernel(const SystemSpec& sys, double tau);
Matrix noise_kernel(const SystemSpec& sys, double tau);

// Second-order predictor-corrector march of
//   du/dt + i eps u + int_0^t g(t - t') u(t') dt' = 0,  u(0) = 1,
// in the interaction picture (the bare phase is exact).
GreenFunctions solve_u(const SystemSpec& sys, const TimeGrid& grid, const SolverOptions& opts = {});

// Fills v_diag (every `stride` steps) and slices at the requested anchor times via
// the closed-form double integral v(t,t') = int int u g~ u^dagger; optional
// cross-check against direct marching of the inhomogeneous Volterra equation.
void solve_v(const SystemSpec& sys, GreenFunctions& gf, const std::vector<double>& anchor_times = {},
             int stride = 1, const SolverOptions& opts = {});

// Direct march of the v equation at a fixed anchor (cross-check / testing route).
std::vector<Matrix> march_v_slice(const SystemSpec& sys, const GreenFunctions& gf, int anchor_index,
                                  const SolverOptions& opts = {});

// Scalar bound-state search: roots of e - e_s - Delta(e) in every gap and
// exterior interval; residue Z = 1/(1 - Delta'(e_b)).
BoundStateResult find_bound_states(const SystemSpec& sys);

// D_d(e) = (J/2pi) / ((e - e_s - Delta)^2 + (J/2)^2); zero off support.
double dissipation_spectrum(const SystemSpec& sys, double eps);
double dissipation_weight(const SystemSpec& sys);  // int D_d de over the support

// u(t) rebuilt from the spectral decomposition: bound-state oscillations plus
// the continuum transform of D_d.
std::vector<Complex> reconstruct_u(const SystemSpec& sys, const TimeGrid& grid);

// chi(e) = [D_b(e, ts) + D_d(e)] f(e, T); ts enters only with several bound states.
double steady_fluctuation_spectrum(const SystemSpec& sys, const std::vector<BoundState>& states,
                                   double eps, double ts_minus_t0);
double steady_fluctuation_weight(const SystemSpec& sys, const std::vector<BoundState>& states,
                                 double ts_minus_t0);

namespace detail {
// Shared Volterra PECE core; inhom may be empty. Returns the series and its
// right-hand-side derivative.
void volterra_march(const Matrix& eps, const std::vector<Matrix>& g_lattice, double dt, int n_steps,
                    const Matrix& init, const std::vector<Matrix>* inhom, double norm_tol,
                    bool check_norm, std::vector<Matrix>& out, std::vector<Matrix>& out_dot);
double grid_scale_limit(const SystemSpec& sys);  // max(|eps|, 99.9% mass radius)
} // namespace detail

} // namespace fanodyn::greens
