// correlations.hpp - exact and Born-Markov two-time correlation functions and
// the normalized-correlator non-Markovianity measure.

#pragma once

#include <vector>

#include "fanodyn/greens.hpp"
#include "fanodyn/types.hpp"

namespace fanodyn::corr {

using spectral::SystemSpec;

// <adag(t) a(t+tau)> on a set of anchor times and lags (scalar system).
struct TwoTimeSeries {
    std::vector<int> anchor_steps;
    std::vector<int> lag_steps;
    double dt = 0.0;
    std::vector<std::vector<Complex>> values;      // [anchor][lag]
    std::vector<std::vector<Complex>> normalized;  // values / sqrt(n(t) n(t+tau))
    std::vector<std::vector<char>> defined;        // 0 where a denominator vanished
    std::vector<double> occupation_at;             // n(t) at every grid step
};

// Scalar exact correlator: u*(t) u(t+tau) n0 + v(t+tau, t); needs the v slice
// anchored at t (and v_diag for normalization).
Complex exact_two_time(const greens::GreenFunctions& gf, double n0, int anchor_step, int lag_steps);

TwoTimeSeries exact_series(const greens::GreenFunctions& gf, double n0,
                           const std::vector<int>& anchor_steps, const std::vector<int>& lag_steps);

// Constant-rate reference: kappa = J(e_s), Delta_LS = Delta(e_s), nbar = f(e_s, T).
struct BmParameters {
    double kappa = 0.0;
    double lamb_shift = 0.0;
    double nbar = 0.0;
    double eps_s = 0.0;
};

BmParameters bm_reference(const SystemSpec& sys);
double bm_occupation(const BmParameters& p, double n0, double t_minus_t0);
// Quantum-regression form e^{-i(e_s + Delta)tau} e^{-kappa tau / 2} n_BM(t).
Complex bm_two_time(const BmParameters& p, double n_bm_at_t, double tau);
TwoTimeSeries bm_series(const BmParameters& p, double n0, double dt,
                        const std::vector<int>& anchor_steps, const std::vector<int>& lag_steps);

// N(t, tau) = |exact normalized - BM normalized|; undefined entries flagged.
struct MeasureResult {
    std::vector<int> anchor_steps;
    std::vector<int> lag_steps;
    double dt = 0.0;
    std::vector<std::vector<double>> value;
    std::vector<std::vector<char>> defined;
};

MeasureResult nonmarkov_measure(const TwoTimeSeries& exact, const TwoTimeSeries& bm);

} // namespace fanodyn::corr
