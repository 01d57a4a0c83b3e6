// models.hpp - special exact master equations outside the generic N-level
// propagation: zero-temperature amplitude damping of a spin, pure dephasing,
// and the symmetrized-kernel Majorana dephasing channel.

#pragma once

#include <string>
#include <vector>

#include "fanodyn/spectral.hpp"
#include "fanodyn/types.hpp"

namespace fanodyn::models {

enum class SpecialModelKind { SpinZeroT, PureDephasing, Majorana };

struct SpecialModel {
    SpecialModelKind kind = SpecialModelKind::SpinZeroT;
    spectral::ReservoirSpec bath;
    double epsilon = 1.0;  // level splitting (spin kinds)

    void validate() const;
};

struct SpinTrajectory {
    TimeGrid grid;                  // rho lattice (step 2*dt)
    std::vector<Matrix> rho;        // 2x2, basis {excited, ground}
    std::vector<double> eps_prime;  // on the dt lattice
    std::vector<double> gamma;
    std::vector<Complex> u;
    std::vector<std::string> warnings;
};

// rho' = -i eps'(t) [s+s-, rho] + gamma(t) (2 s- rho s+ - s+s- rho - rho s+s-),
// with eps'(t), gamma(t) from the scalar Green-function pipeline.
SpinTrajectory spin_zero_T_dynamics(const SpecialModel& m, const TimeGrid& grid, const Matrix& rho0);

// gamma2(t) = 2 int dw J(w) coth(w / 2T) cos(w (t - t0)); the coth pole at
// w -> 0 is handled by series for w/2T < 1e-3.
double dephasing_rate(const SpecialModel& m, double t_minus_t0);

struct DephasingTrajectory {
    TimeGrid grid;
    std::vector<double> gamma2;          // rate on the grid
    std::vector<double> accumulated;     // Gamma(t) = int_0^t gamma2
    std::vector<Matrix> rho;             // closed-form map applied to rho0
};

// Populations constant; coherence rho_01(t) = rho_01(0) e^{-2 Gamma(t)} e^{-2 i eps t}.
DephasingTrajectory dephasing_dynamics(const SpecialModel& m, const TimeGrid& grid, const Matrix& rho0);

struct MajoranaTrajectory {
    TimeGrid grid;                 // rho lattice (step 2*dt)
    std::vector<Matrix> rho;       // 2x2 in the Majorana-pair basis
    std::vector<double> gamma;     // dt lattice
    std::vector<double> u;         // real symmetrized-kernel propagator
    std::vector<double> backflow_times;  // sign changes of gamma
    std::vector<std::string> warnings;
};

// rho' = gamma(t) (lambda rho lambda - rho) with lambda = sigma_x; gamma from
// the scalar Volterra solver with kernel g(tau) + g(-tau).
MajoranaTrajectory majorana_dynamics(const SpecialModel& m, const TimeGrid& grid, const Matrix& rho0);

} // namespace fanodyn::models
