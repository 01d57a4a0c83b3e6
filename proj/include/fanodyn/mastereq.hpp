// mastereq.hpp - exact master-equation coefficients from Green functions, the
// generator in truncated Fock bases, Lindblad decomposition, and density-matrix
// propagation.

#pragma once

#include <string>
#include <vector>

#include "fanodyn/greens.hpp"
#include "fanodyn/types.hpp"

namespace fanodyn::me {

// Per-step Hermitian coefficient matrices:
//   eps' = (i/2)[du u^-1 - h.c.],   gamma = -(1/2)[du u^-1 + h.c.],
//   gamma~ = dv(t,t) - [du u^-1 v + h.c.]
struct MECoefficients {
    TimeGrid grid;
    std::vector<Matrix> eps_prime, gamma, gamma_tilde;
    std::vector<char> finite;  // 0 where u was near-singular (coefficients NaN)
    std::vector<std::string> notes;

    int levels() const { return eps_prime.empty() ? 0 : static_cast<int>(eps_prime[0].rows()); }
};

// Requires v_diag at stride 1. du/dt is taken from the stored equation RHS;
// dv(t,t)/dt from 4-point finite differences (one-sided at the ends).
MECoefficients compute_coefficients(const greens::GreenFunctions& gf);

// Ladder operators in a truncated basis: single-mode boson Fock space with
// cutoff n_max, or the 2^N fermion Fock space (Jordan-Wigner ordering).
struct LadderSet {
    Statistics statistics = Statistics::Boson;
    int modes = 1;
    int boson_cutoff = 0;
    std::vector<Matrix> a, adag;

    int dim() const { return static_cast<int>(a.empty() ? 0 : a[0].rows()); }

    static LadderSet boson(int cutoff);
    static LadderSet fermion(int modes);
};

struct DensityMatrix {
    Statistics statistics = Statistics::Boson;
    int modes = 1;
    int boson_cutoff = 0;
    Matrix rho;

    void validate() const;  // trace 1e-8, Hermitian 1e-10, min eig >= -1e-8

    static DensityMatrix boson_fock(int n, int cutoff);
    static DensityMatrix boson_coherent(Complex alpha, int cutoff);
    static DensityMatrix fermion_diag(const std::vector<double>& occupations);  // product state
    static DensityMatrix from_matrix(Statistics stat, int modes, int cutoff, Matrix rho);
};

// d rho/dt for one coefficient instant. Signs: boson upper / fermion lower in
// gamma~ [adag_i rho a_j +- a_j rho adag_i -+ adag_i a_j rho - rho a_j adag_i].
Matrix generator_apply(const Matrix& rho, const Matrix& eps_prime, const Matrix& gamma,
                       const Matrix& gamma_tilde, Statistics stat, const LadderSet& ops);

// Lindblad rewriting: weight gamma~_ij on L_{adag_i, a_j} and
// (2 gamma_ij +- gamma~_ij) on L_{a_j, adag_i}; H unchanged.
struct LindbladForm {
    Matrix hamiltonian;  // coefficient-space eps'; lifted through the ladders on application
    struct Channel {
        int i = 0, j = 0;
        bool raising_family = false;  // true: L_{adag_i, a_j}; false: L_{a_j, adag_i}
        Complex weight{0.0, 0.0};     // real parts may be negative in non-Markovian regimes
    };
    std::vector<Channel> channels;
};
LindbladForm lindblad_form(const Matrix& eps_prime, const Matrix& gamma, const Matrix& gamma_tilde,
                           Statistics stat);
Matrix apply_lindblad(const LindbladForm& form, const Matrix& rho, const LadderSet& ops);

struct PropagationOptions {
    double top_level_threshold = 1e-8;  // boson cutoff check
    bool hermitize = true;
    bool track_spectrum = true;
};

struct RhoTrajectory {
    TimeGrid grid;  // step = 2 * coefficient dt
    std::vector<Matrix> rho;
    double max_trace_drift = 0.0;
    double min_eigenvalue = 0.0;
    std::vector<std::string> warnings;
};

// Classical RK4 with step 2*dt so stage times land on the coefficient grid;
// non-finite coefficient steps are bridged by linear interpolation.
RhoTrajectory propagate_rho(const DensityMatrix& rho0, const MECoefficients& coeffs,
                            const PropagationOptions& opts = {});

// <adag_i a_j>(t) from the Green functions: transpose(u n0^T u^dagger + v(t,t)).
// n0 uses the same convention, (n0)_ij = <adag_i a_j>(t0). Entries follow the
// v_diag stride.
std::vector<Matrix> occupation(const greens::GreenFunctions& gf, const Matrix& n0);

} // namespace fanodyn::me
