// types.hpp - shared scalar/matrix aliases and the uniform time lattice

#pragma once

#include <complex>
#include <stdexcept>

#include <Eigen/Dense>

namespace fanodyn {

using Complex = std::complex<double>;
using Matrix  = Eigen::MatrixXcd;
using RealVec = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kI{0.0, 1.0};

enum class Statistics { Boson, Fermion };

inline const char* to_string(Statistics s) {
    return s == Statistics::Boson ? "boson" : "fermion";
}

// Uniform lattice t_k = t0 + k*dt, k = 0..n_steps.
struct TimeGrid {
    double t0      = 0.0;
    double dt      = 0.0;
    int    n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, int n_steps_) : t0(t0_), dt(dt_), n_steps(n_steps_) {
        if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
        if (n_steps < 2) throw std::invalid_argument("TimeGrid: n_steps must be at least 2");
    }

    double time(int k) const { return t0 + dt * k; }
    double t_max() const { return t0 + dt * n_steps; }
    int    points() const { return n_steps + 1; }
};

} // namespace fanodyn
