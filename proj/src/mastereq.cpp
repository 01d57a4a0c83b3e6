#include "fanodyn/mastereq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fanodyn/errors.hpp"

namespace fanodyn::me {

namespace {

Matrix hermitize(const Matrix& m) { return 0.5 * (m + m.adjoint()); }

// First derivative on a uniform lattice, 4-point stencils, O(h^3) at the ends.
Matrix lattice_derivative(const std::vector<Matrix>& f, int k, double h) {
    const int n = static_cast<int>(f.size()) - 1;
    if (n < 3) throw PreconditionError("derivative needs at least 4 lattice points");
    if (k >= 2 && k <= n - 2)
        return (f[k - 2] - 8.0 * f[k - 1] + 8.0 * f[k + 1] - f[k + 2]) / (12.0 * h);
    if (k == 0)
        return (-11.0 * f[0] + 18.0 * f[1] - 9.0 * f[2] + 2.0 * f[3]) / (6.0 * h);
    if (k == 1)
        return (-2.0 * f[0] - 3.0 * f[1] + 6.0 * f[2] - f[3]) / (6.0 * h);
    if (k == n - 1)
        return (2.0 * f[n] + 3.0 * f[n - 1] - 6.0 * f[n - 2] + f[n - 3]) / (6.0 * h);
    return (11.0 * f[n] - 18.0 * f[n - 1] + 9.0 * f[n - 2] - 2.0 * f[n - 3]) / (6.0 * h);
}

} // namespace

MECoefficients compute_coefficients(const greens::GreenFunctions& gf) {
    if (gf.u.empty()) throw PreconditionError("compute_coefficients: u not solved");
    if (!gf.has_v) throw PreconditionError("compute_coefficients: v_diag not available");
    if (gf.v_stride != 1)
        throw PreconditionError("compute_coefficients: v_diag stride must be 1");
    const int n = gf.grid.n_steps;
    const int N = static_cast<int>(gf.u[0].rows());
    const double dt = gf.grid.dt;

    MECoefficients c;
    c.grid = gf.grid;
    c.eps_prime.resize(n + 1);
    c.gamma.resize(n + 1);
    c.gamma_tilde.resize(n + 1);
    c.finite.assign(n + 1, 1);

    const Matrix nan_matrix =
        Matrix::Constant(N, N, Complex{std::numeric_limits<double>::quiet_NaN(), 0.0});

    // Boundary values are exact: du(t0) = -i eps, v(t0,t0) = 0.
    c.eps_prime[0] = hermitize(kI * gf.u_dot[0]);
    c.gamma[0] = Matrix::Zero(N, N);
    c.gamma_tilde[0] = Matrix::Zero(N, N);

    for (int k = 1; k <= n; ++k) {
        const Matrix& u = gf.u[k];
        const double det = std::abs(u.determinant());
        if (det <= 1e-12) {
            c.finite[k] = 0;
            c.eps_prime[k] = nan_matrix;
            c.gamma[k] = nan_matrix;
            c.gamma_tilde[k] = nan_matrix;
            continue;
        }
        const Matrix m = gf.u_dot[k] * u.inverse();  // du u^-1
        c.eps_prime[k] = hermitize(Complex(0.0, 0.5) * (m - m.adjoint()));
        c.gamma[k] = hermitize(-0.5 * (m + m.adjoint()));
        const Matrix vdot = lattice_derivative(gf.v_diag, k, dt);
        const Matrix mv = m * gf.v_diag[k];
        c.gamma_tilde[k] = hermitize(vdot - (mv + mv.adjoint()));
    }
    int flagged = 0;
    for (char f : c.finite)
        if (!f) ++flagged;
    if (flagged)
        c.notes.push_back(std::to_string(flagged) +
                          " step(s) with near-singular u; coefficients flagged non-finite");
    return c;
}

// ---------------------------------------------------------------------------
// Ladder sets and density matrices
// ---------------------------------------------------------------------------

LadderSet LadderSet::boson(int cutoff) {
    if (cutoff < 1) throw std::invalid_argument("boson ladder: cutoff must be >= 1");
    LadderSet s;
    s.statistics = Statistics::Boson;
    s.modes = 1;
    s.boson_cutoff = cutoff;
    const int d = cutoff + 1;
    Matrix a = Matrix::Zero(d, d);
    for (int m = 1; m < d; ++m) a(m - 1, m) = std::sqrt(static_cast<double>(m));
    s.a.push_back(a);
    s.adag.push_back(a.adjoint());
    return s;
}

LadderSet LadderSet::fermion(int modes) {
    if (modes < 1 || modes > 12)
        throw std::invalid_argument("fermion ladder: modes must be in [1, 12]");
    LadderSet s;
    s.statistics = Statistics::Fermion;
    s.modes = modes;
    Matrix sm(2, 2), z(2, 2), id2 = Matrix::Identity(2, 2);
    sm << 0, 1, 0, 0;   // a |1> = |0>
    z << 1, 0, 0, -1;
    auto kron = [](const Matrix& A, const Matrix& B) {
        Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
        for (int i = 0; i < A.rows(); ++i)
            for (int j = 0; j < A.cols(); ++j)
                K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        return K;
    };
    for (int m = 0; m < modes; ++m) {
        Matrix op = Matrix::Identity(1, 1);
        for (int q = 0; q < modes; ++q) {
            if (q < m)
                op = kron(op, z);
            else if (q == m)
                op = kron(op, sm);
            else
                op = kron(op, id2);
        }
        s.a.push_back(op);
        s.adag.push_back(op.adjoint());
    }
    return s;
}

void DensityMatrix::validate() const {
    if (rho.rows() != rho.cols()) throw std::invalid_argument("density matrix must be square");
    if (std::abs(rho.trace().real() - 1.0) > 1e-8 || std::abs(rho.trace().imag()) > 1e-8)
        throw std::invalid_argument("density matrix must have unit trace");
    if ((rho - rho.adjoint()).norm() > 1e-10 * std::max(1.0, rho.norm()))
        throw std::invalid_argument("density matrix must be Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
    if (es.eigenvalues().minCoeff() < -1e-8)
        throw std::invalid_argument("density matrix must be positive semidefinite");
}

DensityMatrix DensityMatrix::boson_fock(int n, int cutoff) {
    if (n < 0 || n > cutoff) throw std::invalid_argument("boson_fock: need 0 <= n <= cutoff");
    DensityMatrix d;
    d.statistics = Statistics::Boson;
    d.boson_cutoff = cutoff;
    d.rho = Matrix::Zero(cutoff + 1, cutoff + 1);
    d.rho(n, n) = 1.0;
    return d;
}

DensityMatrix DensityMatrix::boson_coherent(Complex alpha, int cutoff) {
    DensityMatrix d;
    d.statistics = Statistics::Boson;
    d.boson_cutoff = cutoff;
    Eigen::VectorXcd psi(cutoff + 1);
    psi(0) = std::exp(-0.5 * std::norm(alpha));
    for (int m = 1; m <= cutoff; ++m) psi(m) = psi(m - 1) * alpha / std::sqrt(static_cast<double>(m));
    psi /= psi.norm();  // renormalize the truncated state
    d.rho = psi * psi.adjoint();
    return d;
}

DensityMatrix DensityMatrix::fermion_diag(const std::vector<double>& occupations) {
    const int modes = static_cast<int>(occupations.size());
    DensityMatrix d;
    d.statistics = Statistics::Fermion;
    d.modes = modes;
    Matrix rho = Matrix::Identity(1, 1);
    for (double n : occupations) {
        if (n < 0.0 || n > 1.0) throw std::invalid_argument("fermion occupation must be in [0, 1]");
        Matrix site(2, 2);
        site << 1.0 - n, 0.0, 0.0, n;
        Matrix K(rho.rows() * 2, rho.cols() * 2);
        for (int i = 0; i < rho.rows(); ++i)
            for (int j = 0; j < rho.cols(); ++j)
                K.block(i * 2, j * 2, 2, 2) = rho(i, j) * site;
        rho = K;
    }
    d.rho = rho;
    return d;
}

DensityMatrix DensityMatrix::from_matrix(Statistics stat, int modes, int cutoff, Matrix rho) {
    DensityMatrix d;
    d.statistics = stat;
    d.modes = modes;
    d.boson_cutoff = cutoff;
    d.rho = std::move(rho);
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// Generator and Lindblad form
// ---------------------------------------------------------------------------

Matrix generator_apply(const Matrix& rho, const Matrix& eps_prime, const Matrix& gamma,
                       const Matrix& gamma_tilde, Statistics stat, const LadderSet& ops) {
    const int N = static_cast<int>(eps_prime.rows());
    if (static_cast<int>(ops.a.size()) != N)
        throw std::invalid_argument("generator_apply: ladder set does not match coefficient size");
    if (ops.statistics != stat)
        throw std::invalid_argument("generator_apply: basis/statistics mismatch");
    if (!eps_prime.allFinite() || !gamma.allFinite() || !gamma_tilde.allFinite())
        throw std::invalid_argument("generator_apply: coefficients must be finite");
    const int d = ops.dim();
    const double sgn = (stat == Statistics::Boson) ? 1.0 : -1.0;

    Matrix H = Matrix::Zero(d, d);
    Matrix M1 = Matrix::Zero(d, d);  // sum gamma_ij adag_i a_j
    Matrix M2 = Matrix::Zero(d, d);  // sum gamma~_ij adag_i a_j
    Matrix M3 = Matrix::Zero(d, d);  // sum gamma~_ij a_j adag_i
    Matrix sand_g = Matrix::Zero(d, d);   // sum gamma_ij a_j rho adag_i
    Matrix sand_t1 = Matrix::Zero(d, d);  // sum gamma~_ij adag_i rho a_j
    Matrix sand_t2 = Matrix::Zero(d, d);  // sum gamma~_ij a_j rho adag_i
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            const Complex e = eps_prime(i, j), g = gamma(i, j), gt = gamma_tilde(i, j);
            if (e != Complex{0, 0}) H.noalias() += e * (ops.adag[i] * ops.a[j]);
            if (g != Complex{0, 0}) {
                M1.noalias() += g * (ops.adag[i] * ops.a[j]);
                sand_g.noalias() += g * (ops.a[j] * rho * ops.adag[i]);
            }
            if (gt != Complex{0, 0}) {
                M2.noalias() += gt * (ops.adag[i] * ops.a[j]);
                M3.noalias() += gt * (ops.a[j] * ops.adag[i]);
                sand_t1.noalias() += gt * (ops.adag[i] * rho * ops.a[j]);
                sand_t2.noalias() += gt * (ops.a[j] * rho * ops.adag[i]);
            }
        }
    }
    Matrix out = -kI * (H * rho - rho * H);
    out += 2.0 * sand_g - M1 * rho - rho * M1.adjoint();
    out += sand_t1 + sgn * sand_t2 - sgn * (M2 * rho) - rho * M3;
    return out;
}

LindbladForm lindblad_form(const Matrix& eps_prime, const Matrix& gamma, const Matrix& gamma_tilde,
                           Statistics stat) {
    const int N = static_cast<int>(eps_prime.rows());
    const double sgn = (stat == Statistics::Boson) ? 1.0 : -1.0;
    LindbladForm f;
    f.hamiltonian = eps_prime;
    for (int i = 0; i < N; ++i) {
        for (int j = 0; j < N; ++j) {
            const Complex gt = gamma_tilde(i, j);
            const Complex g = gamma(i, j);
            f.channels.push_back({i, j, true, gt});
            f.channels.push_back({i, j, false, 2.0 * g + sgn * gt});
        }
    }
    return f;
}

Matrix apply_lindblad(const LindbladForm& form, const Matrix& rho, const LadderSet& ops) {
    const int d = ops.dim();
    Matrix H = Matrix::Zero(d, d);
    const int N = static_cast<int>(form.hamiltonian.rows());
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            H.noalias() += form.hamiltonian(i, j) * (ops.adag[i] * ops.a[j]);
    Matrix out = -kI * (H * rho - rho * H);
    for (const auto& ch : form.channels) {
        const Matrix& x = ch.raising_family ? ops.adag[ch.i] : ops.a[ch.j];
        const Matrix& y = ch.raising_family ? ops.a[ch.j] : ops.adag[ch.i];
        out += ch.weight * (x * rho * y - 0.5 * (y * x * rho) - 0.5 * (rho * y * x));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

namespace {

struct BridgedCoefficients {
    std::vector<Matrix> eps_prime, gamma, gamma_tilde;
    int bridged = 0;
};

BridgedCoefficients bridge_nonfinite(const MECoefficients& c) {
    BridgedCoefficients b;
    b.eps_prime = c.eps_prime;
    b.gamma = c.gamma;
    b.gamma_tilde = c.gamma_tilde;
    const int n = static_cast<int>(c.finite.size()) - 1;
    int k = 0;
    while (k <= n) {
        if (c.finite[k]) {
            ++k;
            continue;
        }
        int lo = k;
        while (k <= n && !c.finite[k]) ++k;
        const int hi = k - 1;
        if (lo == 0 || hi == n)
            throw PreconditionError("propagate_rho: cannot bridge non-finite coefficients at the "
                                    "grid boundary");
        const int a = lo - 1, bidx = hi + 1;
        for (int m = lo; m <= hi; ++m) {
            const double t = static_cast<double>(m - a) / static_cast<double>(bidx - a);
            b.eps_prime[m] = (1.0 - t) * c.eps_prime[a] + t * c.eps_prime[bidx];
            b.gamma[m] = (1.0 - t) * c.gamma[a] + t * c.gamma[bidx];
            b.gamma_tilde[m] = (1.0 - t) * c.gamma_tilde[a] + t * c.gamma_tilde[bidx];
            ++b.bridged;
        }
    }
    return b;
}

} // namespace

RhoTrajectory propagate_rho(const DensityMatrix& rho0, const MECoefficients& coeffs,
                            const PropagationOptions& opts) {
    rho0.validate();
    const int n = coeffs.grid.n_steps;
    if (n < 4) throw PreconditionError("propagate_rho: coefficient grid too short");
    const LadderSet ops = rho0.statistics == Statistics::Boson
                              ? LadderSet::boson(rho0.boson_cutoff)
                              : LadderSet::fermion(rho0.modes);
    if (ops.dim() != rho0.rho.rows())
        throw std::invalid_argument("propagate_rho: basis dimension mismatch");

    BridgedCoefficients bc = bridge_nonfinite(coeffs);
    RhoTrajectory traj;
    if (bc.bridged)
        traj.warnings.push_back("bridged " + std::to_string(bc.bridged) +
                                " non-finite coefficient step(s) by linear interpolation");

    const int n_rk = n / 2;  // RK4 step h = 2 dt, stages on the coefficient grid
    const double h = 2.0 * coeffs.grid.dt;
    traj.grid = TimeGrid(coeffs.grid.t0, h, n_rk);
    traj.rho.reserve(n_rk + 1);
    traj.min_eigenvalue = 1.0;

    auto L = [&](int k, const Matrix& rho) {
        return generator_apply(rho, bc.eps_prime[k], bc.gamma[k], bc.gamma_tilde[k],
                               rho0.statistics, ops);
    };
    auto check_state = [&](const Matrix& rho) {
        traj.max_trace_drift = std::max(traj.max_trace_drift, std::abs(rho.trace().real() - 1.0) +
                                                                  std::abs(rho.trace().imag()));
        if (opts.track_spectrum) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
            traj.min_eigenvalue = std::min(traj.min_eigenvalue, es.eigenvalues().minCoeff());
        }
        if (rho0.statistics == Statistics::Boson) {
            const double top = rho(rho.rows() - 1, rho.cols() - 1).real();
            if (top > opts.top_level_threshold)
                throw CutoffError("boson Fock cutoff too small: top-level population " +
                                  std::to_string(top));
        }
    };

    Matrix rho = rho0.rho;
    traj.rho.push_back(rho);
    check_state(rho);
    for (int s = 0; s < n_rk; ++s) {
        const int k0 = 2 * s, k1 = 2 * s + 1, k2 = 2 * s + 2;
        const Matrix f1 = L(k0, rho);
        const Matrix f2 = L(k1, rho + (0.5 * h) * f1);
        const Matrix f3 = L(k1, rho + (0.5 * h) * f2);
        const Matrix f4 = L(k2, rho + h * f3);
        rho += (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4);
        if (opts.hermitize) rho = hermitize(rho);
        traj.rho.push_back(rho);
        check_state(rho);
    }
    return traj;
}

std::vector<Matrix> occupation(const greens::GreenFunctions& gf, const Matrix& n0) {
    if (gf.u.empty() || !gf.has_v) throw PreconditionError("occupation: u and v_diag required");
    const int N = static_cast<int>(gf.u[0].rows());
    if (n0.rows() != N || n0.cols() != N)
        throw std::invalid_argument("occupation: n0 must be N x N");
    std::vector<Matrix> out;
    out.reserve(gf.v_diag.size());
    for (std::size_t m = 0; m < gf.v_diag.size(); ++m) {
        const int k = static_cast<int>(m) * gf.v_stride;
        const Matrix& u = gf.u[k];
        Matrix inner = u * n0.transpose() * u.adjoint() + gf.v_diag[m];
        out.push_back(inner.transpose());
    }
    return out;
}

} // namespace fanodyn::me
