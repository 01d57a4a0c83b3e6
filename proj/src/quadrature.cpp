#include "fanodyn/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "fanodyn/errors.hpp"
#include "fanodyn/util.hpp"

namespace fanodyn::quad {

namespace {

struct GlRule {
    std::vector<double> x, w;
};

// Newton iteration on P_n with the standard asymptotic initial guess.
GlRule make_gl(int n) {
    GlRule r;
    r.x.resize(n);
    r.w.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        r.x[i] = -x;
        r.x[n - 1 - i] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        r.w[i] = w;
        r.w[n - 1 - i] = w;
    }
    return r;
}

const GlRule& gl_rule(int order) {
    static std::map<int, GlRule> cache;
    static std::mutex mtx;
    std::lock_guard<std::mutex> lock(mtx);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, make_gl(order)).first;
    return it->second;
}

double gl_panel(const Fn& f, double a, double b, const GlRule& r) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t q = 0; q < r.x.size(); ++q) s += r.w[q] * f(c + h * r.x[q]);
    return s * h;
}

} // namespace

const std::vector<double>& gl_nodes(int order) { return gl_rule(order).x; }
const std::vector<double>& gl_weights(int order) { return gl_rule(order).w; }

QuadResult integrate(const Fn& f, double a, double b, const AdaptiveOptions& opts) {
    return integrate_intervals(f, {{a, b}}, opts);
}

QuadResult integrate_intervals(const Fn& f, const std::vector<std::pair<double, double>>& parts,
                               const AdaptiveOptions& opts) {
    const GlRule& rule = gl_rule(opts.order);
    double total_width = 0.0;
    for (auto& [a, b] : parts) total_width += std::abs(b - a);
    if (total_width == 0.0) return {0.0, 0.0, true};

    struct Item {
        double a, b, coarse;
        int depth;
    };
    std::vector<Item> stack;
    for (auto& [a, b] : parts)
        if (b > a) stack.push_back({a, b, gl_panel(f, a, b, rule), 0});

    double value = 0.0, err = 0.0;
    // First pass to size the relative tolerance; refined as panels accumulate.
    double value_scale = 0.0;
    for (auto& it : stack) value_scale += std::abs(it.coarse);

    while (!stack.empty()) {
        Item it = stack.back();
        stack.pop_back();
        const double m = 0.5 * (it.a + it.b);
        const double left = gl_panel(f, it.a, m, rule);
        const double right = gl_panel(f, m, it.b, rule);
        const double fine = left + right;
        const double local_err = std::abs(fine - it.coarse);
        const double width_share = std::abs(it.b - it.a) / total_width;
        const double budget = std::max(opts.abs_tol * width_share,
                                       opts.rel_tol * std::max(std::abs(fine), 0.5 * value_scale * width_share));
        if (local_err <= budget || it.depth >= opts.max_depth) {
            value += fine;
            err += local_err;
        } else {
            stack.push_back({it.a, m, left, it.depth + 1});
            stack.push_back({m, it.b, right, it.depth + 1});
        }
    }

    const double target = std::max(opts.abs_tol, opts.rel_tol * std::abs(value)) * 8.0;
    const bool ok = err <= std::max(target, 1e-300);
    if (!ok && opts.throw_on_failure)
        throw QuadratureError("adaptive quadrature did not converge (estimate " +
                                  std::to_string(err) + ")",
                              err);
    return {value, err, ok};
}

QuadResult principal_value(const Fn& f, double a, double b, double pole,
                           const AdaptiveOptions& opts) {
    if (!(a < pole && pole < b))
        throw std::invalid_argument("principal_value: pole must lie strictly inside (a, b)");
    const double w = std::min(pole - a, b - pole);
    const double fp = f(pole);
    // Symmetric window: [f(x) - f(pole)]/(pole - x); the f(pole) log term cancels.
    Fn reg = [&](double x) {
        const double d = pole - x;
        return (f(x) - fp) / d;
    };
    QuadResult res = integrate(reg, pole - w, pole + w, opts);
    Fn plain = [&](double x) { return f(x) / (pole - x); };
    std::vector<std::pair<double, double>> rest;
    if (a < pole - w) rest.push_back({a, pole - w});
    if (pole + w < b) rest.push_back({pole + w, b});
    if (!rest.empty()) {
        QuadResult r2 = integrate_intervals(plain, rest, opts);
        res.value += r2.value;
        res.error_estimate += r2.error_estimate;
        res.converged = res.converged && r2.converged;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Spherical Bessel functions
// ---------------------------------------------------------------------------

void spherical_bessel(int nmax, double x, double* out) {
    if (x < 0.0) throw std::invalid_argument("spherical_bessel: x must be >= 0");
    if (x < 1e-4) {
        // Series: j_n = x^n/(2n+1)!! [1 - x^2/(2(2n+3)) + x^4/(8(2n+3)(2n+5))]
        double dfact = 1.0;  // (2n+1)!!
        double xpow = 1.0;
        for (int n = 0; n <= nmax; ++n) {
            if (n > 0) {
                dfact *= (2.0 * n + 1.0);
                xpow *= x;
            } else {
                dfact = 1.0;
            }
            const double x2 = x * x;
            const double corr = 1.0 - x2 / (2.0 * (2.0 * n + 3.0)) +
                                x2 * x2 / (8.0 * (2.0 * n + 3.0) * (2.0 * n + 5.0));
            out[n] = (xpow / dfact) * corr;
        }
        return;
    }
    const double j0 = std::sin(x) / x;
    if (nmax == 0) {
        out[0] = j0;
        return;
    }
    const double j1 = std::sin(x) / (x * x) - std::cos(x) / x;
    if (x >= nmax) {
        // Upward recurrence is stable for n < x.
        out[0] = j0;
        out[1] = j1;
        for (int n = 1; n < nmax; ++n)
            out[n + 1] = (2.0 * n + 1.0) / x * out[n] - out[n - 1];
        return;
    }
    // Miller downward recurrence with normalization against j0 (or j1 near zeros of sin).
    const int start = nmax + 24 + static_cast<int>(x);
    double jp = 0.0, jc = 1e-280;
    std::vector<double> tmp(nmax + 1, 0.0);
    for (int n = start; n >= 1; --n) {
        double jm = (2.0 * n + 1.0) / x * jc - jp;
        jp = jc;
        jc = jm;
        if (n - 1 <= nmax) tmp[n - 1] = jc;
        if (std::abs(jc) > 1e250) {
            jc *= 1e-250;
            jp *= 1e-250;
            for (auto& t : tmp) t *= 1e-250;
        }
    }
    // tmp holds unnormalized j_0..j_nmax (jc is unnormalized j_0).
    double scale;
    if (std::abs(j0) > std::abs(j1) * 0.1)
        scale = j0 / tmp[0];
    else
        scale = j1 / tmp[1];
    for (int n = 0; n <= nmax; ++n) out[n] = tmp[n] * scale;
}

void legendre_values(int nmax, double x, double* out) {
    out[0] = 1.0;
    if (nmax == 0) return;
    out[1] = x;
    for (int n = 1; n < nmax; ++n)
        out[n + 1] = ((2.0 * n + 1.0) * x * out[n] - n * out[n - 1]) / (n + 1.0);
}

void legendre_q(int nmax, double y, double* out) {
    const double q0 = 0.5 * std::log(std::abs((1.0 + y) / (1.0 - y)));
    out[0] = q0;
    if (nmax == 0) return;
    out[1] = y * q0 - 1.0;
    for (int n = 1; n < nmax; ++n)
        out[n + 1] = ((2.0 * n + 1.0) * y * out[n] - n * out[n - 1]) / (n + 1.0);
}

// ---------------------------------------------------------------------------
// PanelRule
// ---------------------------------------------------------------------------

namespace {

PanelRule::Panel make_panel(const Fn& w, double a, double b, int order, int nodes) {
    const GlRule& rule = gl_rule(nodes);
    PanelRule::Panel p;
    p.center = 0.5 * (a + b);
    p.half = 0.5 * (b - a);
    p.coef.assign(order, 0.0);
    p.fvals.resize(nodes);
    std::vector<double> pn(order);
    double mass = 0.0;
    for (int q = 0; q < nodes; ++q) {
        const double xq = rule.x[q];
        const double fq = w(p.center + p.half * xq);
        p.fvals[q] = fq;
        mass += rule.w[q] * std::abs(fq);
        legendre_values(order - 1, xq, pn.data());
        for (int n = 0; n < order; ++n) p.coef[n] += rule.w[q] * pn[n] * fq;
    }
    for (int n = 0; n < order; ++n) p.coef[n] *= 0.5 * (2.0 * n + 1.0);
    p.abs_mass = mass * p.half;
    return p;
}

double panel_tail_error(const PanelRule::Panel& p) {
    const int P = static_cast<int>(p.coef.size());
    // Trailing Legendre coefficients bound the truncation of the expansion.
    return 2.0 * p.half * (std::abs(p.coef[P - 1]) + std::abs(p.coef[P - 2]));
}

} // namespace

PanelRule PanelRule::build(const Fn& w,
                           const std::vector<std::pair<double, double>>& intervals,
                           std::vector<double> breakpoints,
                           std::vector<double> singular_points,
                           const PanelRuleOptions& opts) {
    PanelRule rule;
    rule.order_ = opts.coeff_order;
    rule.proj_nodes_ = opts.proj_nodes;

    double total_width = 0.0;
    for (auto& [a, b] : intervals) total_width += std::abs(b - a);
    if (total_width == 0.0) return rule;

    // Elementary spans: interval pieces cut at interior breakpoints, with
    // geometric ladders toward singular endpoints.
    std::vector<std::pair<double, double>> spans;
    for (auto& [a, b] : intervals) {
        if (!(b > a)) continue;
        std::vector<double> cuts{a, b};
        for (double bp : breakpoints)
            if (bp > a && bp < b) cuts.push_back(bp);
        std::sort(cuts.begin(), cuts.end());
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            double lo = cuts[i], hi = cuts[i + 1];
            if (!(hi > lo)) continue;
            bool sing_lo = false, sing_hi = false;
            for (double s : singular_points) {
                if (std::abs(s - lo) <= 1e-14 * (std::abs(s) + std::abs(lo) + 1e-300)) sing_lo = true;
                if (std::abs(s - hi) <= 1e-14 * (std::abs(s) + std::abs(hi) + 1e-300)) sing_hi = true;
            }
            const double len = hi - lo;
            const int ladder = 44;  // down to ~1e-13 of the span
            if (sing_lo && sing_hi) {
                const double mid = 0.5 * (lo + hi);
                double x = mid - lo;
                double prev = mid;
                for (int k = 1; k <= ladder; ++k) {
                    x *= 0.5;
                    spans.push_back({lo + x, prev});
                    prev = lo + x;
                }
                spans.push_back({lo, prev});
                x = hi - mid;
                prev = mid;
                for (int k = 1; k <= ladder; ++k) {
                    x *= 0.5;
                    spans.push_back({prev, hi - x});
                    prev = hi - x;
                }
                spans.push_back({prev, hi});
            } else if (sing_lo) {
                double x = len;
                double prev = hi;
                for (int k = 1; k <= ladder; ++k) {
                    x *= 0.5;
                    spans.push_back({lo + x, prev});
                    prev = lo + x;
                }
                spans.push_back({lo, prev});
            } else if (sing_hi) {
                double x = len;
                double prev = lo;
                for (int k = 1; k <= ladder; ++k) {
                    x *= 0.5;
                    spans.push_back({prev, hi - x});
                    prev = hi - x;
                }
                spans.push_back({prev, hi});
            } else {
                spans.push_back({lo, hi});
            }
        }
    }

    for (auto& [a, b] : spans)
        rule.panels_.push_back(make_panel(w, a, b, rule.order_, rule.proj_nodes_));

    // Refine the worst panels until the summed Legendre-tail estimate meets
    // the relative target (panel widths floor at min_rel_width of the total).
    const double min_width = opts.min_rel_width * total_width;
    for (int pass = 0; pass < 200; ++pass) {
        double mass = 0.0, err = 0.0;
        for (auto& p : rule.panels_) {
            mass += p.abs_mass;
            err += panel_tail_error(p);
        }
        const double target = std::max(opts.rel_tol * mass, 1e-300);
        if (err <= target || static_cast<int>(rule.panels_.size()) >= opts.max_panels) break;
        // Split every panel whose tail exceeds its share.
        std::vector<Panel> next;
        next.reserve(rule.panels_.size() * 2);
        bool split_any = false;
        for (auto& p : rule.panels_) {
            const double share = target * (p.half / (0.5 * total_width));
            if (panel_tail_error(p) > std::max(share, 0.25 * target / static_cast<double>(rule.panels_.size())) &&
                2.0 * p.half > min_width &&
                static_cast<int>(rule.panels_.size() + next.size()) < opts.max_panels) {
                const double a = p.center - p.half, b = p.center + p.half;
                next.push_back(make_panel(w, a, p.center, rule.order_, rule.proj_nodes_));
                next.push_back(make_panel(w, p.center, b, rule.order_, rule.proj_nodes_));
                split_any = true;
            } else {
                next.push_back(std::move(p));
            }
        }
        rule.panels_ = std::move(next);
        if (!split_any) break;
    }

    std::sort(rule.panels_.begin(), rule.panels_.end(),
              [](const Panel& l, const Panel& r) { return l.center < r.center; });
    return rule;
}

Complex PanelRule::fourier(double tau) const {
    const int P = order_;
    std::vector<double> jn(P);
    Complex sum{0.0, 0.0};
    for (const auto& p : panels_) {
        const double a = p.half * tau;
        spherical_bessel(P - 1, std::abs(a), jn.data());
        // M_n = 2 (-i s)^n j_n(|a|), s = sign(a); cycle through {1,-is,-1,is}.
        const Complex base = (a >= 0.0) ? Complex{0.0, -1.0} : Complex{0.0, 1.0};
        Complex phase{1.0, 0.0};
        Complex acc{0.0, 0.0};
        for (int n = 0; n < P; ++n) {
            acc += p.coef[n] * 2.0 * phase * jn[n];
            phase *= base;
        }
        sum += std::polar(1.0, -p.center * tau) * (p.half * acc);
    }
    return sum;
}

void PanelRule::fourier_lattice(double dt, int n, Complex* out, int threads) const {
    util::parallel_blocks(n + 1, threads, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t k = lo; k < hi; ++k) out[k] = fourier(dt * static_cast<double>(k));
    });
}

double PanelRule::integral() const {
    double s = 0.0;
    for (const auto& p : panels_) s += 2.0 * p.half * p.coef[0];
    return s;
}

double PanelRule::abs_mass() const {
    double s = 0.0;
    for (const auto& p : panels_) s += p.abs_mass;
    return s;
}

double PanelRule::pole_integral(double pole) const {
    // int w/(pole - e) de = sum over panels of h * int ŵ(x)/(y - x) dx with
    // y = (pole - c)/h. Near poles (|y| <= 2) use Legendre-Q moments
    // (int P_n(x)/(y-x) dx = 2 Q_n(y), principal value inside), far poles use
    // the stored node values directly.
    const GlRule& rule = gl_rule(proj_nodes_);
    const int P = order_;
    std::vector<double> qn(P);
    double sum = 0.0;
    for (const auto& p : panels_) {
        const double y = (pole - p.center) / p.half;
        if (std::abs(std::abs(y) - 1.0) < 1e-13)
            throw QuadratureError("pole_integral: pole coincides with a panel edge", 1.0);
        if (std::abs(y) <= 2.0) {
            legendre_q(P - 1, y, qn.data());
            double acc = 0.0;
            for (int n = 0; n < P; ++n) acc += p.coef[n] * 2.0 * qn[n];
            sum += acc;  // the h and 1/h factors cancel
        } else {
            double acc = 0.0;
            for (int q = 0; q < proj_nodes_; ++q)
                acc += rule.w[q] * p.fvals[q] / (y - rule.x[q]);
            sum += acc;
        }
    }
    return sum;
}

} // namespace fanodyn::quad
