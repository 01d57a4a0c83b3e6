#include "fanodyn/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace fanodyn::cli {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct KeyValue {
    int line = 0;
    std::string key, value;
    bool used = false;
};

struct Section {
    int line = 0;
    std::string name;
    std::vector<KeyValue> entries;
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    out.erase(std::remove_if(out.begin(), out.end(), [](const std::string& x) { return x.empty(); }),
              out.end());
    return out;
}

class SectionReader {
public:
    SectionReader(Section& sec, std::vector<Diagnostic>& diags, bool strict)
        : sec_(sec), diags_(diags), strict_(strict) {}

    std::optional<std::string> raw(const std::string& key) {
        for (auto& kv : sec_.entries) {
            if (kv.key == key) {
                kv.used = true;
                return kv.value;
            }
        }
        return std::nullopt;
    }

    int line_of(const std::string& key) const {
        for (const auto& kv : sec_.entries)
            if (kv.key == key) return kv.line;
        return sec_.line;
    }

    std::optional<double> number(const std::string& key) {
        auto v = raw(key);
        if (!v) return std::nullopt;
        try {
            std::size_t pos = 0;
            const double x = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing characters");
            if (!std::isfinite(x)) throw std::invalid_argument("not finite");
            return x;
        } catch (const std::exception&) {
            fail(key, "expected a number, got '" + *v + "'");
            return std::nullopt;
        }
    }

    std::optional<int> integer(const std::string& key) {
        auto x = number(key);
        if (!x) return std::nullopt;
        if (*x != std::floor(*x)) {
            fail(key, "expected an integer");
            return std::nullopt;
        }
        return static_cast<int>(*x);
    }

    double number_or(const std::string& key, double dflt) {
        auto x = number(key);
        return x ? *x : dflt;
    }

    void fail(const std::string& key, const std::string& msg) {
        diags_.push_back({line_of(key), sec_.name + "." + key, msg, true});
    }

    void finish() {
        for (const auto& kv : sec_.entries) {
            if (!kv.used)
                diags_.push_back({kv.line, sec_.name + "." + kv.key,
                                  "unknown key '" + kv.key + "' in [" + sec_.name + "]", strict_});
        }
    }

private:
    Section& sec_;
    std::vector<Diagnostic>& diags_;
    bool strict_;
};

// Matrix literal: rows separated by ';', entries by whitespace or ','.
std::optional<Matrix> parse_matrix(const std::string& text) {
    std::vector<std::vector<double>> rows;
    for (const auto& row_text : split(text, ';')) {
        std::vector<double> row;
        std::istringstream is(row_text);
        std::string tok;
        while (is >> tok) {
            if (!tok.empty() && tok.back() == ',') tok.pop_back();
            if (tok.empty()) continue;
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(tok, &pos));
                if (pos != tok.size()) return std::nullopt;
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
        if (!row.empty()) rows.push_back(row);
    }
    if (rows.empty()) return std::nullopt;
    const std::size_t n = rows.size();
    for (const auto& r : rows)
        if (r.size() != n) return std::nullopt;
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    return m;
}

std::optional<Statistics> parse_statistics(const std::string& s) {
    const std::string l = lower(s);
    if (l == "boson") return Statistics::Boson;
    if (l == "fermion") return Statistics::Fermion;
    return std::nullopt;
}

std::optional<Task> parse_task(const std::string& s) {
    const std::string l = lower(s);
    if (l == "u") return Task::U;
    if (l == "v") return Task::V;
    if (l == "coefficients") return Task::Coefficients;
    if (l == "rho") return Task::Rho;
    if (l == "bound_states") return Task::BoundStates;
    if (l == "spectra") return Task::Spectra;
    if (l == "occupation") return Task::Occupation;
    if (l == "measure") return Task::Measure;
    if (l == "model:spin_zero_t") return Task::ModelSpinZeroT;
    if (l == "model:pure_dephasing") return Task::ModelPureDephasing;
    if (l == "model:majorana") return Task::ModelMajorana;
    return std::nullopt;
}

std::optional<spectral::SpectralDensity> parse_density(SectionReader& r,
                                                       std::vector<Diagnostic>& diags,
                                                       const Section& sec) {
    auto kind_raw = r.raw("spectral");
    if (!kind_raw) {
        diags.push_back({sec.line, sec.name + ".spectral", "missing 'spectral' kind", true});
        return std::nullopt;
    }
    const std::string kind = lower(*kind_raw);
    try {
        if (kind == "ohmic") {
            const double eta = r.number_or("eta", 0.0);
            const double s = r.number_or("s", 1.0);
            const double cutoff = r.number_or("cutoff", 1.0);
            return spectral::SpectralDensity::ohmic(eta, s, cutoff);
        }
        if (kind == "lorentzian") {
            return spectral::SpectralDensity::lorentzian(r.number_or("eta", 0.0),
                                                         r.number_or("center", 0.0),
                                                         r.number_or("width", 1.0));
        }
        if (kind == "flat_band") {
            auto band_raw = r.raw("band");
            double lo = -1.0, hi = 1.0;
            if (band_raw) {
                std::istringstream is(*band_raw);
                if (!(is >> lo >> hi)) {
                    r.fail("band", "expected 'lo hi'");
                    return std::nullopt;
                }
            }
            return spectral::SpectralDensity::flat_band(r.number_or("kappa", 0.0), lo, hi);
        }
        if (kind == "gapped_band") {
            auto bands_raw = r.raw("bands");
            if (!bands_raw) {
                r.fail("bands", "gapped_band requires 'bands = lo hi kappa | lo hi kappa | ...'");
                return std::nullopt;
            }
            std::vector<spectral::SpectralDensity> parts;
            for (const auto& piece : split(*bands_raw, '|')) {
                std::istringstream is(piece);
                double lo, hi, kappa;
                if (!(is >> lo >> hi >> kappa)) {
                    r.fail("bands", "each band needs 'lo hi kappa'");
                    return std::nullopt;
                }
                parts.push_back(spectral::SpectralDensity::flat_band(kappa, lo, hi));
            }
            return spectral::SpectralDensity::gapped_band(std::move(parts));
        }
        if (kind == "tabulated") {
            auto samples_raw = r.raw("samples");
            if (!samples_raw) {
                r.fail("samples", "tabulated requires 'samples = e:J, e:J, ...'");
                return std::nullopt;
            }
            std::vector<std::pair<double, double>> samples;
            for (const auto& piece : split(*samples_raw, ',')) {
                const auto colon = piece.find(':');
                if (colon == std::string::npos) {
                    r.fail("samples", "expected 'e:J' pairs");
                    return std::nullopt;
                }
                samples.push_back({std::stod(piece.substr(0, colon)),
                                   std::stod(piece.substr(colon + 1))});
            }
            return spectral::SpectralDensity::tabulated(std::move(samples));
        }
        if (kind == "none" || kind == "zero") return spectral::SpectralDensity::zero();
    } catch (const std::exception& e) {
        diags.push_back({sec.line, sec.name + ".spectral", e.what(), true});
        return std::nullopt;
    }
    diags.push_back({r.line_of("spectral"), sec.name + ".spectral",
                     "unknown spectral kind '" + kind + "'", true});
    return std::nullopt;
}

} // namespace

std::string task_name(Task t) {
    switch (t) {
        case Task::U: return "u";
        case Task::V: return "v";
        case Task::Coefficients: return "coefficients";
        case Task::Rho: return "rho";
        case Task::BoundStates: return "bound_states";
        case Task::Spectra: return "spectra";
        case Task::Occupation: return "occupation";
        case Task::Measure: return "measure";
        case Task::ModelSpinZeroT: return "model:spin_zero_T";
        case Task::ModelPureDephasing: return "model:pure_dephasing";
        case Task::ModelMajorana: return "model:majorana";
    }
    return "?";
}

bool Scenario::has_task(Task t) const {
    return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

std::vector<std::string> ParseResult::warnings() const {
    std::vector<std::string> out;
    for (const auto& d : diagnostics)
        if (!d.error)
            out.push_back("line " + std::to_string(d.line) + ": " + d.message);
    return out;
}

ParseResult parse_scenario_with_overrides(
    const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides,
    bool strict) {
    ParseResult result;
    auto& diags = result.diagnostics;

    std::vector<Section> sections;
    {
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        Section* cur = nullptr;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    diags.push_back({lineno, "", "malformed section header '" + line + "'", true});
                    continue;
                }
                sections.push_back({lineno, lower(trim(line.substr(1, line.size() - 2))), {}});
                cur = &sections.back();
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                diags.push_back({lineno, "", "expected 'key = value', got '" + line + "'", true});
                continue;
            }
            if (!cur) {
                diags.push_back({lineno, "", "key outside any [section]", true});
                continue;
            }
            cur->entries.push_back({lineno, lower(trim(line.substr(0, eq))), trim(line.substr(eq + 1)),
                                    false});
        }
    }

    for (const auto& [path, value] : overrides) {
        const auto dot = path.find('.');
        if (dot == std::string::npos) {
            diags.push_back({0, path, "override path must be 'section.key'", true});
            continue;
        }
        const std::string sec_name = lower(path.substr(0, dot));
        const std::string key = lower(path.substr(dot + 1));
        bool applied = false;
        for (auto& sec : sections) {
            if (sec.name != sec_name) continue;
            bool found = false;
            for (auto& kv : sec.entries)
                if (kv.key == key) {
                    kv.value = value;
                    found = true;
                }
            if (!found) sec.entries.push_back({sec.line, key, value, false});
            applied = true;
        }
        if (!applied) diags.push_back({0, path, "no section [" + sec_name + "] to override", true});
    }

    const std::vector<std::string> known_sections{"system",  "reservoir", "grid",   "tasks",
                                                  "measure", "spectra",   "model",  "output"};
    for (const auto& sec : sections) {
        if (std::find(known_sections.begin(), known_sections.end(), sec.name) ==
            known_sections.end())
            diags.push_back({sec.line, sec.name, "unknown section [" + sec.name + "]", strict});
    }

    auto find_sections = [&](const std::string& name) {
        std::vector<Section*> out;
        for (auto& sec : sections)
            if (sec.name == name) out.push_back(&sec);
        return out;
    };
    auto has_errors = [&] {
        return std::any_of(diags.begin(), diags.end(), [](const Diagnostic& d) { return d.error; });
    };

    Scenario sc;

    // [system]
    auto sys_secs = find_sections("system");
    if (sys_secs.empty()) {
        diags.push_back({0, "system", "missing [system] section", true});
        return result;
    }
    if (sys_secs.size() > 1)
        diags.push_back({sys_secs[1]->line, "system", "duplicate [system] section", true});
    {
        SectionReader r(*sys_secs[0], diags, strict);
        auto stat_raw = r.raw("statistics");
        if (!stat_raw) {
            r.fail("statistics", "missing 'statistics = boson|fermion'");
        } else if (auto st = parse_statistics(*stat_raw)) {
            sc.system.statistics = *st;
        } else {
            r.fail("statistics", "expected boson or fermion");
        }
        auto energy_raw = r.raw("energy");
        if (!energy_raw) {
            r.fail("energy", "missing 'energy'");
        } else if (auto em = parse_matrix(*energy_raw)) {
            sc.system.energy = em->cast<Complex>();
        } else {
            r.fail("energy", "expected a scalar or square matrix ('a b; c d')");
        }
        sc.unit = r.number_or("unit", 1.0);
        if (sc.unit <= 0.0) r.fail("unit", "unit must be positive");
        if (auto occ_raw = r.raw("initial_occupation")) {
            if (auto m = parse_matrix(*occ_raw))
                sc.initial_occupation = m->cast<Complex>();
            else
                r.fail("initial_occupation", "expected a scalar or square matrix");
        }
        if (auto st_raw = r.raw("initial_state")) sc.initial_state = lower(*st_raw);
        if (auto c = r.integer("boson_cutoff")) {
            if (*c < 1)
                r.fail("boson_cutoff", "must be >= 1");
            else
                sc.boson_cutoff = *c;
        }
        r.finish();
    }

    // [reservoir] (repeatable)
    for (Section* sec : find_sections("reservoir")) {
        SectionReader r(*sec, diags, strict);
        spectral::CoupledReservoir cr;
        cr.reservoir.statistics = sc.system.statistics;
        if (auto stat_raw = r.raw("statistics")) {
            if (auto st = parse_statistics(*stat_raw))
                cr.reservoir.statistics = *st;
            else
                r.fail("statistics", "expected boson or fermion");
        }
        const double T = r.number_or("temperature", -1.0);
        if (T < 0.0)
            r.fail("temperature", "missing or negative temperature (T >= 0 required)");
        else
            cr.reservoir.temperature = T;
        cr.reservoir.chemical_potential = r.number_or("mu", 0.0);
        if (auto d = parse_density(r, diags, *sec)) cr.reservoir.density = std::move(*d);
        if (auto w_raw = r.raw("weight")) {
            if (auto m = parse_matrix(*w_raw))
                cr.weight = m->cast<Complex>();
            else
                r.fail("weight", "expected a scalar or square matrix");
        }
        r.finish();
        sc.system.reservoirs.push_back(std::move(cr));
    }

    // [grid]
    auto grid_secs = find_sections("grid");
    if (grid_secs.empty()) {
        diags.push_back({0, "grid", "missing [grid] section", true});
    } else {
        SectionReader r(*grid_secs[0], diags, strict);
        const double t_max = r.number_or("t_max", 0.0);
        const double dt = r.number_or("dt", 0.0);
        if (!(dt > 0.0)) r.fail("dt", "dt must be positive");
        if (!(t_max > dt)) r.fail("t_max", "t_max must exceed dt");
        if (dt > 0.0 && t_max > dt) {
            const double steps = t_max / dt;
            const int n = static_cast<int>(std::lround(steps));
            if (std::abs(steps - n) > 1e-9 * steps || n < 2)
                r.fail("dt", "dt must divide t_max into at least 2 steps");
            else
                sc.grid = TimeGrid(0.0, dt, n);
        }
        if (auto s = r.integer("v_stride")) {
            if (*s < 1)
                r.fail("v_stride", "must be >= 1");
            else
                sc.v_stride = *s;
        }
        if (auto q = r.integer("quad_points")) {
            if (*q < 8 || *q > 64)
                r.fail("quad_points", "must be in [8, 64]");
            else
                sc.quad_points = *q;
        }
        sc.quad_tol = r.number_or("quad_tol", 1e-10);
        if (!(sc.quad_tol > 0.0 && sc.quad_tol < 1e-2)) r.fail("quad_tol", "must be in (0, 1e-2)");
        r.finish();
    }

    // [tasks]
    auto task_secs = find_sections("tasks");
    if (task_secs.empty()) {
        diags.push_back({0, "tasks", "missing [tasks] section", true});
    } else {
        SectionReader r(*task_secs[0], diags, strict);
        auto list_raw = r.raw("list");
        if (!list_raw) {
            r.fail("list", "missing 'list = task, task, ...'");
        } else {
            for (const auto& name : split(*list_raw, ',')) {
                if (auto t = parse_task(name))
                    sc.tasks.push_back(*t);
                else
                    r.fail("list", "unknown task '" + name + "'");
            }
            if (sc.tasks.empty()) r.fail("list", "at least one task is required");
        }
        r.finish();
    }

    // [measure]
    for (Section* sec : find_sections("measure")) {
        SectionReader r(*sec, diags, strict);
        if (auto a_raw = r.raw("anchors")) {
            if (lower(*a_raw) != "auto") {
                for (const auto& tok : split(*a_raw, ',')) {
                    try {
                        sc.measure_anchors.push_back(std::stod(tok));
                    } catch (const std::exception&) {
                        r.fail("anchors", "expected 'auto' or a comma list of times");
                    }
                }
            }
        }
        sc.measure_tau_max = r.number_or("tau_max", 0.0);
        if (sc.measure_tau_max < 0.0) r.fail("tau_max", "must be >= 0");
        r.finish();
    }

    // [spectra]
    for (Section* sec : find_sections("spectra")) {
        SectionReader r(*sec, diags, strict);
        if (auto p = r.integer("points")) {
            if (*p < 2 || *p > 2000000)
                r.fail("points", "must be in [2, 2e6]");
            else
                sc.spectra_points = *p;
        }
        if (auto lo = r.number("emin")) sc.spectra_min = *lo;
        if (auto hi = r.number("emax")) sc.spectra_max = *hi;
        sc.spectra_ts = r.number_or("ts", 0.0);
        r.finish();
    }

    // [model]
    for (Section* sec : find_sections("model")) {
        SectionReader r(*sec, diags, strict);
        sc.model_epsilon = r.number_or("epsilon", 1.0);
        r.finish();
    }

    // [output]
    for (Section* sec : find_sections("output")) {
        SectionReader r(*sec, diags, strict);
        if (auto dir = r.raw("directory")) sc.output_directory = *dir;
        if (auto p = r.integer("precision")) {
            if (*p < 0 || *p > 17)
                r.fail("precision", "must be in [0, 17]");
            else
                sc.output_precision = *p;
        }
        r.finish();
    }

    if (has_errors()) return result;

    // Cross-field validation.
    const int N = static_cast<int>(sc.system.energy.rows());
    if (sc.initial_occupation.rows() == 0) sc.initial_occupation = Matrix::Zero(N, N);
    if (sc.initial_occupation.rows() != N) {
        diags.push_back({0, "system.initial_occupation", "initial_occupation must be N x N", true});
        return result;
    }
    for (auto& cr : sc.system.reservoirs) {
        if (cr.weight.rows() == 0) cr.weight = Matrix::Identity(N, N);
        if (cr.weight.rows() == 1 && N > 1) cr.weight = Matrix::Identity(N, N) * cr.weight(0, 0);
    }
    try {
        sc.system.validate();
    } catch (const std::exception& e) {
        diags.push_back({0, "system", e.what(), true});
        return result;
    }
    const bool needs_coeffs = sc.has_task(Task::Coefficients) || sc.has_task(Task::Rho);
    if (needs_coeffs && sc.v_stride != 1) {
        diags.push_back({0, "grid.v_stride", "coefficients/rho tasks require v_stride = 1", true});
        return result;
    }
    const bool is_model = sc.has_task(Task::ModelSpinZeroT) || sc.has_task(Task::ModelPureDephasing) ||
                          sc.has_task(Task::ModelMajorana);
    if (is_model && sc.system.reservoirs.empty()) {
        diags.push_back({0, "reservoir", "model tasks require a [reservoir] section", true});
        return result;
    }

    result.scenario = std::move(sc);
    return result;
}

ParseResult parse_scenario(const std::string& text, bool strict) {
    return parse_scenario_with_overrides(text, {}, strict);
}

} // namespace fanodyn::cli
