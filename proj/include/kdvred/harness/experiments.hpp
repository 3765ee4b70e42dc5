#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "kdvred/continuation.hpp"
#include "kdvred/error.hpp"
#include "kdvred/harness/config.hpp"
#include "kdvred/harness/csv.hpp"
#include "kdvred/kdvref.hpp"
#include "kdvred/nls.hpp"
#include "kdvred/reduction.hpp"
#include "kdvred/spectrum.hpp"

namespace kdvred::harness {

/// Rounded coefficients quoted for the two-species reference example.
struct QuotedCoefficients {
    double lambda = 0.0;
    double A = 0.0;
    double B = 0.0;
    double lab_speed = 0.0;
};

inline bool is_reference_example(const RunConfig& c) {
    return c.g && *c.g == std::vector<double>{1.0, 1.0} && c.h == 0.5 && c.bg.rho0 == std::vector<double>{1.0, 0.1} &&
           c.bg.mass == 1.0 && c.bg.hbar == 1.0 && c.scaling.epsilon == 0.2 && c.scaling.soliton_speed == 2.5;
}

/// Quoted values for branch +-1, +-2 (ascending order) of the reference
/// example; left movers flip lambda, A and the lab speed.
inline std::optional<QuotedCoefficients> quoted_reference(const RunConfig& c, int branch) {
    if (!is_reference_example(c) || branch == 0 || std::abs(branch) > 2) return std::nullopt;
    QuotedCoefficients q = std::abs(branch) == 2 ? QuotedCoefficients{1.013, -0.123, 1.372, 1.001}
                                                 : QuotedCoefficients{0.270, -0.462, 0.728, 0.224};
    if (branch < 0) {
        q.lambda = -q.lambda;
        q.A = -q.A;
        q.lab_speed = -q.lab_speed;
    }
    return q;
}

/// Descending-speed label: the fastest right mover is 1.
inline int speed_label(int branch, std::size_t n) {
    const int mag = static_cast<int>(n) - std::abs(branch) + 1;
    return branch > 0 ? mag : -mag;
}

inline std::string branch_tag(int branch) { return branch > 0 ? std::to_string(branch) : "m" + std::to_string(-branch); }

/// Shortest round-trip text of t for file names.
inline std::string time_tag(double t) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, t);
    return std::string(buf, res.ptr);
}

inline std::string coefficient_text(double lambda, double A, double B, double lab) {
    return "lambda " + format_double(lambda) + ", A " + format_double(A) + ", B " + format_double(B) + ", lab_speed " +
           format_double(lab);
}

/// Config echo followed by the projection coefficients of every simple
/// right mover and, for the reference example, the quoted values.
inline std::vector<std::string> header_block(const RunConfig& c) {
    auto lines = echo(c);
    try {
        const auto coupling = c.coupling();
        if (!spectrum::positivity_report(coupling).is_positive_definite) {
            lines.push_back("projection = unavailable (coupling matrix not positive definite)");
            return lines;
        }
        const auto spec = spectrum::eigensystem(coupling, c.bg);
        for (int j = 1; j <= static_cast<int>(spec.size()); ++j) {
            const std::string key = "projection.branch_" + std::to_string(j) + " = ";
            if (spec.multiplicity(static_cast<std::size_t>(j - 1)) > 1) {
                lines.push_back(key + "repeated eigenvalue");
                continue;
            }
            const auto m = reduction::kdv_coefficients(spec, c.bg, j);
            lines.push_back(key + coefficient_text(m.lambda, m.A, m.B, reduction::lab_speed(m, c.scaling)));
        }
        for (int j = 1; j <= static_cast<int>(spec.size()); ++j) {
            if (auto q = quoted_reference(c, j)) {
                lines.push_back("quoted.branch_" + std::to_string(j) + " = " +
                                coefficient_text(q->lambda, q->A, q->B, q->lab_speed));
            }
        }
    } catch (const std::exception& e) {
        lines.push_back(std::string("projection = unavailable (") + e.what() + ")");
    }
    return lines;
}

inline std::filesystem::path prepare_output(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

// ---------------------------------------------------------------- spectrum

struct SpectrumResult {
    spectrum::PositivityReport positivity;
    std::optional<spectrum::DegeneracyReport> degeneracy;
    spectrum::LinearSpectrum linear;
};

inline std::string tri_state(const std::optional<bool>& b) { return b ? (*b ? "pass" : "fail") : "n/a"; }

/// Prints the positivity and degeneracy classification and writes
/// spectrum.csv (branch, speed_label, lambda, multiplicity).
inline SpectrumResult run_spectrum(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    const auto coupling = c.coupling();
    SpectrumResult r;
    r.positivity = spectrum::positivity_report(coupling);
    log << "positive definite: " << (r.positivity.is_positive_definite ? "yes" : "no")
        << "  (necessary " << tri_state(r.positivity.necessary_pass) << ", sufficient "
        << tri_state(r.positivity.sufficient_pass) << ")\n";
    if (coupling.is_structured()) {
        r.degeneracy = spectrum::degeneracy_report(coupling, c.bg);
        if (r.degeneracy->repeated.empty()) {
            log << "degeneracy: none\n";
        }
        for (const auto& rep : r.degeneracy->repeated) {
            log << "degeneracy: components";
            for (auto i : rep.group) log << ' ' << (i + 1);
            log << " share (rho0 g, rho0); lambda^2 = " << format_double(rep.lambda_squared) << " with multiplicity "
                << rep.multiplicity << '\n';
        }
    }
    if (!r.positivity.is_positive_definite) {
        log << "classification: unstable background (complex sound speeds)\n";
        throw spectrum::UnstableBackground(r.positivity);
    }
    r.linear = spectrum::eigensystem(coupling, c.bg);
    const std::size_t n = r.linear.size();
    CsvWriter csv((prepare_output(out) / "spectrum.csv").string(), header_block(c),
                  {"branch", "speed_label", "lambda", "multiplicity"});
    char line[160];
    std::snprintf(line, sizeof line, "%8s %12s %24s %13s\n", "branch", "speed_label", "lambda", "multiplicity");
    log << line;
    for (int sign : {1, -1}) {
        for (int j = 1; j <= static_cast<int>(n); ++j) {
            const int b = sign * j;
            const double lam = sign * r.linear.lambda(j - 1);
            const auto mult = static_cast<unsigned long>(r.linear.multiplicity(static_cast<std::size_t>(j - 1)));
            csv.row({b, speed_label(b, n), lam, mult});
            std::snprintf(line, sizeof line, "%8d %12d %24.17e %13lu\n", b, speed_label(b, n), lam, mult);
            log << line;
        }
    }
    csv.close();
    return r;
}

// ------------------------------------------------------------------ coeffs

struct CoefficientRow {
    int branch = 0;
    std::optional<reduction::KdvModel> model;
    double lab_speed = std::nan("");
    std::optional<reduction::ClosedFormCoefficients> closed;
    std::optional<QuotedCoefficients> quoted;
    std::string note;
};

/// Explicit closed-form coefficients for branch b when the model is one of
/// the explicit two- or three-species cases.
inline std::optional<reduction::ClosedFormCoefficients> closed_form_for(const RunConfig& c,
                                                                        const spectrum::LinearSpectrum& spec, int b) {
    if (!c.g || !(c.h > 0.0)) return std::nullopt;
    const auto coupling = c.coupling();
    const std::size_t n = c.g->size();
    const double lam = spec.lambda(std::abs(b) - 1);
    std::optional<reduction::ClosedFormCoefficients> cf;
    if (n == 2) {
        cf = reduction::closed_form_n2_branch(coupling, c.bg, std::abs(b) == 2 ? 1 : 2);
    } else if (n == 3 && spectrum::nearly_equal((*c.g)[0], (*c.g)[1]) &&
               spectrum::nearly_equal(c.bg.rho0[0], c.bg.rho0[1])) {
        for (int which = 1; which <= 3; ++which) {
            const auto candidate = reduction::closed_form_n3_branch(coupling, c.bg, which);
            if (std::abs(candidate.lambda - lam) <= 1e-9 * lam) cf = candidate;
        }
    }
    if (cf && b < 0) {
        cf->lambda = -cf->lambda;
        cf->A = -cf->A;
    }
    return cf;
}

/// Writes kdv_coeffs.csv. Without an explicit branch every right and left
/// mover is listed and repeated eigenvalues are marked; an explicitly
/// requested repeated branch is refused.
inline std::vector<CoefficientRow> run_coeffs(const RunConfig& c, const std::optional<int>& branch,
                                              const std::filesystem::path& out, std::ostream& log) {
    const auto coupling = c.coupling();
    const auto pos = spectrum::positivity_report(coupling);
    if (!pos.is_positive_definite) throw spectrum::UnstableBackground(pos);
    const auto spec = spectrum::eigensystem(coupling, c.bg);
    const int n = static_cast<int>(spec.size());
    std::vector<int> branches;
    if (branch) {
        if (*branch == 0 || std::abs(*branch) > n) {
            throw ConfigError("--branch " + std::to_string(*branch) + " outside +-1.." + std::to_string(n));
        }
        branches.push_back(*branch);
    } else {
        for (int j = 1; j <= n; ++j) branches.push_back(j);
        for (int j = 1; j <= n; ++j) branches.push_back(-j);
    }
    std::vector<CoefficientRow> rows;
    for (int b : branches) {
        CoefficientRow row;
        row.branch = b;
        if (spec.multiplicity(static_cast<std::size_t>(std::abs(b) - 1)) > 1) {
            if (branch) {
                throw ConfigError("branch " + std::to_string(b) +
                                  " has a repeated eigenvalue; its dynamics is a coupled KdV system, which is not "
                                  "supported");
            }
            row.note = "repeated eigenvalue (coupled KdV system, not supported)";
            rows.push_back(row);
            continue;
        }
        row.model = reduction::kdv_coefficients(spec, c.bg, b);
        row.lab_speed = reduction::lab_speed(*row.model, c.scaling);
        row.closed = closed_form_for(c, spec, b);
        row.quoted = quoted_reference(c, b);
        if (row.model->is_linear()) row.note = "linear branch (B = 0)";
        rows.push_back(row);
    }

    CsvWriter csv((prepare_output(out) / "kdv_coeffs.csv").string(), header_block(c),
                  {"branch", "speed_label", "lambda", "A", "B", "lab_speed", "closed_lambda", "closed_A", "closed_B",
                   "quoted_lambda", "quoted_A", "quoted_B", "quoted_lab_speed", "note"});
    char line[256];
    std::snprintf(line, sizeof line, "%7s %6s %15s %15s %15s %15s  %s\n", "branch", "label", "lambda", "A", "B",
                  "lab_speed", "note");
    log << line;
    for (const auto& row : rows) {
        const int label = speed_label(row.branch, static_cast<std::size_t>(n));
        const double lam = spec.lambda(std::abs(row.branch) - 1) * (row.branch > 0 ? 1.0 : -1.0);
        std::vector<Cell> cells{row.branch, label, lam};
        if (row.model) {
            cells.insert(cells.end(), {row.model->A, row.model->B, row.lab_speed});
        } else {
            cells.insert(cells.end(), {"", "", ""});
        }
        if (row.closed) {
            cells.insert(cells.end(), {row.closed->lambda, row.closed->A, row.closed->B});
        } else {
            cells.insert(cells.end(), {"", "", ""});
        }
        if (row.quoted) {
            cells.insert(cells.end(), {row.quoted->lambda, row.quoted->A, row.quoted->B, row.quoted->lab_speed});
        } else {
            cells.insert(cells.end(), {"", "", "", ""});
        }
        cells.emplace_back(row.note);
        csv.row(cells);
        std::snprintf(line, sizeof line, "%7d %6d %15.8e %15.8e %15.8e %15.8e  %s\n", row.branch, label, lam,
                      row.model ? row.model->A : std::nan(""), row.model ? row.model->B : std::nan(""),
                      row.lab_speed, row.note.c_str());
        log << line;
    }
    csv.close();
    return rows;
}

// -------------------------------------------------------- NLS experiments

/// Right- or left-moving soliton of the branch, checked for simplicity and
/// nonzero nonlinearity.
inline reduction::KdvModel soliton_branch(const RunConfig& c, int branch) {
    const auto coupling = c.coupling();
    const auto pos = spectrum::positivity_report(coupling);
    if (!pos.is_positive_definite) throw spectrum::UnstableBackground(pos);
    const auto spec = spectrum::eigensystem(coupling, c.bg);
    const auto m = reduction::kdv_coefficients(spec, c.bg, branch);
    if (m.is_linear()) {
        throw ConfigError("branch " + std::to_string(branch) +
                          " has B = 0 (linear branch): no solitary wave to simulate");
    }
    return m;
}

/// Madelung-synthesized soliton on the configured grid; on a periodic grid
/// the phase seam is smoothed by the compensating ramp. `mismatch` receives
/// the seam phase jump per species.
inline nls::FieldState initial_state(const RunConfig& c, const reduction::KdvModel& m,
                                     std::vector<double>* mismatch = nullptr) {
    const Grid grid = c.grid.grid();
    const auto x = grid.points();
    const auto profile = reduction::soliton_profile(m, c.scaling);
    const auto fields = reduction::reconstruct_fields(m, profile, c.scaling, c.bg, x, 0.0);
    nls::FieldState s;
    s.grid = grid;
    s.periodic = c.integrator.boundary == nls::Boundary::Periodic;
    s.psi = reduction::madelung_synthesize(fields, x, c.bg,
                                           reduction::PhaseRule(reduction::SolitonPhase{m, profile, c.scaling, 0.0}));
    std::vector<double> jump(s.species(), 0.0);
    if (s.periodic && c.integrator.seam_ramp > 0.0) jump = nls::apply_seam_ramp(s, c.integrator.seam_ramp);
    if (mismatch) *mismatch = jump;
    return s;
}

/// Diagnostic times: multiples of the sample interval up to the last
/// snapshot, merged with the snapshots.
inline std::vector<double> sample_times(const RunConfig& c) {
    std::vector<double> t;
    const double end = c.run.t_end();
    for (std::size_t i = 0;; ++i) {
        const double ti = static_cast<double>(i) * c.run.sample_interval;
        if (ti > end * (1.0 + 1e-12)) break;
        t.push_back(ti);
    }
    for (double s : c.run.snapshots) t.push_back(s);
    std::sort(t.begin(), t.end());
    std::vector<double> out;
    for (double v : t) {
        if (out.empty() || std::abs(v - out.back()) > 1e-9 * std::max(1.0, v)) out.push_back(v);
    }
    return out;
}

inline bool is_snapshot(const RunConfig& c, double t) {
    for (double s : c.run.snapshots) {
        if (std::abs(s - t) <= 1e-9 * std::max(1.0, t)) return true;
    }
    return false;
}

struct ConservationSample {
    double t = 0.0;
    std::vector<double> norms;
    double hamiltonian = 0.0;
};

struct ConservationSeries {
    std::vector<ConservationSample> samples;

    std::vector<double> norm_drift() const {
        std::vector<double> d(samples.front().norms.size(), 0.0);
        for (const auto& s : samples) {
            for (std::size_t k = 0; k < d.size(); ++k) {
                d[k] = std::max(d[k], std::abs(s.norms[k] - samples.front().norms[k]) / samples.front().norms[k]);
            }
        }
        return d;
    }

    double energy_drift() const {
        const double h0 = samples.front().hamiltonian;
        double d = 0.0;
        for (const auto& s : samples) d = std::max(d, std::abs(s.hamiltonian - h0) / std::abs(h0));
        return d;
    }

    void write(const std::string& path, const std::vector<std::string>& header) const {
        std::vector<std::string> cols{"t"};
        for (std::size_t k = 0; k < samples.front().norms.size(); ++k) cols.push_back("norm_" + std::to_string(k + 1));
        cols.push_back("hamiltonian");
        CsvWriter csv(path, header, cols);
        for (const auto& s : samples) {
            std::vector<Cell> cells{s.t};
            for (double v : s.norms) cells.emplace_back(v);
            cells.emplace_back(s.hamiltonian);
            csv.row(cells);
        }
        csv.close();
    }
};

/// Evolves the branch soliton and calls on_sample(nominal t, state) at
/// every diagnostic time.
template <typename OnSample>
void evolve_branch(const RunConfig& c, const reduction::KdvModel& m, OnSample&& on_sample,
                   std::vector<double>* mismatch = nullptr) {
    nls::Integrator integrator(initial_state(c, m, mismatch), c.coupling(), c.bg, c.integrator_config());
    for (double t : sample_times(c)) {
        integrator.advance_to(t);
        on_sample(t, integrator.state());
    }
}

struct SimulationResult {
    int branch = 0;
    ConservationSeries conservation;
};

/// NLS evolution of the branch soliton: psi snapshots
/// (x, re_psi_k, im_psi_k, dens_k) and the conserved-quantity series.
inline SimulationResult run_simulate(const RunConfig& c, int branch, const std::filesystem::path& out,
                                     std::ostream& log) {
    const auto m = soliton_branch(c, branch);
    const auto dir = prepare_output(out);
    const auto coupling = c.coupling();
    auto header = header_block(c);
    header.push_back("simulate.branch = " + std::to_string(branch));
    SimulationResult r;
    r.branch = branch;
    evolve_branch(c, m, [&](double t, const nls::FieldState& s) {
        r.conservation.samples.push_back({t, nls::norms(s), nls::hamiltonian(s, coupling, c.bg)});
        if (!is_snapshot(c, t)) return;
        std::vector<std::string> cols{"x"};
        for (std::size_t k = 1; k <= s.species(); ++k) {
            cols.push_back("re_psi_" + std::to_string(k));
            cols.push_back("im_psi_" + std::to_string(k));
            cols.push_back("dens_" + std::to_string(k));
        }
        auto snap_header = header;
        snap_header.push_back("snapshot.t = " + format_double(s.time));
        CsvWriter csv((dir / ("psi_b" + branch_tag(branch) + "_t" + time_tag(t) + ".csv")).string(), snap_header, cols);
        for (std::size_t i = 0; i < s.grid.n_points; ++i) {
            std::vector<Cell> cells{s.grid.x(i)};
            for (std::size_t k = 0; k < s.species(); ++k) {
                cells.emplace_back(s.psi[k][i].real());
                cells.emplace_back(s.psi[k][i].imag());
                cells.emplace_back(std::norm(s.psi[k][i]));
            }
            csv.row(cells);
        }
        csv.close();
        log << "branch " << branch << ": snapshot t = " << time_tag(t) << " written\n";
    });
    r.conservation.write((dir / ("conservation_b" + branch_tag(branch) + ".csv")).string(), header);
    const auto nd = r.conservation.norm_drift();
    for (std::size_t k = 0; k < nd.size(); ++k) {
        log << "branch " << branch << ": species " << (k + 1) << " norm drift " << format_double(nd[k]) << '\n';
    }
    log << "branch " << branch << ": hamiltonian drift " << format_double(r.conservation.energy_drift()) << '\n';
    return r;
}

struct SpeciesSnapshot {
    double t = 0.0;
    std::size_t species = 0;
    double linf = 0.0;
    double l2 = 0.0;
    double amplitude = 0.0;
    double nls_peak = 0.0;
    double kdv_peak = 0.0;
    double nls_extremum = 0.0;  ///< signed |psi|^2 - rho0 of largest magnitude

    double relative_linf() const { return linf / amplitude; }
};

struct BranchComparison {
    reduction::KdvModel model;
    double lab_speed = 0.0;
    std::optional<QuotedCoefficients> quoted;
    std::vector<SpeciesSnapshot> snapshots;
    std::vector<double> fitted_speed;
    std::vector<double> norm_drift;
    double energy_drift = 0.0;
    std::vector<double> seam_mismatch;
    ConservationSeries conservation;

    double max_relative_linf(std::size_t k) const {
        double worst = 0.0;
        for (const auto& s : snapshots) {
            if (s.species == k) worst = std::max(worst, s.relative_linf());
        }
        return worst;
    }
};

struct ComparisonReport {
    std::vector<BranchComparison> branches;
};

/// Position of the extremum of dens - baseline within +-half_width of
/// `centre`, with periodic wrap of the sample indices.
inline double tracked_peak(const nls::FieldState& s, std::size_t k, double baseline, double centre,
                           double half_width) {
    const Grid& g = s.grid;
    const double dx = g.dx();
    const auto n = static_cast<long>(g.n_points);
    const auto i0 = static_cast<long>(std::floor((centre - half_width - g.x_min) / dx));
    const auto i1 = static_cast<long>(std::ceil((centre + half_width - g.x_min) / dx));
    std::vector<double> xs, ys;
    for (long i = i0; i <= i1; ++i) {
        const long wrapped = ((i % n) + n) % n;
        xs.push_back(g.x_min + static_cast<double>(i) * dx);
        ys.push_back(std::norm(s.psi[k][static_cast<std::size_t>(wrapped)]));
    }
    return kdvref::peak_position(xs, ys, baseline);
}

inline double fitted_slope(const std::vector<double>& t, const std::vector<double>& y) {
    const double n = static_cast<double>(t.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        st += t[i];
        sy += y[i];
        stt += t[i] * t[i];
        sty += t[i] * y[i];
    }
    return (n * sty - st * sy) / (n * stt - st * st);
}

/// NLS against the analytic KdV soliton for each branch: profile CSVs
/// (x, nls_rho_k, kdv_rho_k), conservation series, report.csv (errors per
/// snapshot and species) and summary.csv (speeds, drifts, coefficients).
inline ComparisonReport run_compare(const RunConfig& c, const std::vector<int>& branches,
                                    const std::filesystem::path& out, std::ostream& log) {
    const auto dir = prepare_output(out);
    const auto coupling = c.coupling();
    const auto header = header_block(c);
    const double eps2 = c.scaling.epsilon * c.scaling.epsilon;
    // Soliton half width in x is 2 / (eps sqrt(V)); track within four of them.
    const double window = 4.0 * 2.0 / (c.scaling.epsilon * std::sqrt(c.scaling.soliton_speed));
    ComparisonReport report;
    for (int branch : branches) {
        BranchComparison bc;
        bc.model = soliton_branch(c, branch);
        bc.lab_speed = reduction::lab_speed(bc.model, c.scaling);
        bc.quoted = quoted_reference(c, branch);
        const auto profile = reduction::soliton_profile(bc.model, c.scaling);
        const std::size_t ns = c.species();
        std::vector<double> amplitude(ns);
        for (std::size_t k = 0; k < ns; ++k) {
            amplitude[k] = std::abs(eps2 * bc.model.a(static_cast<Eigen::Index>(k)) * profile.amplitude());
        }
        std::vector<double> times;
        std::vector<std::vector<double>> peaks(ns);
        evolve_branch(
            c, bc.model,
            [&](double t, const nls::FieldState& s) {
                bc.conservation.samples.push_back({t, nls::norms(s), nls::hamiltonian(s, coupling, c.bg)});
                const double predicted = bc.lab_speed * s.time;
                times.push_back(s.time);
                for (std::size_t k = 0; k < ns; ++k) {
                    peaks[k].push_back(tracked_peak(s, k, c.bg.rho0[k], predicted, window));
                }
                if (!is_snapshot(c, t)) return;
                const auto x = s.grid.points();
                const auto kdv = kdvref::analytic_soliton_at(bc.model, c.scaling, c.bg, x, s.time);
                std::vector<std::string> cols{"x"};
                for (std::size_t k = 1; k <= ns; ++k) {
                    cols.push_back("nls_rho_" + std::to_string(k));
                    cols.push_back("kdv_rho_" + std::to_string(k));
                }
                auto snap_header = header;
                snap_header.push_back("compare.branch = " + std::to_string(branch));
                snap_header.push_back("snapshot.t = " + format_double(s.time));
                CsvWriter csv((dir / ("compare_b" + branch_tag(branch) + "_t" + time_tag(t) + ".csv")).string(),
                              snap_header, cols);
                std::vector<double> linf(ns, 0.0), l2(ns, 0.0), extremum(ns, 0.0);
                for (std::size_t i = 0; i < x.size(); ++i) {
                    std::vector<Cell> cells{x[i]};
                    for (std::size_t k = 0; k < ns; ++k) {
                        const double d = std::norm(s.psi[k][i]);
                        const double e = std::abs(d - kdv[k][i]);
                        linf[k] = std::max(linf[k], e);
                        if (std::abs(d - c.bg.rho0[k]) > std::abs(extremum[k])) extremum[k] = d - c.bg.rho0[k];
                        l2[k] += e * e;
                        cells.emplace_back(d);
                        cells.emplace_back(kdv[k][i]);
                    }
                    csv.row(cells);
                }
                csv.close();
                for (std::size_t k = 0; k < ns; ++k) {
                    SpeciesSnapshot snap;
                    snap.t = t;
                    snap.species = k;
                    snap.linf = linf[k];
                    snap.l2 = std::sqrt(l2[k] * s.grid.dx());
                    snap.amplitude = amplitude[k];
                    snap.nls_peak = peaks[k].back();
                    snap.kdv_peak = predicted;
                    snap.nls_extremum = extremum[k];
                    bc.snapshots.push_back(snap);
                }
            },
            &bc.seam_mismatch);
        for (std::size_t k = 0; k < ns; ++k) bc.fitted_speed.push_back(fitted_slope(times, peaks[k]));
        bc.norm_drift = bc.conservation.norm_drift();
        bc.energy_drift = bc.conservation.energy_drift();
        bc.conservation.write((dir / ("conservation_b" + branch_tag(branch) + ".csv")).string(), header);
        for (std::size_t k = 0; k < ns; ++k) {
            log << "branch " << branch << " species " << (k + 1) << ": max |drho| error / amplitude "
                << format_double(bc.max_relative_linf(k)) << ", fitted speed " << format_double(bc.fitted_speed[k])
                << " (lab speed " << format_double(bc.lab_speed) << "), norm drift " << format_double(bc.norm_drift[k])
                << '\n';
        }
        log << "branch " << branch << ": hamiltonian drift " << format_double(bc.energy_drift) << '\n';
        report.branches.push_back(std::move(bc));
    }

    CsvWriter rep((dir / "report.csv").string(), header,
                  {"branch", "t", "species", "linf_error", "l2_error", "amplitude", "relative_linf", "nls_peak_x",
                   "kdv_peak_x", "nls_extremum"});
    for (const auto& bc : report.branches) {
        for (const auto& s : bc.snapshots) {
            rep.row({bc.model.branch, s.t, static_cast<unsigned long>(s.species + 1), s.linf, s.l2, s.amplitude,
                     s.relative_linf(), s.nls_peak, s.kdv_peak, s.nls_extremum});
        }
    }
    rep.close();
    CsvWriter sum((dir / "summary.csv").string(), header,
                  {"branch", "speed_label", "lambda", "A", "B", "lab_speed", "quoted_A", "quoted_B",
                   "quoted_lab_speed", "species", "fitted_speed", "speed_deviation", "max_relative_linf",
                   "norm_drift", "energy_drift", "seam_mismatch"});
    for (const auto& bc : report.branches) {
        for (std::size_t k = 0; k < bc.fitted_speed.size(); ++k) {
            std::vector<Cell> cells{bc.model.branch, speed_label(bc.model.branch, c.species()), bc.model.lambda,
                                    bc.model.A, bc.model.B, bc.lab_speed};
            if (bc.quoted) {
                cells.insert(cells.end(), {bc.quoted->A, bc.quoted->B, bc.quoted->lab_speed});
            } else {
                cells.insert(cells.end(), {"", "", ""});
            }
            cells.insert(cells.end(),
                         {static_cast<unsigned long>(k + 1), bc.fitted_speed[k],
                          std::abs(bc.fitted_speed[k] - bc.lab_speed) / std::abs(bc.lab_speed),
                          bc.max_relative_linf(k), bc.norm_drift[k], bc.energy_drift, bc.seam_mismatch[k]});
            sum.row(cells);
        }
    }
    sum.close();
    return report;
}

// ------------------------------------------------------------------- sweep

struct SweepResult {
    std::vector<double> h;
    /// Per branch (ascending at h = h_min), per sample.
    std::vector<std::vector<double>> lambda, A, B;
    std::vector<std::size_t> cross_checked;  ///< sample indices compared with eigensystem
    double max_cross_check = 0.0;            ///< largest relative lambda^2 discrepancy
};

/// Coefficients along h by eigenpair continuation from h = 0, written to
/// sweep.csv (h, then lambda_j, A_j, B_j per branch). Each eigenvector is
/// scaled so that its own component (the one it starts from at h = 0) is 1,
/// which keeps B_j continuous in h; B_j in other scalings follows linearly.
inline SweepResult run_sweep(const RunConfig& c, const std::filesystem::path& out, std::ostream& log) {
    if (!c.g) throw ConfigError("sweep-h requires the structured model (model.g, model.h)");
    const auto base = c.coupling();
    const std::size_t n = c.g->size();
    const auto& sw = c.sweep;

    const auto end_coupling = base.with_h(sw.h_max);
    const auto end_pos = spectrum::positivity_report(end_coupling);
    if (!end_pos.is_positive_definite) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(end_coupling.alpha(), Eigen::EigenvaluesOnly);
        const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
        const bool on_boundary = std::abs(es.eigenvalues().minCoeff()) <= 1e-12 * scale;
        if (!(sw.allow_endpoint && on_boundary)) throw spectrum::UnstableBackground(end_pos);
    }

    // Branch j follows the component with the j-th smallest rho0_i g_i.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return c.bg.rho0[a] * (*c.g)[a] < c.bg.rho0[b] * (*c.g)[b];
    });

    SweepResult r;
    for (std::size_t i = 0; i < sw.samples; ++i) {
        r.h.push_back(sw.h_min + (sw.h_max - sw.h_min) * static_cast<double>(i) / static_cast<double>(sw.samples - 1));
    }
    r.h.back() = sw.h_max;
    r.lambda.assign(n, std::vector<double>(sw.samples, std::nan("")));
    r.A = r.lambda;
    r.B = r.lambda;

    spectrum::ContinuationOptions opt;
    opt.allow_boundary = sw.allow_endpoint;
    const auto deg = spectrum::degeneracy_report(base, c.bg);
    std::vector<std::string> notes;
    std::vector<std::vector<spectrum::ContinuationSample>> paths(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = order[j];
        bool repeated = false;
        for (const auto& rep : deg.repeated) {
            repeated = repeated || std::find(rep.group.begin(), rep.group.end(), k) != rep.group.end();
        }
        if (repeated) {
            notes.push_back("sweep.branch_" + std::to_string(j + 1) + " = component " + std::to_string(k + 1) +
                            " is in a repeated (rho0 g, rho0) pair; not tracked");
            continue;
        }
        const auto n_steps = (sw.samples - 1) * sw.substeps;
        spectrum::ContinuationSample start{0.0, c.bg.rho0[k] * (*c.g)[k],
                                           Eigen::VectorXd::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k))};
        if (sw.h_min > 0.0) {
            const double dh = (sw.h_max - sw.h_min) / static_cast<double>(n_steps);
            const auto lead = static_cast<std::size_t>(std::max(1.0, std::ceil(sw.h_min / std::max(dh, 1e-300))));
            start = spectrum::continue_eigenpair_from(base, c.bg, k, start, sw.h_min, std::min<std::size_t>(lead, 100000),
                                                      opt)
                        .back();
        }
        const auto path = spectrum::continue_eigenpair_from(base, c.bg, k, start, sw.h_max, n_steps, opt);
        for (std::size_t i = 0; i < sw.samples; ++i) {
            const auto& smp = path[i * sw.substeps];
            Eigen::VectorXd q = smp.q;
            const auto ki = static_cast<Eigen::Index>(k);
            if (std::abs(q(ki)) >= 1e-8 * q.cwiseAbs().maxCoeff()) {
                q /= q(ki);
            } else {
                spectrum::normalize_column(q, spectrum::EigenvectorNormalization::LargestEntry);
            }
            const double scale = std::max(1.0, std::abs(smp.lambda_squared));
            if (smp.lambda_squared <= 1e-12 * scale) {
                r.lambda[j][i] = 0.0;
                continue;
            }
            const double lam = std::sqrt(smp.lambda_squared);
            const auto m = reduction::kdv_coefficients_from_column(lam, q, c.bg, 1);
            r.lambda[j][i] = lam;
            r.A[j][i] = m.A;
            r.B[j][i] = m.B;
        }
    }

    for (std::size_t i = 0; i < sw.samples; ++i) {
        if (i % sw.cross_check_every != 0 && i + 1 != sw.samples) continue;
        const auto ci = base.with_h(r.h[i]);
        if (!spectrum::positivity_report(ci).is_positive_definite) continue;
        const auto spec = spectrum::eigensystem(ci, c.bg);
        for (std::size_t j = 0; j < n; ++j) {
            if (std::isnan(r.lambda[j][i])) continue;
            const double direct = spec.lambda(static_cast<Eigen::Index>(j)) * spec.lambda(static_cast<Eigen::Index>(j));
            const double tracked = r.lambda[j][i] * r.lambda[j][i];
            r.max_cross_check = std::max(r.max_cross_check, std::abs(direct - tracked) / std::max(direct, 1e-300));
        }
        r.cross_checked.push_back(i);
    }

    auto header = header_block(c);
    header.insert(header.end(), notes.begin(), notes.end());
    header.push_back("sweep.eigenvector_scaling = tracked component = 1");
    for (std::size_t j = 0; j < n; ++j) {
        header.push_back("sweep.branch_" + std::to_string(j + 1) + ".component = " + std::to_string(order[j] + 1));
    }
    header.push_back("sweep.cross_checked_samples = " + std::to_string(r.cross_checked.size()));
    header.push_back("sweep.max_cross_check_rel = " + format_double(r.max_cross_check));
    std::vector<std::string> cols{"h"};
    for (std::size_t j = 1; j <= n; ++j) {
        cols.push_back("lambda_" + std::to_string(j));
        cols.push_back("A_" + std::to_string(j));
        cols.push_back("B_" + std::to_string(j));
    }
    CsvWriter csv((prepare_output(out) / "sweep.csv").string(), header, cols);
    for (std::size_t i = 0; i < sw.samples; ++i) {
        std::vector<Cell> cells{r.h[i]};
        for (std::size_t j = 0; j < n; ++j) {
            cells.emplace_back(r.lambda[j][i]);
            cells.emplace_back(r.A[j][i]);
            cells.emplace_back(r.B[j][i]);
        }
        csv.row(cells);
    }
    csv.close();
    log << "sweep: " << sw.samples << " samples in h = [" << format_double(sw.h_min) << ", "
        << format_double(sw.h_max) << "], " << r.cross_checked.size()
        << " eigensystem cross-checks, max relative lambda^2 discrepancy " << format_double(r.max_cross_check) << '\n';
    if (r.max_cross_check > 1e-6) {
        throw NumericalError("sweep-h: continuation disagrees with the direct eigensystem (relative " +
                             format_double(r.max_cross_check) + ")");
    }
    return r;
}

} // namespace kdvred::harness
