#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/scenario.hpp"

namespace sase {

namespace detail {

/// 17 significant digits: enough for exact double round-trips, so regression
/// tests can parse a report and recompute its aggregates bit-for-bit.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

/// Shortest exact decimal form of a weight, used in file names and column
/// headers (2 stays "2", not "2.0000000000000000").
inline std::string gamma_label(double g) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), g);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_report_file(const std::filesystem::path& dir,
                                      const std::string& name) {
  std::ofstream out(dir / name, std::ios::binary);  // '\n' endings everywhere
  if (!out)
    throw ScenarioError("emit_report: cannot open " + (dir / name).string() +
                        " for writing");
  return out;
}

inline void finish_report_file(std::ofstream& out, const std::string& name) {
  out.flush();
  if (!out) throw ScenarioError("emit_report: writing " + name + " failed");
}

}  // namespace detail

/// Root-mean-square error of one estimate series against the per-row truth:
/// sqrt of the mean squared componentwise deviation over every row and every
/// state. Accumulated in row order with states innermost — the documented
/// reduction order that report consumers can reproduce exactly from the CSV.
template <class EstimateOf>
inline double run_rmse(const std::vector<StepRow>& rows, EstimateOf&& estimate_of) {
  double acc = 0.0;
  std::size_t count = 0;
  for (const StepRow& row : rows) {
    const Eigen::VectorXd& est = estimate_of(row);
    for (Eigen::Index j = 0; j < row.x_true.size(); ++j) {
      const double e = est(j) - row.x_true(j);
      acc += e * e;
      ++count;
    }
  }
  return count == 0 ? 0.0 : std::sqrt(acc / double(count));
}

/// Resolve the directory reports land in: a relative configured path is
/// anchored at $SASE_OUTPUT_ROOT when that variable is set, the working
/// directory otherwise; an absolute path is used as given.
inline std::filesystem::path resolve_output_dir(const std::string& configured) {
  std::filesystem::path p(configured);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("SASE_OUTPUT_ROOT"))
    if (root[0] != '\0') return std::filesystem::path(root) / p;
  return p;
}

/// Write a completed run to `dir` as a fixed set of plain-text files:
///
///   trace.csv   one row per grid step: k, t, then the true state, the
///               delivered-stream filter estimate, the plain fused estimate,
///               and the secure estimate for the FIRST configured weight
///               (2 + 4n columns; state indices are 1-based in headers).
///   trace_gamma_<w>.csv   same layout for each additional weight w.
///   errors.csv  per-step per-method deviation-from-truth maxima, per-state
///               absolute errors, and the per-state worst-case deviation
///               bounds per weight (nan when undefined for the run).
///   summary.txt deterministic run digest: configuration echo, an RMSE table
///               (sqrt of the mean squared error over all steps and states),
///               solver statistics, thresholds, and accumulated warnings.
///
/// Every number is written with 17 significant digits, so identical runs
/// produce byte-identical files and parsers recover exact doubles. Wall-clock
/// time never appears in any file.
inline void emit_report(const RunReport& rep, const std::filesystem::path& dir) {
  if (rep.gammas.empty())
    throw std::invalid_argument("emit_report: at least one secure-fusion weight is required");
  const int n = rep.n;
  const std::size_t ng = rep.gammas.size();

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw ScenarioError("emit_report: cannot create output directory " + dir.string() +
                        ": " + ec.message());

  // --- trace files: one per weight, identical layout -----------------------
  for (std::size_t gi = 0; gi < ng; ++gi) {
    const std::string name =
        gi == 0 ? "trace.csv"
                : "trace_gamma_" + detail::gamma_label(rep.gammas[gi]) + ".csv";
    std::ofstream out = detail::open_report_file(dir, name);
    out << "k,t";
    for (const char* base : {"x_true_", "xhat_kf_", "x_wls_", "x_secure_"})
      for (int j = 1; j <= n; ++j) out << ',' << base << j;
    out << '\n';
    for (const StepRow& row : rep.rows) {
      out << row.k << ',' << detail::fmt17(row.time);
      for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(row.x_true(j));
      for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(row.xhat_kf(j));
      for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(row.x_wls(j));
      for (int j = 0; j < n; ++j)
        out << ',' << detail::fmt17(row.secure[gi].estimate(j));
      out << '\n';
    }
    detail::finish_report_file(out, name);
  }

  // --- errors.csv -----------------------------------------------------------
  {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::ofstream out = detail::open_report_file(dir, "errors.csv");
    out << "k,t,einf_kf,einf_wls,einf_oracle";
    for (double g : rep.gammas) out << ",einf_secure_" << detail::gamma_label(g);
    for (const char* base : {"ekf_", "ewls_", "eorc_"})
      for (int j = 1; j <= n; ++j) out << ',' << base << j;
    for (double g : rep.gammas)
      for (int j = 1; j <= n; ++j)
        out << ",esec_" << detail::gamma_label(g) << '_' << j;
    for (double g : rep.gammas)
      for (int j = 1; j <= n; ++j)
        out << ",bound_" << detail::gamma_label(g) << '_' << j;
    out << '\n';
    for (const StepRow& row : rep.rows) {
      const Eigen::VectorXd ekf = (row.xhat_kf - row.x_true).cwiseAbs();
      const Eigen::VectorXd ewls = (row.x_wls - row.x_true).cwiseAbs();
      const Eigen::VectorXd eorc = (row.xhat_oracle - row.x_true).cwiseAbs();
      out << row.k << ',' << detail::fmt17(row.time);
      out << ',' << detail::fmt17(ekf.maxCoeff());
      out << ',' << detail::fmt17(ewls.maxCoeff());
      out << ',' << detail::fmt17(eorc.maxCoeff());
      for (std::size_t gi = 0; gi < ng; ++gi)
        out << ','
            << detail::fmt17(
                   (row.secure[gi].estimate - row.x_true).cwiseAbs().maxCoeff());
      for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(ekf(j));
      for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(ewls(j));
      for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(eorc(j));
      for (std::size_t gi = 0; gi < ng; ++gi) {
        const Eigen::VectorXd esec = (row.secure[gi].estimate - row.x_true).cwiseAbs();
        for (int j = 0; j < n; ++j) out << ',' << detail::fmt17(esec(j));
      }
      for (std::size_t gi = 0; gi < ng; ++gi)
        for (int j = 0; j < n; ++j)
          out << ','
              << detail::fmt17(row.bound.empty() ? nan : row.bound[gi](j));
      out << '\n';
    }
    detail::finish_report_file(out, "errors.csv");
  }

  // --- summary.txt ----------------------------------------------------------
  {
    std::ofstream out = detail::open_report_file(dir, "summary.txt");
    out << "run summary\n===========\n";
    out << "states: " << rep.n << "\n";
    out << "steps: " << rep.rows.size() << "\n";
    out << "attack: " << (rep.attacked ? "yes" : "none") << "\n";
    out << "resilience margin: " << (rep.sparse_margin ? "holds" : "overridden") << "\n";
    out << "deviation bounds: " << (rep.bounds_defined ? "defined" : "undefined") << "\n";
    out << "gammas:";
    for (double g : rep.gammas) out << ' ' << detail::gamma_label(g);
    out << "\n\n";

    out << "rmse over all steps and states (sqrt of mean squared error)\n";
    out << "  kf      " << detail::fmt17(run_rmse(
               rep.rows, [](const StepRow& r) -> const Eigen::VectorXd& {
                 return r.xhat_kf;
               }))
        << "\n";
    out << "  wls     " << detail::fmt17(run_rmse(
               rep.rows, [](const StepRow& r) -> const Eigen::VectorXd& {
                 return r.x_wls;
               }))
        << "\n";
    out << "  oracle  " << detail::fmt17(run_rmse(
               rep.rows, [](const StepRow& r) -> const Eigen::VectorXd& {
                 return r.xhat_oracle;
               }))
        << "\n";
    for (std::size_t gi = 0; gi < ng; ++gi) {
      out << "  secure gamma=" << detail::gamma_label(rep.gammas[gi]) << "  "
          << detail::fmt17(run_rmse(rep.rows,
                                    [gi](const StepRow& r) -> const Eigen::VectorXd& {
                                      return r.secure[gi].estimate;
                                    }))
          << "\n";
    }
    out << "\nsolver statistics\n";
    for (std::size_t gi = 0; gi < ng; ++gi) {
      std::size_t converged = 0, iter_sum = 0;
      int iter_max = 0;
      double kkt_max = 0.0;
      for (const StepRow& row : rep.rows) {
        const SecureStepStats& s = row.secure[gi];
        if (s.converged) ++converged;
        iter_sum += std::size_t(s.iterations);
        if (s.iterations > iter_max) iter_max = s.iterations;
        if (s.kkt_residual > kkt_max) kkt_max = s.kkt_residual;
      }
      const double iter_mean =
          rep.rows.empty() ? 0.0 : double(iter_sum) / double(rep.rows.size());
      out << "  gamma " << detail::gamma_label(rep.gammas[gi]) << ": steps "
          << rep.rows.size() << ", converged " << converged << ", iterations max "
          << iter_max << " mean " << detail::fmt17(iter_mean) << ", kkt max "
          << detail::fmt17(kkt_max) << "\n";
    }

    double th_min = 0.0, th_max = 0.0;
    std::size_t repairs = 0;
    if (!rep.rows.empty()) {
      th_min = th_max = rep.rows.front().threshold;
      for (const StepRow& row : rep.rows) {
        th_min = std::min(th_min, row.threshold);
        th_max = std::max(th_max, row.threshold);
        repairs += std::size_t(row.gain_repairs);
      }
    }
    out << "\nthreshold: min " << detail::fmt17(th_min) << ", max "
        << detail::fmt17(th_max) << "\n";
    out << "gain repairs: " << repairs << "\n";
    out << "warnings: " << rep.log.size() << "\n";
    for (const std::string& w : rep.log.entries()) out << "  " << w << "\n";
    detail::finish_report_file(out, "summary.txt");
  }
}

}  // namespace sase
