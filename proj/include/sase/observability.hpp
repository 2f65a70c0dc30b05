#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <string>
#include <vector>

#include "sase/common.hpp"
#include "sase/linalg.hpp"
#include "sase/model.hpp"

namespace sase {

/// Which states each sensor can observe, and which sensors observe each
/// state. `support[i]` is the coordinate support of sensor i's observable
/// subspace (the diagonal of H_i); `observers[j]` is the set E_j of sensors
/// that observe state j. Both are sorted ascending.
struct ObservabilityIndex {
  int n = 0;
  int m = 0;
  std::vector<std::vector<int>> support;
  std::vector<std::vector<int>> observers;
  std::vector<int> rank;  ///< rank of sensor i's observability matrix
  Eigen::MatrixXd h;      ///< m x n 0/1 matrix; row i is diag(H_i)
  bool used_mode_route = false;
};

/// Literal stacked observability matrix [C; CA; ...; CA^{n-1}]. Fine for
/// small n; numerically useless for stiff systems at larger n (use the mode
/// route instead).
inline Eigen::MatrixXd observability_matrix(const Eigen::MatrixXd& A,
                                            const Eigen::MatrixXd& C) {
  const Eigen::Index n = A.rows();
  const Eigen::Index p = C.rows();
  Eigen::MatrixXd O(p * n, n);
  Eigen::MatrixXd block = C;
  for (Eigen::Index k = 0; k < n; ++k) {
    O.middleRows(k * p, p) = block;
    if (k + 1 < n) block = block * A;
  }
  return O;
}

namespace detail {

/// Mode route: sensor i sees mode r iff C_i * v_r is nonzero relative to
/// scales; the states a seen mode touches are the support of the mode's left
/// eigenvector. Valid whenever eigenvalues are separated (then observable
/// subspaces are spans of eigenspaces).
inline ObservabilityIndex observable_sets_modes(const ContinuousModel& model,
                                                const ModeDecomposition& md,
                                                double mode_tol, double rank_tol) {
  const int n = int(model.n());
  const int m = int(model.m());
  ObservabilityIndex idx;
  idx.n = n;
  idx.m = m;
  idx.used_mode_route = true;
  idx.h = Eigen::MatrixXd::Zero(m, n);
  idx.support.resize(m);
  idx.rank.assign(m, 0);

  // Precompute mode visibility per sensor and the coordinate support of each
  // left eigenvector.
  std::vector<std::vector<int>> mode_states(n);
  for (int r = 0; r < n; ++r) {
    const double wnorm = md.W.row(r).norm();
    for (int j = 0; j < n; ++j)
      if (std::abs(md.W(r, j)) > mode_tol * wnorm) mode_states[r].push_back(j);
  }
  for (int i = 0; i < m; ++i) {
    const Eigen::RowVectorXcd ci = model.C.row(i).cast<std::complex<double>>();
    const double cnorm = std::max(model.C.row(i).norm(), 1e-300);
    std::vector<int> seen;
    std::vector<bool> in_support(n, false);
    for (int r = 0; r < n; ++r) {
      const double vnorm = md.V.col(r).norm();
      if (std::abs((ci * md.V.col(r))(0, 0)) > mode_tol * cnorm * vnorm) {
        seen.push_back(r);
        for (int j : mode_states[r]) in_support[j] = true;
      }
    }
    auto& supp = idx.support[i];
    for (int j = 0; j < n; ++j)
      if (in_support[j]) supp.push_back(j);
    idx.rank[i] = int(seen.size());

    // Coordinate alignment: the seen modes must span exactly span{e_j : j in
    // supp}. Since distinct-mode left eigenvectors are independent and each
    // is supported inside supp, this reduces to |seen| == |supp| plus a
    // numeric-rank confirmation of the restricted stack.
    if (int(seen.size()) != int(supp.size())) {
      throw ModelError("sensor " + std::to_string(i + 1) +
                       ": observable subspace is not coordinate-aligned (" +
                       std::to_string(seen.size()) + " modes vs " +
                       std::to_string(supp.size()) + " states)");
    }
    if (!supp.empty()) {
      Eigen::MatrixXcd S(seen.size(), supp.size());
      for (std::size_t a = 0; a < seen.size(); ++a)
        for (std::size_t b = 0; b < supp.size(); ++b)
          S(a, b) = md.W(seen[a], supp[b]) / std::max(md.W.row(seen[a]).norm(), 1e-300);
      Eigen::JacobiSVD<Eigen::MatrixXcd> svd(S);
      const auto& sv = svd.singularValues();
      Eigen::Index rank = 0;
      for (Eigen::Index a = 0; a < sv.size(); ++a)
        if (sv(a) > rank_tol * std::max(sv(0), 1e-300)) ++rank;
      if (rank != Eigen::Index(supp.size()))
        throw ModelError("sensor " + std::to_string(i + 1) +
                         ": observable subspace is not coordinate-aligned "
                         "(rank defect in left-eigenvector stack)");
    }
    for (int j : supp) idx.h(i, j) = 1.0;
  }
  return idx;
}

/// Fallback for non-separated spectra: column supports and ranks of the
/// literal observability matrices. Only trustworthy for small, well-scaled
/// systems.
inline ObservabilityIndex observable_sets_literal(const ContinuousModel& model,
                                                  double rank_tol) {
  const int n = int(model.n());
  const int m = int(model.m());
  ObservabilityIndex idx;
  idx.n = n;
  idx.m = m;
  idx.used_mode_route = false;
  idx.h = Eigen::MatrixXd::Zero(m, n);
  idx.support.resize(m);
  idx.rank.assign(m, 0);
  for (int i = 0; i < m; ++i) {
    const Eigen::MatrixXd O = observability_matrix(model.A, model.C.row(i));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(O);
    const double smax = std::max(svd.singularValues()(0), 1e-300);
    int rank = 0;
    for (Eigen::Index a = 0; a < svd.singularValues().size(); ++a)
      if (svd.singularValues()(a) > rank_tol * smax) ++rank;
    idx.rank[i] = rank;
    auto& supp = idx.support[i];
    for (int j = 0; j < n; ++j)
      if (O.col(j).norm() > rank_tol * smax) supp.push_back(j);
    if (int(supp.size()) != rank)
      throw ModelError("sensor " + std::to_string(i + 1) +
                       ": observable subspace is not coordinate-aligned (rank " +
                       std::to_string(rank) + " vs " + std::to_string(supp.size()) +
                       " touched states)");
    if (!supp.empty()) {
      // rowspan(O_i) must equal span{e_j : j in supp}: appending those basis
      // rows must not raise the rank.
      Eigen::MatrixXd B(O.rows() + supp.size(), n);
      B.topRows(O.rows()) = O / smax;
      B.bottomRows(supp.size()).setZero();
      for (std::size_t a = 0; a < supp.size(); ++a) B(O.rows() + a, supp[a]) = 1.0;
      if (numeric_rank(B, rank_tol) != rank)
        throw ModelError("sensor " + std::to_string(i + 1) +
                         ": observable subspace is not coordinate-aligned "
                         "(row span off the coordinate axes)");
    }
    for (int j : supp) idx.h(i, j) = 1.0;
  }
  return idx;
}

}  // namespace detail

/// Compute per-sensor observable supports H_i and per-state observer sets
/// E_j. Throws ModelError when a state is observed by no sensor or a
/// sensor's observable subspace is not a span of coordinate axes.
inline ObservabilityIndex observable_sets(const ContinuousModel& model,
                                          double mode_tol = 1e-9,
                                          double rank_tol = kRankTol) {
  const ModeDecomposition md = analyze_modes(model.A);
  ObservabilityIndex idx = md.separated
                               ? detail::observable_sets_modes(model, md, mode_tol, rank_tol)
                               : detail::observable_sets_literal(model, rank_tol);
  idx.observers.assign(idx.n, {});
  for (int i = 0; i < idx.m; ++i)
    for (int j : idx.support[i]) idx.observers[j].push_back(i);
  for (int j = 0; j < idx.n; ++j)
    if (idx.observers[j].empty())
      throw ModelError("state " + std::to_string(j + 1) +
                       " is observed by no sensor (empty observer set)");
  return idx;
}

/// Maximum s such that the system stays observable after removing ANY s
/// sensors. A scenario with at most p corrupted sensors is attack-identifiable
/// when this order is >= 2p. With separated eigenvalues this is (min over
/// modes of the number of sensors seeing the mode) - 1; otherwise falls back
/// to subset enumeration (small m only).
inline int sparse_observability_order(const ContinuousModel& model,
                                      double mode_tol = 1e-9,
                                      double rank_tol = kRankTol) {
  const ModeDecomposition md = analyze_modes(model.A);
  const int n = int(model.n());
  const int m = int(model.m());
  if (md.separated) {
    int min_count = m;
    for (int r = 0; r < n; ++r) {
      const double vnorm = md.V.col(r).norm();
      int count = 0;
      for (int i = 0; i < m; ++i) {
        const Eigen::RowVectorXcd ci = model.C.row(i).cast<std::complex<double>>();
        const double cnorm = std::max(model.C.row(i).norm(), 1e-300);
        if (std::abs((ci * md.V.col(r))(0, 0)) > mode_tol * cnorm * vnorm) ++count;
      }
      min_count = std::min(min_count, count);
    }
    return min_count - 1;
  }
  if (m > 20)
    throw ModelError("sparse observability order needs separated eigenvalues "
                     "for m > 20 (subset enumeration too expensive)");
  // Increase s until some removal of s sensors breaks observability.
  std::vector<int> sensors(m);
  for (int i = 0; i < m; ++i) sensors[i] = i;
  for (int s = 1; s < m; ++s) {
    std::vector<int> comb(s);
    for (int i = 0; i < s; ++i) comb[i] = i;
    while (true) {
      std::vector<bool> removed(m, false);
      for (int i : comb) removed[i] = true;
      Eigen::MatrixXd Csub(m - s, model.C.cols());
      int r = 0;
      for (int i = 0; i < m; ++i)
        if (!removed[i]) Csub.row(r++) = model.C.row(i);
      if (numeric_rank(observability_matrix(model.A, Csub), rank_tol) < n) return s - 1;
      int pos = s - 1;
      while (pos >= 0 && comb[pos] == m - s + pos) --pos;
      if (pos < 0) break;
      ++comb[pos];
      for (int i = pos + 1; i < s; ++i) comb[i] = comb[i - 1] + 1;
    }
  }
  return m - 1;
}

/// Full model validation: structure + Assumption-level spectrum checks +
/// joint observability of (A, C).
inline void validate_model(const ContinuousModel& model, double mode_tol = 1e-9,
                           double rank_tol = kRankTol) {
  validate_model_structure(model);
  const ModeDecomposition md = analyze_modes(model.A);
  if (md.separated) {
    for (Eigen::Index r = 0; r < model.n(); ++r) {
      const double vnorm = md.V.col(r).norm();
      bool seen = false;
      for (Eigen::Index i = 0; i < model.m() && !seen; ++i) {
        const Eigen::RowVectorXcd ci = model.C.row(i).cast<std::complex<double>>();
        const double cnorm = std::max(model.C.row(i).norm(), 1e-300);
        seen = std::abs((ci * md.V.col(r))(0, 0)) > mode_tol * cnorm * vnorm;
      }
      if (!seen)
        throw ModelError("mode " + std::to_string(r + 1) +
                         " is invisible to every sensor: (A, C) not observable");
    }
  } else if (numeric_rank(observability_matrix(model.A, model.C), rank_tol) <
             model.n()) {
    throw ModelError("(A, C) is not observable (stacked observability matrix "
                     "is rank deficient)");
  }
}

}  // namespace sase
