// Dense convex QP solver: min 1/2 x'Hx + F'x  s.t.  Gx <= W.
// Primal-dual interior point (Mehrotra predictor-corrector) sized for
// ~200 variables and ~500 rows at 50 Hz.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tandem::qp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NumericalBreakdown : std::runtime_error {
  NumericalBreakdown() : std::runtime_error("qp solver produced non-finite iterates") {}
};

enum class Status { Optimal, MaxIter, Infeasible };

struct KktResiduals {
  double stationarity = 0.0;    // ||Hx + F + G'lambda||_inf
  double primal = 0.0;          // ||max(Gx - W, 0)||_inf
  double complementarity = 0.0; // ||lambda o (Gx - W)||_inf
};

struct QpSolution {
  VectorXd x;
  VectorXd duals;
  Status status = Status::MaxIter;
  KktResiduals kkt;
  int iterations = 0;
  std::vector<double> mu_history;  // duality measure per iteration
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iter = 50;
};

inline KktResiduals kkt_check(const MatrixXd& h, const VectorXd& f,
                              const MatrixXd& g, const VectorXd& w,
                              const VectorXd& x, const VectorXd& duals) {
  KktResiduals r;
  r.stationarity = (h * x + f + g.transpose() * duals).lpNorm<Eigen::Infinity>();
  if (g.rows() > 0) {
    const VectorXd viol = g * x - w;
    r.primal = viol.cwiseMax(0.0).lpNorm<Eigen::Infinity>();
    r.complementarity = (duals.array() * viol.array()).abs().maxCoeff();
  }
  return r;
}

namespace detail {

// Per-row nonzero supports of G, computed once per solve. The normal matrix
// H + G' diag(d) G is then accumulated over supports instead of a full
// dense triple product; rows that are effectively dense are batched into a
// rank update.
struct RowStructure {
  std::vector<std::vector<int>> sparse_support;  // per sparse row
  std::vector<int> sparse_rows;
  std::vector<int> dense_rows;
};

inline RowStructure analyze_rows(const MatrixXd& g) {
  RowStructure rs;
  const int m = static_cast<int>(g.rows());
  const int n = static_cast<int>(g.cols());
  for (int r = 0; r < m; ++r) {
    std::vector<int> nz;
    for (int c = 0; c < n; ++c) {
      if (g(r, c) != 0.0) nz.push_back(c);
    }
    if (static_cast<int>(nz.size()) * 2 > n) {
      rs.dense_rows.push_back(r);
    } else {
      rs.sparse_rows.push_back(r);
      rs.sparse_support.push_back(std::move(nz));
    }
  }
  return rs;
}

inline void assemble_normal_matrix(const MatrixXd& h, const MatrixXd& g,
                                   const VectorXd& d, const RowStructure& rs,
                                   MatrixXd& m) {
  m = h;
  m.diagonal().array() += 1e-9;  // static regularization for PSD blocks
  for (size_t k = 0; k < rs.sparse_rows.size(); ++k) {
    const int r = rs.sparse_rows[k];
    const auto& idx = rs.sparse_support[k];
    const double dr = d(r);
    for (size_t a = 0; a < idx.size(); ++a) {
      const double gia = dr * g(r, idx[a]);
      for (size_t b = 0; b <= a; ++b) {
        m(idx[a], idx[b]) += gia * g(r, idx[b]);
      }
    }
  }
  if (!rs.dense_rows.empty()) {
    MatrixXd bt(g.cols(), rs.dense_rows.size());
    for (size_t k = 0; k < rs.dense_rows.size(); ++k) {
      bt.col(k) = std::sqrt(d(rs.dense_rows[k])) *
                  g.row(rs.dense_rows[k]).transpose();
    }
    m.selfadjointView<Eigen::Lower>().rankUpdate(bt);
  }
}

inline double step_to_boundary(const VectorXd& v, const VectorXd& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  }
  return a;
}

// Equality-constrained polish on the strongly active set. Returns true and
// overwrites (x, duals) when the polished point satisfies the KKT system.
inline bool polish(const MatrixXd& h, const VectorXd& f, const MatrixXd& g,
                   const VectorXd& w, double tol, VectorXd& x,
                   VectorXd& duals) {
  const Eigen::Index n = h.rows();
  const Eigen::Index m = g.rows();
  std::vector<int> active;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double slack = w(i) - g.row(i) * x;
    if (duals(i) > slack) active.push_back(static_cast<int>(i));
  }
  MatrixXd hr = h;
  hr.diagonal().array() += 1e-12;
  Eigen::LDLT<MatrixXd> hf(hr);
  if (hf.info() != Eigen::Success) return false;

  VectorXd x_new;
  VectorXd duals_new = VectorXd::Zero(m);
  if (active.empty()) {
    x_new = hf.solve(-f);
    x_new += hf.solve(-f - hr * x_new);  // one refinement pass
  } else {
    MatrixXd ga(active.size(), n);
    VectorXd wa(active.size());
    for (size_t k = 0; k < active.size(); ++k) {
      ga.row(k) = g.row(active[k]);
      wa(k) = w(active[k]);
    }
    const MatrixXd y = hf.solve(ga.transpose());
    MatrixXd z = ga * y;
    z.diagonal().array() += 1e-14;
    const VectorXd rhs = -(ga * hf.solve(f)) - wa;
    Eigen::LDLT<MatrixXd> zf(z);
    if (zf.info() != Eigen::Success) return false;
    const VectorXd la = zf.solve(rhs);
    x_new = hf.solve(-(f + ga.transpose() * la));
    x_new += hf.solve(-(f + ga.transpose() * la) - hr * x_new);
    for (size_t k = 0; k < active.size(); ++k) duals_new(active[k]) = la(k);
    if ((duals_new.array() < -tol).any()) return false;
  }
  if (!x_new.allFinite() || !duals_new.allFinite()) return false;
  duals_new = duals_new.cwiseMax(0.0);
  const KktResiduals kr = kkt_check(h, f, g, w, x_new, duals_new);
  const KktResiduals cur = kkt_check(h, f, g, w, x, duals);
  const double best_new = std::max({kr.stationarity, kr.primal, kr.complementarity});
  const double best_cur = std::max({cur.stationarity, cur.primal, cur.complementarity});
  if (best_new <= std::max(best_cur, tol)) {
    x = x_new;
    duals = duals_new;
    return true;
  }
  return false;
}

}  // namespace detail

inline QpSolution solve(const MatrixXd& h, const VectorXd& f,
                        const MatrixXd& g, const VectorXd& w,
                        const SolveOptions& opts = {}) {
  const Eigen::Index n = h.rows();
  const Eigen::Index m = g.rows();
  if (!h.allFinite() || !f.allFinite() || !g.allFinite() || !w.allFinite()) {
    throw NumericalBreakdown();
  }

  QpSolution sol;
  sol.duals = VectorXd::Zero(m);

  MatrixXd hr = h;
  hr.diagonal().array() += 1e-9;
  Eigen::LDLT<MatrixXd> h_fact(hr);
  VectorXd x = h_fact.solve(-f);
  x += h_fact.solve(-f - hr * x);

  if (m == 0) {
    sol.x = x;
    sol.kkt = kkt_check(h, f, g, w, x, sol.duals);
    sol.status = sol.kkt.stationarity <= opts.tol ? Status::Optimal : Status::MaxIter;
    return sol;
  }

  const detail::RowStructure rs = detail::analyze_rows(g);

  VectorXd s = (w - g * x).cwiseMax(1.0);
  VectorXd lambda = VectorXd::Ones(m);

  MatrixXd kkt_mat(n, n);
  Eigen::LLT<MatrixXd, Eigen::Lower> llt;

  const double w_scale = 1.0 + w.lpNorm<Eigen::Infinity>();
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const VectorXd r_d = h * x + f + g.transpose() * lambda;
    const VectorXd gx = g * x;
    const VectorXd r_p = gx + s - w;
    const double mu = s.dot(lambda) / static_cast<double>(m);
    sol.mu_history.push_back(mu);
    sol.iterations = iter;

    const KktResiduals kr = kkt_check(h, f, g, w, x, lambda);
    if (kr.stationarity <= opts.tol && kr.primal <= opts.tol &&
        kr.complementarity <= opts.tol) {
      sol.status = Status::Optimal;
      break;
    }
    // Infeasibility: duals blowing up while primal violation persists.
    if (lambda.lpNorm<Eigen::Infinity>() > 1e9 &&
        kr.primal > std::sqrt(opts.tol) * w_scale) {
      sol.status = Status::Infeasible;
      sol.x = x;
      sol.duals = lambda;
      sol.kkt = kr;
      return sol;
    }

    const VectorXd d = lambda.cwiseQuotient(s);
    detail::assemble_normal_matrix(h, g, d, rs, kkt_mat);
    llt.compute(kkt_mat);
    if (llt.info() != Eigen::Success) {
      kkt_mat.diagonal().array() += 1e-6;
      llt.compute(kkt_mat);
      if (llt.info() != Eigen::Success) throw NumericalBreakdown();
    }

    // Affine (predictor) direction.
    VectorXd r_c = lambda.cwiseProduct(s);
    VectorXd q = (r_c - lambda.cwiseProduct(r_p)).cwiseQuotient(s);
    VectorXd dx = llt.solve(-r_d + g.transpose() * q);
    VectorXd ds = -r_p - g * dx;
    VectorXd dl = (-r_c - lambda.cwiseProduct(ds)).cwiseQuotient(s);

    const double a_p = detail::step_to_boundary(s, ds);
    const double a_d = detail::step_to_boundary(lambda, dl);
    const double mu_aff = (s + a_p * ds).dot(lambda + a_d * dl) /
                          static_cast<double>(m);
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3);
    sigma = std::min(1.0, sigma);

    // Corrector with Mehrotra's second-order term.
    r_c = lambda.cwiseProduct(s).array() - sigma * mu +
          (dl.array() * ds.array());
    q = (r_c - lambda.cwiseProduct(r_p)).cwiseQuotient(s);
    dx = llt.solve(-r_d + g.transpose() * q);
    ds = -r_p - g * dx;
    dl = (-r_c - lambda.cwiseProduct(ds)).cwiseQuotient(s);

    const double alpha =
        0.995 * std::min(detail::step_to_boundary(s, ds),
                         detail::step_to_boundary(lambda, dl));
    x += alpha * dx;
    s += alpha * ds;
    lambda += alpha * dl;
    if (!x.allFinite() || !s.allFinite() || !lambda.allFinite()) {
      throw NumericalBreakdown();
    }
  }

  detail::polish(h, f, g, w, opts.tol, x, lambda);
  sol.x = x;
  sol.duals = lambda;
  sol.kkt = kkt_check(h, f, g, w, x, lambda);
  if (sol.kkt.stationarity <= opts.tol && sol.kkt.primal <= opts.tol &&
      sol.kkt.complementarity <= opts.tol) {
    sol.status = Status::Optimal;
  } else if (sol.status != Status::Infeasible) {
    sol.status = Status::MaxIter;
  }
  return sol;
}

// Text dump for offline debugging: a dimensions line "n m", then H, F, G, W
// as row-major entries with 17 significant digits.
inline void dump_problem(std::ostream& os, const MatrixXd& h,
                         const VectorXd& f, const MatrixXd& g,
                         const VectorXd& w) {
  const Eigen::IOFormat fmt(17, Eigen::DontAlignCols, " ", "\n");
  os << h.rows() << " " << g.rows() << "\n";
  os << h.format(fmt) << "\n";
  os << f.transpose().format(fmt) << "\n";
  if (g.rows() > 0) {
    os << g.format(fmt) << "\n";
    os << w.transpose().format(fmt) << "\n";
  }
}

inline void dump_problem(const std::string& path, const MatrixXd& h,
                         const VectorXd& f, const MatrixXd& g,
                         const VectorXd& w) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open qp dump file: " + path);
  dump_problem(os, h, f, g, w);
}

}  // namespace tandem::qp
