// Builds the dense QP solved at each control step: prediction matrices over
// the non-uniform horizon, timestep-scaled cost, keep-in zone / l1 attitude
// / input constraints with shared slacks, and first-input extraction.
#pragma once

#include <stdexcept>
#include <vector>

#include "tandem/error_lin.hpp"
#include "tandem/qp.hpp"

namespace tandem::mpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DimensionMismatch : std::invalid_argument {
  explicit DimensionMismatch(const char* what) : std::invalid_argument(what) {}
};

struct InfeasibleBounds : std::runtime_error {
  InfeasibleBounds() : std::runtime_error("reference input outside the input box") {}
};

// S is block-lower-triangular in the step ordering; inputs beyond the
// control horizon are held at the last optimized input (move blocking).
struct PredictionMatrices {
  MatrixXd S;  // (12 N) x (4 N_u)
  MatrixXd M;  // (12 N) x 12
  int n = 0;
  int n_u = 0;
};

struct CostWeights {
  Mat12 Q = (Vec12() << 20.0, 20.0, 20.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 0.02,
             0.02, 0.02).finished().asDiagonal();
  Eigen::Matrix4d R =
      Eigen::Vector4d(1e-5, 1e-3, 1e-3, 1e-3).asDiagonal();
  Mat12 P_term = (Vec12() << 20.0, 20.0, 20.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0,
                  0.02, 0.02, 0.02).finished().asDiagonal();
  double w_kiz = 1e4;  // quadratic slack weight on eps1
  double w_l1 = 1e4;   // quadratic slack weight on eps2
};

struct ConstraintConfig {
  double alpha = 0.14;  // keep-in half angle, rad
  double gamma = 0.1;   // l1 attitude error bound, rad
  Eigen::Vector4d u_min = Eigen::Vector4d(0.0, -200.0, -200.0, -200.0);
  Eigen::Vector4d u_max = Eigen::Vector4d(3000.0, 200.0, 200.0, 200.0);
  Vec3 x1_b = Vec3::UnitZ();
  Vec3 y1_a = Vec3::UnitZ();
  // Horizon node indices carrying keep-in and l1 rows. Index 0 is the
  // measured state; its rows constrain only the slacks, which keeps the
  // shared eps bounding the measured error as well as the predicted one.
  std::vector<int> constraint_steps;
};

// Default constraint node set: the measured state, every node of the fine
// first segment, and every other node of the coarser segments.
inline std::vector<int> default_constraint_steps(const HorizonSchedule& s) {
  std::vector<int> steps{0};
  int node = 0;
  for (size_t seg = 0; seg < s.segments.size(); ++seg) {
    const int count = s.segments[seg].count;
    for (int i = 1; i <= count; ++i) {
      if (seg == 0 || i % 2 == 0) steps.push_back(node + i);
    }
    node += count;
  }
  return steps;
}

// Decision vector: [d_mu (4 N_u); z blocks (3 per constrained step); eps1; eps2].
struct QpLayout {
  int n_mu = 0;
  std::vector<int> constrained_steps;
  int z_offset = 0;
  int eps1 = 0;
  int eps2 = 0;
  int n = 0;

  int z_index(int k) const { return z_offset + 3 * k; }
};

struct QpProblem {
  MatrixXd H;
  VectorXd F;
  MatrixXd G;
  VectorXd W;
  QpLayout layout;
};

inline PredictionMatrices build_prediction(
    const std::vector<LinearizedModel>& models, int n, int n_u) {
  if (static_cast<int>(models.size()) != n) {
    throw DimensionMismatch("model count does not match horizon length");
  }
  if (n_u < 1 || n_u > n) {
    throw DimensionMismatch("control horizon outside [1, N]");
  }
  PredictionMatrices pred;
  pred.n = n;
  pred.n_u = n_u;
  pred.S = MatrixXd::Zero(12 * n, 4 * n_u);
  pred.M = MatrixXd::Zero(12 * n, 12);

  MatrixXd s_row = MatrixXd::Zero(12, 4 * n_u);
  Mat12 m_row = Mat12::Identity();
  for (int i = 0; i < n; ++i) {
    s_row = models[i].A_d * s_row;
    s_row.middleCols<4>(4 * std::min(i, n_u - 1)) += models[i].B_d;
    m_row = models[i].A_d * m_row;
    pred.S.middleRows<12>(12 * i) = s_row;
    pred.M.middleRows<12>(12 * i) = m_row;
  }
  return pred;
}

// H = S' Qbar S + Rbar, F = S' Qbar M dx0, with the per-step weights scaled
// by dt_i/dt_1 and the terminal block using P unscaled.
inline std::pair<MatrixXd, VectorXd> build_cost(const PredictionMatrices& pred,
                                                const CostWeights& w,
                                                const HorizonSchedule& schedule,
                                                const ErrorState& dx0) {
  const int n = pred.n;
  const int n_u = pred.n_u;
  const auto steps = schedule_times(schedule);
  if (static_cast<int>(steps.size()) != n) {
    throw DimensionMismatch("schedule does not match prediction horizon");
  }
  const double dt1 = steps[0].dt;

  MatrixXd qs(12 * n, 4 * n_u);
  Eigen::VectorXd qm_dx(12 * n);
  const Vec12 m_dx_full = dx0.as_vector();
  for (int i = 1; i <= n; ++i) {
    Mat12 qi;
    if (i == n) {
      qi = w.P_term;
    } else {
      qi = (steps[i].dt / dt1) * w.Q;
    }
    qs.middleRows<12>(12 * (i - 1)) = qi * pred.S.middleRows<12>(12 * (i - 1));
    qm_dx.segment<12>(12 * (i - 1)) =
        qi * (pred.M.middleRows<12>(12 * (i - 1)) * m_dx_full);
  }

  MatrixXd h = pred.S.transpose() * qs;
  for (int j = 0; j < n; ++j) {
    const int blk = std::min(j, n_u - 1);
    h.block<4, 4>(4 * blk, 4 * blk) += (steps[j].dt / dt1) * w.R;
  }
  h = ((h + h.transpose()) / 2.0).eval();
  VectorXd f = pred.S.transpose() * qm_dx;
  return {h, f};
}

namespace detail {

// phi-row coefficients of the predicted attitude error at node i:
// xi_phi_i = s_phi * d_mu + m_phi_dx0. Node 0 is the measured state.
struct PhiPrediction {
  MatrixXd s_phi;  // 3 x (4 N_u)
  Vec3 m_phi_dx0;
};

inline PhiPrediction phi_prediction(const PredictionMatrices& pred,
                                    const ErrorState& dx0, int node) {
  PhiPrediction p;
  if (node == 0) {
    p.s_phi = MatrixXd::Zero(3, pred.S.cols());
    p.m_phi_dx0 = dx0.xi_phi;
  } else {
    p.s_phi = pred.S.middleRows<3>(12 * (node - 1));
    p.m_phi_dx0 = pred.M.middleRows<3>(12 * (node - 1)) * dx0.as_vector();
  }
  return p;
}

}  // namespace detail

struct ConstraintRows {
  MatrixXd G;
  VectorXd W;
};

// Linearized keep-in rows, one per constrained node, sharing eps1:
//   [-x1' (C_ar' y1)^x P_i S, -1] [d_mu; eps1]
//     <= -cos(alpha) + x1' C_ar' y1 + x1' (C_ar' y1)^x P_i M dx0
inline ConstraintRows keep_in_constraint(const PredictionMatrices& pred,
                                         const std::vector<ReferencePoint>& refs,
                                         const ConstraintConfig& cfg,
                                         const ErrorState& dx0,
                                         const QpLayout& layout) {
  const auto& steps = layout.constrained_steps;
  ConstraintRows rows;
  rows.G = MatrixXd::Zero(steps.size(), layout.n);
  rows.W = VectorXd::Zero(steps.size());
  for (size_t k = 0; k < steps.size(); ++k) {
    const int i = steps[k];
    if (i < 0 || i > pred.n) throw DimensionMismatch("constraint node outside horizon");
    const Vec3 y_r = refs.at(i).pose.C.transpose() * cfg.y1_a;
    const Eigen::RowVector3d c = cfg.x1_b.transpose() * cross(y_r);
    const auto phi = detail::phi_prediction(pred, dx0, i);
    rows.G.block(k, 0, 1, layout.n_mu) = -c * phi.s_phi;
    rows.G(k, layout.eps1) = -1.0;
    rows.W(k) = -std::cos(cfg.alpha) + cfg.x1_b.dot(y_r) + c * phi.m_phi_dx0;
  }
  return rows;
}

// l1 attitude-error rows: per constrained node, 6 absolute-value rows tying
// the node's z variables to the predicted xi_phi, plus one sum row with the
// shared eps2 slack.
inline ConstraintRows l1_constraint(const PredictionMatrices& pred,
                                    const ConstraintConfig& cfg,
                                    const ErrorState& dx0,
                                    const QpLayout& layout) {
  const auto& steps = layout.constrained_steps;
  const int n_rows = static_cast<int>(steps.size()) * 7;
  ConstraintRows rows;
  rows.G = MatrixXd::Zero(n_rows, layout.n);
  rows.W = VectorXd::Zero(n_rows);
  int r = 0;
  for (size_t k = 0; k < steps.size(); ++k) {
    const auto phi = detail::phi_prediction(pred, dx0, steps[k]);
    const int z = layout.z_index(static_cast<int>(k));
    //  P_i S d_mu - z <= -P_i M dx0
    // -P_i S d_mu - z <=  P_i M dx0
    for (int c = 0; c < 3; ++c) {
      rows.G.block(r, 0, 1, layout.n_mu) = phi.s_phi.row(c);
      rows.G(r, z + c) = -1.0;
      rows.W(r) = -phi.m_phi_dx0(c);
      ++r;
      rows.G.block(r, 0, 1, layout.n_mu) = -phi.s_phi.row(c);
      rows.G(r, z + c) = -1.0;
      rows.W(r) = phi.m_phi_dx0(c);
      ++r;
    }
    rows.G(r, z) = rows.G(r, z + 1) = rows.G(r, z + 2) = 1.0;
    rows.G(r, layout.eps2) = -1.0;
    rows.W(r) = cfg.gamma;
    ++r;
  }
  return rows;
}

// Box bounds on the optimized inputs: d_u in [u_min - u_r, u_max - u_r]
// at every control-horizon node.
inline ConstraintRows input_constraint(const std::vector<ReferencePoint>& refs,
                                       const ConstraintConfig& cfg, int n_u,
                                       const QpLayout& layout) {
  ConstraintRows rows;
  rows.G = MatrixXd::Zero(8 * n_u, layout.n);
  rows.W = VectorXd::Zero(8 * n_u);
  for (int j = 0; j < n_u; ++j) {
    const Eigen::Vector4d u_r = refs.at(j).u_r.as_vector();
    const Eigen::Vector4d hi = cfg.u_max - u_r;
    const Eigen::Vector4d lo = cfg.u_min - u_r;
    if ((hi.array() < 0.0).any() || (lo.array() > 0.0).any()) {
      throw InfeasibleBounds();
    }
    for (int c = 0; c < 4; ++c) {
      rows.G(8 * j + c, 4 * j + c) = 1.0;
      rows.W(8 * j + c) = hi(c);
      rows.G(8 * j + 4 + c, 4 * j + c) = -1.0;
      rows.W(8 * j + 4 + c) = -lo(c);
    }
  }
  return rows;
}

inline QpLayout make_layout(int n_u, const std::vector<int>& constrained_steps) {
  QpLayout l;
  l.n_mu = 4 * n_u;
  l.constrained_steps = constrained_steps;
  l.z_offset = l.n_mu;
  l.eps1 = l.z_offset + 3 * static_cast<int>(constrained_steps.size());
  l.eps2 = l.eps1 + 1;
  l.n = l.eps2 + 1;
  return l;
}

// Assembles the full QP over [d_mu; z...; eps1; eps2]. refs holds one
// reference point per horizon node, 0..N inclusive.
inline QpProblem assemble(const ErrorState& dx0,
                          const std::vector<LinearizedModel>& models,
                          const std::vector<ReferencePoint>& refs,
                          const CostWeights& w, const ConstraintConfig& cfg,
                          const HorizonSchedule& schedule) {
  const int n = schedule.total_steps();
  const int n_u = schedule.control_horizon;
  if (static_cast<int>(refs.size()) != n + 1) {
    throw DimensionMismatch("need one reference point per horizon node");
  }
  const PredictionMatrices pred = build_prediction(models, n, n_u);
  auto [h_mu, f_mu] = build_cost(pred, w, schedule, dx0);

  QpProblem qp;
  qp.layout = make_layout(n_u, cfg.constraint_steps);
  const QpLayout& l = qp.layout;

  qp.H = MatrixXd::Zero(l.n, l.n);
  qp.H.topLeftCorner(l.n_mu, l.n_mu) = h_mu;
  for (int i = l.z_offset; i < l.eps1; ++i) qp.H(i, i) = 1e-8;
  qp.H(l.eps1, l.eps1) = w.w_kiz;
  qp.H(l.eps2, l.eps2) = w.w_l1;
  qp.F = VectorXd::Zero(l.n);
  qp.F.head(l.n_mu) = f_mu;

  const ConstraintRows kiz = keep_in_constraint(pred, refs, cfg, dx0, l);
  const ConstraintRows l1 = l1_constraint(pred, cfg, dx0, l);
  const ConstraintRows box = input_constraint(refs, cfg, n_u, l);

  const Eigen::Index m = kiz.G.rows() + l1.G.rows() + box.G.rows() + 2;
  qp.G = MatrixXd::Zero(m, l.n);
  qp.W = VectorXd::Zero(m);
  Eigen::Index r = 0;
  qp.G.middleRows(r, kiz.G.rows()) = kiz.G;
  qp.W.segment(r, kiz.W.size()) = kiz.W;
  r += kiz.G.rows();
  qp.G.middleRows(r, l1.G.rows()) = l1.G;
  qp.W.segment(r, l1.W.size()) = l1.W;
  r += l1.G.rows();
  qp.G.middleRows(r, box.G.rows()) = box.G;
  qp.W.segment(r, box.W.size()) = box.W;
  r += box.G.rows();
  qp.G(r, l.eps1) = -1.0;      // eps1 >= 0
  qp.G(r + 1, l.eps2) = -1.0;  // eps2 >= 0
  return qp;
}

// Extracts d_u0 and composes the applied input with the feedforward:
// f = f^r + df, m = dC' m_r + dm, with dC from the measured error state.
inline ControlInput first_input(const VectorXd& solution, const QpLayout& layout,
                                const ReferencePoint& ref0,
                                const ErrorState& dx0) {
  const Eigen::Vector4d du = solution.head<4>();
  const Mat3 dc = exp_so3(dx0.xi_phi);
  ControlInput u;
  u.thrust_n = ref0.u_r.thrust_n + du(0);
  u.torque_nm = dc.transpose() * ref0.u_r.torque_nm + du.tail<3>();
  return u;
}

}  // namespace tandem::mpc
