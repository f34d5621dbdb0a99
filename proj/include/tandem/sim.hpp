// Closed-loop simulation at the controller rate: disturbance estimation,
// replanning, Monte Carlo randomization, metrics, and CSV logging.
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "tandem/config.hpp"

namespace tandem::sim {

// Moving-average estimate of the velocity-channel disturbance: measured
// velocity minus the model's one-step prediction with zero wind.
struct DisturbanceEstimate {
  std::vector<Vec3> window;
  int head = 0;
  int count = 0;
  Vec3 dhat = Vec3::Zero();  // m/s per control step

  explicit DisturbanceEstimate(int capacity = 25)
      : window(static_cast<size_t>(capacity), Vec3::Zero()) {}
};

inline DisturbanceEstimate estimate_disturbance(const VehicleState& prev_state,
                                                const ControlInput& prev_u,
                                                const VehicleState& new_state,
                                                const VehicleParams& p,
                                                DisturbanceEstimate est,
                                                double dt) {
  const VehicleState pred = step_rk4(prev_state, prev_u, Vec3::Zero(), p, dt);
  const Vec3 sample = new_state.pose.v - pred.pose.v;
  est.window[est.head] = sample;
  est.head = (est.head + 1) % static_cast<int>(est.window.size());
  est.count = std::min(est.count + 1, static_cast<int>(est.window.size()));
  Vec3 sum = Vec3::Zero();
  for (int i = 0; i < est.count; ++i) sum += est.window[i];
  est.dhat = sum / est.count;
  return est;
}

// True when the trailing samples of ||xi_phi||_1 sit at or above gamma
// continuously for at least threshold_s. The duration spans first to last
// active sample.
inline bool replan_monitor(const std::vector<double>& l1_history, double dt,
                           double gamma, double threshold_s) {
  int active = 0;
  for (auto it = l1_history.rbegin(); it != l1_history.rend(); ++it) {
    if (*it >= gamma - 1e-6) {
      ++active;
    } else {
      break;
    }
  }
  if (active == 0) return false;
  return (active - 1) * dt >= threshold_s - 1e-12;
}

struct StepRecord {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 phi = Vec3::Zero();  // log_so3(C_ab)
  Vec3 omega = Vec3::Zero();
  ControlInput u;
  Eigen::Vector4d du = Eigen::Vector4d::Zero();  // feedback part of u
  ErrorState err;
  double eps1 = 0.0;
  double eps2 = 0.0;
  int replan = 0;  // 1 on the first step driven by a fresh trajectory
  Vec3 dhat = Vec3::Zero();
  bool qp_ok = true;
  int qp_iters = 0;
  double qp_kkt = 0.0;            // max of the three KKT residuals
  double row_violation = 0.0;     // max over QP rows of (Gx - W)+
  double kiz_nonlinear = 0.0;     // x1' C_ab' y1 - cos(alpha), measured
};

struct ReplanEvent {
  double t = 0.0;
  double active_duration_s = 0.0;  // l1 activity run length when triggered
  bool forced = false;             // solver-failure fallback
};

struct RunSummary {
  double rmse_att = 0.0;
  double rmse_vel = 0.0;
  double rmse_pos = 0.0;
  double rmse_df = 0.0;
  double rmse_dm = 0.0;
  double time_to_target = -1.0;
  bool reached = false;
  int replans = 0;
  int solver_failures = 0;
  int steps = 0;
  double max_kkt = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t run_seed = 0;
};

struct RunLog {
  std::vector<StepRecord> records;
  std::vector<ReplanEvent> replan_events;
  RunSummary summary;
};

// One realized experiment: the true plant, the controller's model of it,
// the initial state, and the wind environment.
struct RunSetup {
  VehicleParams plant;
  VehicleParams estimated;
  VehicleState init;
  Vec3 wind_mean = Vec3::Zero();
  double w0 = 0.0;
  std::uint64_t noise_seed = 0;
};

inline RunSetup nominal_setup(const SimConfig& cfg) {
  RunSetup s;
  s.plant = cfg.vehicle;
  s.estimated = cfg.vehicle;
  s.init.pose.C = exp_so3(cfg.init_attitude);
  s.init.pose.v = cfg.init_velocity;
  s.init.pose.r = cfg.init_position;
  s.init.omega = cfg.init_omega;
  s.wind_mean = cfg.wind_mean;
  s.w0 = cfg.dryden_w0;
  s.noise_seed = cfg.seed;
  return s;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Vec3 normal3(std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  return sigma * Vec3(n(rng), n(rng), n(rng));
}

}  // namespace detail

// Randomization drawn in a fixed order so a run seed pins the whole setup.
inline RunSetup randomized_setup(const SimConfig& cfg, std::uint64_t run_seed,
                                 double mass_sigma) {
  std::mt19937_64 rng(run_seed);
  std::normal_distribution<double> n(0.0, 1.0);
  RunSetup s;
  s.plant = cfg.vehicle;
  s.init.pose.C = exp_so3(detail::normal3(rng, cfg.mc_att_sigma));
  s.init.pose.r = cfg.init_position + detail::normal3(rng, cfg.mc_pos_sigma);
  s.init.pose.v = cfg.mc_init_velocity_mean + detail::normal3(rng, cfg.mc_vel_sigma);
  s.init.omega = detail::normal3(rng, cfg.mc_omega_sigma);
  s.wind_mean = cfg.mc_wind_mean + detail::normal3(rng, cfg.mc_wind_sigma);
  s.w0 = std::max(0.0, cfg.mc_w0_mean + cfg.mc_w0_sigma * n(rng));
  s.estimated = cfg.vehicle;
  s.estimated.mass_kg =
      std::max(1.0, cfg.vehicle.mass_kg + mass_sigma * n(rng));
  const Mat3 c_pert = exp_so3(detail::normal3(rng, cfg.mc_inertia_rot_sigma));
  s.estimated.inertia = c_pert.transpose() * cfg.vehicle.inertia * c_pert;
  s.noise_seed = rng();
  return s;
}

struct SolverFailure : std::runtime_error {
  SolverFailure() : std::runtime_error("qp solver failed three consecutive steps") {}
};

inline RunLog run_with_setup(const SimConfig& cfg, const RunSetup& setup) {
  const auto wall_start = std::chrono::steady_clock::now();
  const double dt = cfg.ctrl_dt();
  const double sub_dt = dt / cfg.plant_substeps;
  const auto horizon = schedule_times(cfg.schedule);
  const int n = cfg.schedule.total_steps();
  const int n_u = cfg.schedule.control_horizon;
  const double span = cfg.schedule.span();

  mpc::ConstraintConfig constraints = cfg.constraints;
  if (constraints.constraint_steps.empty()) {
    constraints.constraint_steps = mpc::default_constraint_steps(cfg.schedule);
  }
  guidance::GuidanceConfig gcfg = cfg.guidance;
  gcfg.dt_base = dt;
  gcfg.u_min = constraints.u_min;
  gcfg.u_max = constraints.u_max;

  const qp::SolveOptions qp_opts{cfg.qp_tol, cfg.qp_max_iter};
  const VehicleParams& p_true = setup.plant;
  const VehicleParams& p_hat = setup.estimated;

  VehicleState x = setup.init;
  WindState wind;
  wind.mean_wind = setup.wind_mean;
  wind.intensity_w0 = setup.w0;
  wind.altitude_m = cfg.dryden_altitude_m;
  wind.airspeed_mps = cfg.dryden_airspeed_mps;
  std::mt19937_64 noise_rng(setup.noise_seed);

  DisturbanceEstimate est(cfg.dist_window);

  ControlInput hover{p_hat.mass_kg * p_hat.gravity, Vec3::Zero()};
  auto modeled_accel = [&](const VehicleState& s, const ControlInput& u) {
    return dynamics_deriv(s, u, Vec3::Zero(), p_hat).v_dot + est.dhat / dt;
  };
  auto plan = [&](double t_now, const ControlInput& u_now) {
    gcfg.tail_s = (cfg.duration_cap_s - t_now) + span + 1.0;
    return guidance::replan(x, modeled_accel(x, u_now), cfg.target, est.dhat,
                            p_hat, gcfg, t_now);
  };

  guidance::ReferenceTrajectory traj = plan(0.0, hover);
  ControlInput prev_u = traj.at(0.0).u_r;

  RunLog log;
  log.summary.run_seed = setup.noise_seed;
  const int max_steps = static_cast<int>(std::ceil(cfg.duration_cap_s / dt));
  log.records.reserve(max_steps);

  std::vector<double> l1_since_replan;
  l1_since_replan.reserve(max_steps);
  int consecutive_failures = 0;
  int next_replan_flag = 0;
  bool aborted = false;

  for (int k = 0; k < max_steps; ++k) {
    const double t = k * dt;
    if ((x.pose.r - cfg.target.r_ref).norm() < cfg.capture_pos_m &&
        x.pose.v.norm() < cfg.capture_vel_mps) {
      log.summary.reached = true;
      log.summary.time_to_target = t;
      break;
    }

    StepRecord rec;
    rec.t = t;
    rec.r = x.pose.r;
    rec.v = x.pose.v;
    rec.phi = log_so3(x.pose.C);
    rec.omega = x.omega;
    rec.dhat = est.dhat;
    rec.replan = next_replan_flag;
    next_replan_flag = 0;
    rec.kiz_nonlinear = constraints.x1_b.dot(x.pose.C.transpose() * constraints.y1_a) -
                        std::cos(constraints.alpha);

    bool failure = false;
    ControlInput u = prev_u;
    try {
      const ReferencePoint& ref0 = traj.at(t);
      rec.err = error_state(x, ref0, p_hat);

      std::vector<ReferencePoint> refs(n + 1);
      for (int i = 0; i < n; ++i) refs[i] = traj.at(t + horizon[i].t_offset);
      refs[n] = traj.at(t + span);
      std::vector<LinearizedModel> models(n);
      for (int i = 0; i < n; ++i) {
        const auto [a, b] = linearize_continuous(refs[i], p_hat);
        models[i] = discretize(a, b, horizon[i].dt);
      }

      const mpc::QpProblem qp_prob = mpc::assemble(
          rec.err, models, refs, cfg.weights, constraints, cfg.schedule);
      const qp::QpSolution sol =
          qp::solve(qp_prob.H, qp_prob.F, qp_prob.G, qp_prob.W, qp_opts);
      rec.qp_iters = sol.iterations;
      rec.qp_kkt = std::max({sol.kkt.stationarity, sol.kkt.primal,
                             sol.kkt.complementarity});
      if (sol.status == qp::Status::Optimal) {
        u = mpc::first_input(sol.x, qp_prob.layout, ref0, rec.err);
        rec.du = sol.x.head<4>();
        rec.eps1 = sol.x(qp_prob.layout.eps1);
        rec.eps2 = sol.x(qp_prob.layout.eps2);
        rec.row_violation =
            (qp_prob.G * sol.x - qp_prob.W).maxCoeff();
      } else {
        failure = true;
      }
    } catch (const AngleNearPi&) {
      failure = true;
    } catch (const qp::NumericalBreakdown&) {
      failure = true;
    } catch (const mpc::InfeasibleBounds&) {
      failure = true;
    }

    if (failure) {
      rec.qp_ok = false;
      ++log.summary.solver_failures;
      ++consecutive_failures;
      if (consecutive_failures >= 3) {
        log.records.push_back(rec);
        aborted = true;
        break;
      }
    } else {
      consecutive_failures = 0;
    }

    // Hard input bound regardless of QP outcome.
    const Eigen::Vector4d u_clamped = u.as_vector()
                                          .cwiseMax(constraints.u_min)
                                          .cwiseMin(constraints.u_max);
    u = ControlInput::from_vector(u_clamped);
    rec.u = u;
    log.records.push_back(rec);
    log.summary.max_kkt = std::max(log.summary.max_kkt, rec.qp_kkt);

    const VehicleState x_before = x;
    for (int s = 0; s < cfg.plant_substeps; ++s) {
      wind = dryden_step(wind, sub_dt, noise_rng);
      x = step_rk4(x, u, wind.total(), p_true, sub_dt);
    }
    est = estimate_disturbance(x_before, u, x, p_hat, est, dt);
    prev_u = u;

    l1_since_replan.push_back(rec.err.xi_phi.lpNorm<1>());
    const bool monitor = replan_monitor(l1_since_replan, dt, constraints.gamma,
                                        cfg.replan_threshold_s);
    if (monitor || failure) {
      ReplanEvent ev;
      ev.t = t + dt;
      ev.forced = !monitor && failure;
      int active = 0;
      for (auto it = l1_since_replan.rbegin(); it != l1_since_replan.rend(); ++it) {
        if (*it >= constraints.gamma - 1e-6) ++active;
        else break;
      }
      ev.active_duration_s = active > 0 ? (active - 1) * dt : 0.0;
      traj = plan(t + dt, u);
      l1_since_replan.clear();
      next_replan_flag = 1;
      if (monitor) ++log.summary.replans;
      log.replan_events.push_back(ev);
    }
  }

  // Channel RMSE over the run, feedback inputs included.
  double s_att = 0.0, s_vel = 0.0, s_pos = 0.0, s_df = 0.0, s_dm = 0.0;
  for (const auto& r : log.records) {
    s_att += r.err.xi_phi.squaredNorm();
    s_vel += r.err.xi_v.squaredNorm();
    s_pos += r.err.xi_r.squaredNorm();
    s_df += r.du(0) * r.du(0);
    s_dm += r.du.tail<3>().squaredNorm();
  }
  const double inv = log.records.empty() ? 0.0 : 1.0 / log.records.size();
  log.summary.rmse_att = std::sqrt(s_att * inv);
  log.summary.rmse_vel = std::sqrt(s_vel * inv);
  log.summary.rmse_pos = std::sqrt(s_pos * inv);
  log.summary.rmse_df = std::sqrt(s_df * inv);
  log.summary.rmse_dm = std::sqrt(s_dm * inv);
  log.summary.steps = static_cast<int>(log.records.size());
  if (!log.summary.reached) log.summary.time_to_target = cfg.duration_cap_s;
  if (aborted) log.summary.time_to_target = cfg.duration_cap_s;
  log.summary.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
          .count();
  return log;
}

inline RunLog run_closed_loop(const SimConfig& cfg) {
  return run_with_setup(cfg, nominal_setup(cfg));
}

// Monte Carlo batch; per-run seeds derive from the batch seed and the run
// index, so results are reproducible and independent of scheduling. The
// optional sink receives logs in run order.
inline std::vector<RunSummary> monte_carlo(
    const SimConfig& cfg, int n_runs, std::uint64_t seed,
    const std::function<void(int, const RunLog&)>& sink = nullptr) {
  std::vector<RunSummary> out(n_runs);
  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(n_runs)));
  std::vector<RunLog> logs(sink ? n_runs : 0);
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int i = next.fetch_add(1); i < n_runs; i = next.fetch_add(1)) {
      const std::uint64_t run_seed = detail::splitmix64(seed ^ (0x5851f42d4c957f2dULL * (i + 1)));
      const RunSetup setup = randomized_setup(cfg, run_seed, cfg.mc_mass_sigma);
      RunLog log = run_with_setup(cfg, setup);
      log.summary.run_seed = run_seed;
      out[i] = log.summary;
      if (sink) logs[i] = std::move(log);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (sink) {
    for (int i = 0; i < n_runs; ++i) sink(i, logs[i]);
  }
  return out;
}

struct CaseStats {
  double rmse_att = 0.0, rmse_vel = 0.0, rmse_pos = 0.0;
  double rmse_df = 0.0, rmse_dm = 0.0;
  double time_to_target = 0.0;
  double replans = 0.0;
  int reached = 0;
  int runs = 0;
};

struct CompareReport {
  CaseStats case1;  // configured (non-uniform) schedule
  CaseStats case2;  // alternate (uniform) schedule
  // percentage change of case1 relative to case2, (c1 - c2) / c2 * 100
  double d_att = 0.0, d_vel = 0.0, d_pos = 0.0, d_df = 0.0, d_dm = 0.0;
  double d_time = 0.0, d_replans = 0.0;
};

inline CaseStats accumulate_stats(const std::vector<RunSummary>& runs) {
  CaseStats s;
  s.runs = static_cast<int>(runs.size());
  for (const auto& r : runs) {
    s.rmse_att += r.rmse_att;
    s.rmse_vel += r.rmse_vel;
    s.rmse_pos += r.rmse_pos;
    s.rmse_df += r.rmse_df;
    s.rmse_dm += r.rmse_dm;
    s.time_to_target += r.time_to_target;
    s.replans += r.replans;
    s.reached += r.reached ? 1 : 0;
  }
  if (s.runs > 0) {
    const double inv = 1.0 / s.runs;
    s.rmse_att *= inv;
    s.rmse_vel *= inv;
    s.rmse_pos *= inv;
    s.rmse_df *= inv;
    s.rmse_dm *= inv;
    s.time_to_target *= inv;
    s.replans *= inv;
  }
  return s;
}

// Matched-seed comparison of the configured schedule against the uniform
// alternate. Mass variation follows compare_mass_sigma.
inline CompareReport compare_horizons(const SimConfig& cfg, int n_runs,
                                      std::uint64_t seed) {
  std::vector<RunSummary> r1(n_runs), r2(n_runs);
  SimConfig cfg1 = cfg;
  SimConfig cfg2 = cfg;
  cfg2.schedule = cfg.schedule_alt;
  cfg2.constraints.constraint_steps.clear();

  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(n_runs)));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int i = next.fetch_add(1); i < n_runs; i = next.fetch_add(1)) {
      const std::uint64_t run_seed = detail::splitmix64(seed ^ (0x5851f42d4c957f2dULL * (i + 1)));
      const RunSetup setup = randomized_setup(cfg, run_seed, cfg.compare_mass_sigma);
      r1[i] = run_with_setup(cfg1, setup).summary;
      r2[i] = run_with_setup(cfg2, setup).summary;
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  CompareReport rep;
  rep.case1 = accumulate_stats(r1);
  rep.case2 = accumulate_stats(r2);
  auto pct = [](double a, double b) { return b != 0.0 ? (a - b) / b * 100.0 : 0.0; };
  rep.d_att = pct(rep.case1.rmse_att, rep.case2.rmse_att);
  rep.d_vel = pct(rep.case1.rmse_vel, rep.case2.rmse_vel);
  rep.d_pos = pct(rep.case1.rmse_pos, rep.case2.rmse_pos);
  rep.d_df = pct(rep.case1.rmse_df, rep.case2.rmse_df);
  rep.d_dm = pct(rep.case1.rmse_dm, rep.case2.rmse_dm);
  rep.d_time = pct(rep.case1.time_to_target, rep.case2.time_to_target);
  rep.d_replans = pct(rep.case1.replans, rep.case2.replans);
  return rep;
}

inline constexpr const char* kCsvHeader =
    "t,rx,ry,rz,vx,vy,vz,phi1,phi2,phi3,wx,wy,wz,f,m1,m2,m3,"
    "exi_phi1,exi_phi2,exi_phi3,exi_v1,exi_v2,exi_v3,exi_r1,exi_r2,exi_r3,"
    "dh1,dh2,dh3,eps1,eps2,replan";

inline void write_csv(std::ostream& os, const RunLog& log) {
  os << kCsvHeader << "\n";
  os.precision(10);
  for (const auto& r : log.records) {
    os << r.t;
    auto put3 = [&os](const Vec3& v) { os << ',' << v.x() << ',' << v.y() << ',' << v.z(); };
    put3(r.r);
    put3(r.v);
    put3(r.phi);
    put3(r.omega);
    os << ',' << r.u.thrust_n;
    os << ',' << r.u.torque_nm.x() << ',' << r.u.torque_nm.y() << ','
       << r.u.torque_nm.z();
    put3(r.err.xi_phi);
    put3(r.err.xi_v);
    put3(r.err.xi_r);
    put3(r.err.dh);
    os << ',' << r.eps1 << ',' << r.eps2 << ',' << r.replan << "\n";
  }
}

}  // namespace tandem::sim
