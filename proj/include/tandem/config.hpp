// Simulation configuration: every experiment parameter with its default,
// overridable from a plain key = value config file.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tandem/guidance.hpp"
#include "tandem/mpc.hpp"

namespace tandem::sim {

struct SimConfig {
  VehicleParams vehicle;

  Vec3 init_position{-30.0, -5.0, -20.0};
  Vec3 init_velocity{5.0, 0.0, -0.5};
  Vec3 init_attitude = Vec3::Zero();  // log coordinates of C_ab0
  Vec3 init_omega = Vec3::Zero();

  guidance::FlatOutput target;  // origin, zero heading

  Vec3 wind_mean{0.0, -5.0, 0.0};
  double dryden_w0 = 10.0;
  double dryden_altitude_m = 20.0;
  double dryden_airspeed_mps = 5.0;

  HorizonSchedule schedule{{{0.04, 24}, {0.16, 12}, {0.64, 12}}, 10};
  HorizonSchedule schedule_alt{{{0.02, 48}}, 10};  // uniform comparison case

  mpc::CostWeights weights;
  mpc::ConstraintConfig constraints;  // constraint_steps derived from schedule
  guidance::GuidanceConfig guidance;

  double ctrl_rate_hz = 50.0;
  int plant_substeps = 4;
  double duration_cap_s = 60.0;
  double capture_pos_m = 0.5;
  double capture_vel_mps = 0.5;
  double replan_threshold_s = 0.4;
  int dist_window = 25;

  double qp_tol = 1e-8;
  int qp_max_iter = 50;

  // Monte Carlo distributions
  double mc_att_sigma = 0.116;
  double mc_pos_sigma = 1.0;
  double mc_vel_sigma = 0.333;
  Vec3 mc_init_velocity_mean{5.0, 0.0, 0.5};
  double mc_omega_sigma = 0.029;
  Vec3 mc_wind_mean{0.0, -3.0, 0.0};
  double mc_wind_sigma = 1.667;
  double mc_w0_mean = 10.0;
  double mc_w0_sigma = 1.0;
  double mc_mass_sigma = 10.0;
  double mc_inertia_rot_sigma = 0.044;
  double compare_mass_sigma = 2.0;

  std::uint64_t seed = 1;

  double ctrl_dt() const { return 1.0 / ctrl_rate_hz; }

  void validate() const {
    if (ctrl_rate_hz <= 0.0) throw std::invalid_argument("ctrl_rate_hz must be > 0");
    if (duration_cap_s <= 0.0) throw std::invalid_argument("duration_cap_s must be > 0");
    if (plant_substeps < 1) throw std::invalid_argument("plant_substeps must be >= 1");
    if (schedule.total_steps() < 1 || schedule.control_horizon < 1 ||
        schedule.control_horizon > schedule.total_steps()) {
      throw std::invalid_argument("invalid horizon schedule");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// key = value file; '#' starts a comment, vectors are whitespace-separated,
// horizon schedules are dt:count pairs like "0.04:24 0.16:12 0.64:12".
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(std::istream& is) {
    ConfigMap cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": expected key = value");
      }
      cfg.values_[detail::trim(line.substr(0, eq))] =
          detail::trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static ConfigMap parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    return parse(is);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double scalar(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stod(it->second);
  }
  int integer(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stoi(it->second);
  }
  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : std::stoull(it->second);
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    const auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::istringstream ss(it->second);
    double v;
    while (ss >> v) out.push_back(v);
    return out;
  }

  Vec3 vec3(const std::string& key, const Vec3& fallback) const {
    const auto v = numbers(key);
    if (v.empty()) return fallback;
    if (v.size() != 3) throw std::runtime_error(key + ": expected 3 numbers");
    return Vec3(v[0], v[1], v[2]);
  }
  Eigen::Vector4d vec4(const std::string& key, const Eigen::Vector4d& fallback) const {
    const auto v = numbers(key);
    if (v.empty()) return fallback;
    if (v.size() != 4) throw std::runtime_error(key + ": expected 4 numbers");
    return Eigen::Vector4d(v[0], v[1], v[2], v[3]);
  }
  Mat12 diag12(const std::string& key, const Mat12& fallback) const {
    const auto v = numbers(key);
    if (v.empty()) return fallback;
    if (v.size() != 12) throw std::runtime_error(key + ": expected 12 numbers");
    Vec12 d;
    for (int i = 0; i < 12; ++i) d(i) = v[i];
    return d.asDiagonal();
  }
  Eigen::Matrix4d diag4(const std::string& key, const Eigen::Matrix4d& fallback) const {
    const auto v = numbers(key);
    if (v.empty()) return fallback;
    if (v.size() != 4) throw std::runtime_error(key + ": expected 4 numbers");
    return Eigen::Vector4d(v[0], v[1], v[2], v[3]).asDiagonal();
  }
  Mat3 diag3(const std::string& key, const Mat3& fallback) const {
    const auto v = numbers(key);
    if (v.empty()) return fallback;
    if (v.size() != 3) throw std::runtime_error(key + ": expected 3 numbers");
    return Vec3(v[0], v[1], v[2]).asDiagonal();
  }

  HorizonSchedule schedule(const std::string& key,
                           const HorizonSchedule& fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    HorizonSchedule s;
    s.control_horizon = fallback.control_horizon;
    std::istringstream ss(it->second);
    std::string tok;
    while (ss >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) {
        throw std::runtime_error(key + ": expected dt:count pairs");
      }
      s.segments.push_back({std::stod(tok.substr(0, colon)),
                            std::stoi(tok.substr(colon + 1))});
    }
    if (s.segments.empty()) return fallback;
    return s;
  }

 private:
  std::map<std::string, std::string> values_;
};

inline SimConfig apply_config(const ConfigMap& c) {
  SimConfig s;
  s.vehicle.mass_kg = c.scalar("mass_kg", s.vehicle.mass_kg);
  s.vehicle.inertia = c.diag3("inertia_diag", s.vehicle.inertia);
  s.vehicle.drag_force = c.diag3("drag_force_diag", s.vehicle.drag_force);
  s.vehicle.drag_torque_E = c.diag3("drag_torque_e_diag", s.vehicle.drag_torque_E);
  s.vehicle.drag_torque_F = c.diag3("drag_torque_f_diag", s.vehicle.drag_torque_F);
  s.vehicle.gravity = c.scalar("gravity", s.vehicle.gravity);
  s.vehicle.rotor_arm_m = c.scalar("rotor_arm_m", s.vehicle.rotor_arm_m);

  s.init_position = c.vec3("init_position", s.init_position);
  s.init_velocity = c.vec3("init_velocity", s.init_velocity);
  s.init_attitude = c.vec3("init_attitude", s.init_attitude);
  s.init_omega = c.vec3("init_omega", s.init_omega);
  s.target.r_ref = c.vec3("target_position", s.target.r_ref);
  s.target.psi_ref = c.scalar("target_heading_rad", s.target.psi_ref);

  s.wind_mean = c.vec3("wind_mean", s.wind_mean);
  s.dryden_w0 = c.scalar("dryden_w0", s.dryden_w0);
  s.dryden_altitude_m = c.scalar("dryden_altitude_m", s.dryden_altitude_m);
  s.dryden_airspeed_mps = c.scalar("dryden_airspeed_mps", s.dryden_airspeed_mps);

  s.schedule = c.schedule("horizon_segments", s.schedule);
  s.schedule_alt = c.schedule("horizon_segments_alt", s.schedule_alt);
  s.schedule.control_horizon =
      c.integer("control_horizon", s.schedule.control_horizon);
  s.schedule_alt.control_horizon = s.schedule.control_horizon;

  s.weights.Q = c.diag12("q_diag", s.weights.Q);
  s.weights.R = c.diag4("r_diag", s.weights.R);
  s.weights.P_term = c.has("p_term_diag") ? c.diag12("p_term_diag", s.weights.P_term)
                                          : c.diag12("q_diag", s.weights.P_term);
  s.weights.w_kiz = c.scalar("slack_weight_kiz", s.weights.w_kiz);
  s.weights.w_l1 = c.scalar("slack_weight_l1", s.weights.w_l1);

  s.constraints.alpha = c.scalar("alpha_rad", s.constraints.alpha);
  s.constraints.gamma = c.scalar("gamma_rad", s.constraints.gamma);
  s.constraints.u_min = c.vec4("u_min", s.constraints.u_min);
  s.constraints.u_max = c.vec4("u_max", s.constraints.u_max);

  s.guidance.accel_limit_mps2 = c.scalar("accel_limit_mps2", s.guidance.accel_limit_mps2);
  s.guidance.q_lqr = c.diag12("lqr_q_diag", s.guidance.q_lqr);
  s.guidance.r_lqr = c.diag4("lqr_r_diag", s.guidance.r_lqr);
  s.guidance.p_lqr = c.has("lqr_p_diag") ? c.diag12("lqr_p_diag", s.guidance.p_lqr)
                                         : c.diag12("lqr_q_diag", s.guidance.p_lqr);
  s.guidance.u_min = s.constraints.u_min;
  s.guidance.u_max = s.constraints.u_max;

  s.ctrl_rate_hz = c.scalar("ctrl_rate_hz", s.ctrl_rate_hz);
  s.plant_substeps = c.integer("plant_substeps", s.plant_substeps);
  s.duration_cap_s = c.scalar("duration_cap_s", s.duration_cap_s);
  s.capture_pos_m = c.scalar("capture_pos_m", s.capture_pos_m);
  s.capture_vel_mps = c.scalar("capture_vel_mps", s.capture_vel_mps);
  s.replan_threshold_s = c.scalar("replan_threshold_s", s.replan_threshold_s);
  s.dist_window = c.integer("dist_window", s.dist_window);
  s.qp_tol = c.scalar("qp_tol", s.qp_tol);
  s.qp_max_iter = c.integer("qp_max_iter", s.qp_max_iter);

  s.mc_att_sigma = c.scalar("mc_att_sigma", s.mc_att_sigma);
  s.mc_pos_sigma = c.scalar("mc_pos_sigma", s.mc_pos_sigma);
  s.mc_vel_sigma = c.scalar("mc_vel_sigma", s.mc_vel_sigma);
  s.mc_init_velocity_mean = c.vec3("mc_init_velocity_mean", s.mc_init_velocity_mean);
  s.mc_omega_sigma = c.scalar("mc_omega_sigma", s.mc_omega_sigma);
  s.mc_wind_mean = c.vec3("mc_wind_mean", s.mc_wind_mean);
  s.mc_wind_sigma = c.scalar("mc_wind_sigma", s.mc_wind_sigma);
  s.mc_w0_mean = c.scalar("mc_w0_mean", s.mc_w0_mean);
  s.mc_w0_sigma = c.scalar("mc_w0_sigma", s.mc_w0_sigma);
  s.mc_mass_sigma = c.scalar("mc_mass_sigma", s.mc_mass_sigma);
  s.mc_inertia_rot_sigma = c.scalar("mc_inertia_rot_sigma", s.mc_inertia_rot_sigma);
  s.compare_mass_sigma = c.scalar("compare_mass_sigma", s.compare_mass_sigma);
  s.seed = c.u64("seed", s.seed);

  s.validate();
  return s;
}

inline SimConfig load_config(const std::string& path) {
  return apply_config(ConfigMap::parse_file(path));
}

}  // namespace tandem::sim
